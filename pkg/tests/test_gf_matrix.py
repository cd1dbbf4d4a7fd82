import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from piggymsr.gf_matrix import (FieldElement, FieldMatrix, FieldMismatchError, PermDiagMatrix,
                                SingularMatrixError, clmul_mod, field, gf_inv, gf_mul, mat_mul,
                                mat_solve, pd_apply)


def test_mul_example_reduces_by_polynomial():
    assert gf_mul(FieldElement(0x80, 8), FieldElement(0x02, 8)) == FieldElement(0x1D, 8)
    assert clmul_mod(0x80, 0x02, 8) == 0x1D


@pytest.mark.parametrize("w", [8, 16])
def test_identity_and_zero(w):
    gf = field(w)
    a = np.arange(1, 1 << min(w, 12), dtype=np.int64)
    assert np.array_equal(gf.mul(a, 1), a)
    assert not gf.mul(a, 0).any()
    assert int(gf.inv(1)) == 1


def test_table_mul_matches_carryless_gf256_exhaustive():
    gf = field(8)
    a, b = np.meshgrid(np.arange(256), np.arange(256), indexing="ij")
    got = gf.mul(a, b)
    # reference row by row: product with b is linear over GF(2) in a
    ref = np.zeros((256, 256), dtype=np.int64)
    for y in range(256):
        basis = [clmul_mod(1 << bit, y, 8) for bit in range(8)]
        for x in range(256):
            acc = 0
            for bit in range(8):
                if x >> bit & 1:
                    acc ^= basis[bit]
            ref[x, y] = acc
    assert np.array_equal(got, ref)


def test_table_mul_matches_carryless_gf65536_sampled(rng):
    gf = field(16)
    a = rng.integers(0, 1 << 16, 3000)
    b = rng.integers(0, 1 << 16, 3000)
    got = gf.mul(a, b)
    assert all(int(g) == clmul_mod(int(x), int(y), 16) for g, x, y in zip(got, a, b))


def test_gf256_inverses_exhaustive():
    gf = field(8)
    a = np.arange(1, 256)
    inv = gf.inv(a)
    assert np.all(gf.mul(a, inv) == 1)
    assert len(set(inv.tolist())) == 255


def test_gf65536_inverses_exhaustive():
    gf = field(16)
    a = np.arange(1, 1 << 16)
    assert np.all(gf.mul(a, gf.inv(a)) == 1)


@pytest.mark.parametrize("w", [8, 16])
def test_inverse_of_zero_raises(w):
    with pytest.raises(ZeroDivisionError):
        field(w).inv(np.array([3, 0]))


@pytest.mark.parametrize("w", [8, 16])
def test_distributivity_and_associativity(w, rng):
    gf = field(w)
    a, b, c = (gf.random(rng, 10_000) for _ in range(3))
    assert np.array_equal(gf.mul(a, b ^ c), gf.mul(a, b) ^ gf.mul(a, c))
    assert np.array_equal(gf.mul(gf.mul(a, b), c), gf.mul(a, gf.mul(b, c)))
    assert np.array_equal(gf.mul(a, b), gf.mul(b, a))


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 255), st.integers(1, 255))
def test_division_undoes_multiplication(a, b):
    x, y = FieldElement(a, 8), FieldElement(b, 8)
    assert (x * y) / y == x
    assert gf_inv(gf_inv(x)) == x


def test_mixed_widths_rejected():
    with pytest.raises(FieldMismatchError):
        FieldElement(3, 8) * FieldElement(3, 16)
    with pytest.raises(FieldMismatchError):
        mat_mul(FieldMatrix.identity(2, 8), FieldMatrix.identity(2, 16))


def test_element_range_checked():
    with pytest.raises(ValueError):
        FieldElement(256, 8)


def _random_invertible(gf, rng, n):
    while True:
        a = gf.random(rng, (n, n))
        if gf.rank(a) == n:
            return a


@pytest.mark.parametrize("w", [8, 16])
def test_solve_round_trips(w, rng):
    gf = field(w)
    for _ in range(50):
        n = int(rng.integers(1, 12))
        a = FieldMatrix(_random_invertible(gf, rng, n), w)
        x = FieldMatrix(gf.random(rng, (n, 3)), w)
        assert mat_solve(a, a @ x) == x


def test_identity_solves_to_itself():
    eye = FieldMatrix.identity(5, 16)
    assert mat_solve(eye, eye) == eye


def test_inverse_via_identity_right_hand_side(rng):
    gf = field(8)
    a = _random_invertible(gf, rng, 6)
    inv = gf.solve(a, np.eye(6, dtype=np.int64))
    assert np.array_equal(gf.matmul(a, inv), np.eye(6, dtype=np.int64))
    assert np.array_equal(gf.matmul(inv, a), np.eye(6, dtype=np.int64))


def test_singular_reports_rank():
    gf = field(8)
    a = np.array([[1, 2, 3], [2, 4, 6], [0, 0, 0]])
    a[1] = gf.mul(a[0], 7)
    with pytest.raises(SingularMatrixError) as info:
        gf.solve(a, np.eye(3, dtype=np.int64))
    assert info.value.rank == 1
    assert gf.rank(a) == 1


def test_zero_matrix_is_singular():
    with pytest.raises(SingularMatrixError):
        mat_solve(FieldMatrix.zeros(3, 3, 8), FieldMatrix.identity(3, 8))


def test_batched_matvec_matches_loop(rng):
    gf = field(16)
    m = gf.random(rng, (4, 5, 5))
    y = gf.random(rng, (2, 3, 4, 5))
    got = gf.batched_matvec(m, y)
    for idx in np.ndindex(2, 3):
        for c in range(4):
            assert np.array_equal(got[idx + (c,)], gf.matmul(m[c], y[idx + (c,)][:, None])[:, 0])


@pytest.mark.parametrize("w", [8, 16])
def test_perm_diag_apply_matches_dense(w, rng):
    gf = field(w)
    for _ in range(100):
        n = int(rng.integers(1, 257))
        pd = PermDiagMatrix(rng.permutation(n), gf.random(rng, n, nonzero=True), w)
        v = gf.random(rng, n)
        dense = gf.matmul(pd.to_dense().data, v[:, None])[:, 0]
        assert np.array_equal(pd_apply(pd, v), dense)


def test_perm_diag_batched(rng):
    gf = field(16)
    pd = PermDiagMatrix(rng.permutation(9), gf.random(rng, 9, nonzero=True), 16)
    v = gf.random(rng, (4, 2, 9))
    out = pd.apply(v)
    for idx in np.ndindex(4, 2):
        assert np.array_equal(out[idx], pd.apply(v[idx]))


def test_perm_diag_rejects_zero_scale_and_bad_perm():
    with pytest.raises(ValueError):
        PermDiagMatrix(np.arange(3), np.array([1, 0, 2]), 8)
    with pytest.raises(ValueError):
        PermDiagMatrix(np.array([0, 0, 1]), np.array([1, 1, 1]), 8)
