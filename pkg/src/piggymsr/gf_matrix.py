"""Arithmetic over GF(2^w) for w in {8, 16} and the linear algebra built on it.

Symbols are plain unsigned integers held in numpy arrays (``uint8`` for w=8,
``uint16`` for w=16).  Multiplication goes through log/antilog tables that are
built once per field and checked against the carry-less polynomial product.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

POLYNOMIALS = {8: 0x11D, 16: 0x1100B}


class FieldMismatchError(ValueError):
    """Operands come from fields of different widths."""


class SingularMatrixError(ArithmeticError):
    def __init__(self, rank: int, size: int):
        super().__init__(f"singular matrix: rank {rank} < {size}")
        self.rank = rank
        self.size = size


def clmul_mod(a: int, b: int, w: int) -> int:
    """Reference product: shift-and-add multiply, reduced by the field polynomial."""
    poly = POLYNOMIALS[w]
    top = 1 << w
    out = 0
    while b:
        if b & 1:
            out ^= a
        b >>= 1
        a <<= 1
        if a & top:
            a ^= poly
    return out


class GaloisField:
    """GF(2^w) with vectorised multiply/divide over numpy arrays."""

    def __init__(self, w: int):
        if w not in POLYNOMIALS:
            raise ValueError(f"unsupported field width {w}; expected 8 or 16")
        self.w = w
        self.order = 1 << w
        self.poly = POLYNOMIALS[w]
        self.dtype = np.dtype(np.uint8 if w == 8 else np.uint16)
        n = self.order - 1
        exp = np.zeros(2 * n + 1, dtype=np.int64)
        log = np.full(self.order, -1, dtype=np.int64)
        x = 1
        for i in range(n):
            exp[i] = x
            log[x] = i
            x <<= 1
            if x & self.order:
                x ^= self.poly
        if x != 1 or np.count_nonzero(log >= 0) != n:
            raise RuntimeError(f"polynomial {self.poly:#x} is not primitive")
        exp[n : 2 * n] = exp[:n]
        # log(0) is mapped to a sentinel that indexes a zero slot in _exp_z
        self._zero_log = 2 * n
        exp_z = np.zeros(4 * n + 1, dtype=self.dtype)
        exp_z[: 2 * n] = exp[: 2 * n]
        log_z = log.copy()
        log_z[0] = self._zero_log
        self._exp = exp_z
        self._log = log_z
        self._n = n
        self._exp.setflags(write=False)
        self._log.setflags(write=False)

    def __repr__(self) -> str:
        return f"GaloisField(w={self.w})"

    def asarray(self, a) -> np.ndarray:
        arr = np.asarray(a)
        if arr.dtype != self.dtype:
            if np.any(arr < 0) or np.any(arr >= self.order):
                raise ValueError(f"values out of range for GF(2^{self.w})")
            arr = arr.astype(self.dtype)
        return arr

    def random(self, rng: np.random.Generator, shape, nonzero: bool = False) -> np.ndarray:
        low = 1 if nonzero else 0
        return rng.integers(low, self.order, size=shape, dtype=np.int64).astype(self.dtype)

    def log(self, a) -> np.ndarray:
        return self._log[np.asarray(a)]

    def mul(self, a, b) -> np.ndarray:
        return self._exp[self._log[np.asarray(a)] + self._log[np.asarray(b)]]

    def mul_logs(self, la: np.ndarray, lb: np.ndarray) -> np.ndarray:
        return self._exp[la + lb]

    def inv(self, a) -> np.ndarray:
        a = np.asarray(a)
        if np.any(a == 0):
            raise ZeroDivisionError("inverse of zero in GF(2^w)")
        return self._exp[self._n - self._log[a]]

    def div(self, a, b) -> np.ndarray:
        b = np.asarray(b)
        if np.any(b == 0):
            raise ZeroDivisionError("division by zero in GF(2^w)")
        la = self._log[np.asarray(a)]
        # zero numerators keep the sentinel so they map to zero
        lq = np.where(la == self._zero_log, self._zero_log, la + self._n - self._log[b])
        return self._exp[lq]

    def matmul(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Matrix product of 2-D arrays; ``b`` may carry extra trailing columns."""
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ValueError(f"shape mismatch {a.shape} @ {b.shape}")
        out = np.zeros((a.shape[0], b.shape[1]), dtype=self.dtype)
        la = self._log[a]
        lb = self._log[b]
        for q in range(a.shape[1]):
            out ^= self._exp[la[:, q, None] + lb[None, q, :]]
        return out

    def batched_matvec(self, m: np.ndarray, y: np.ndarray) -> np.ndarray:
        """``out[..., c, :] = m[c] @ y[..., c, :]`` for a stack of square matrices."""
        lm = self._log[m]
        ly = self._log[y]
        out = np.zeros(y.shape[:-1] + (m.shape[1],), dtype=self.dtype)
        for q in range(m.shape[2]):
            out ^= self._exp[lm[:, :, q] + ly[..., :, q, None]]
        return out

    def solve(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Solve ``a @ x = b`` by Gauss-Jordan elimination with first-nonzero pivoting.

        ``b`` is a 2-D right-hand side (pass the identity to invert ``a``).
        Raises SingularMatrixError carrying the rank found.
        """
        a = np.array(a, dtype=self.dtype)
        b = np.array(b, dtype=self.dtype)
        n = a.shape[0]
        if a.ndim != 2 or a.shape[1] != n:
            raise ValueError(f"solve needs a square matrix, got {a.shape}")
        if b.ndim != 2 or b.shape[0] != n:
            raise ValueError(f"right-hand side shape {b.shape} does not match {a.shape}")
        aug = np.concatenate([a, b], axis=1)
        rank = 0
        singular = False
        for col in range(n):
            nz = np.flatnonzero(aug[rank:, col])
            if nz.size == 0:
                singular = True
                continue
            piv = rank + nz[0]
            if piv != rank:
                aug[[rank, piv]] = aug[[piv, rank]]
            lp = self._log[aug[rank, col]]
            # columns left of ``col`` are already zero in the pivot row
            row = aug[rank, col:]
            lrow = self._log[row]
            nz = lrow != self._zero_log
            lrow[nz] = (lrow[nz] + (self._n - lp)) % self._n
            aug[rank, col:] = self._exp[lrow]
            rows = np.flatnonzero(aug[:, col])
            rows = rows[rows != rank]
            if rows.size:
                lf = self._log[aug[rows, col]]
                aug[rows, col:] ^= self._exp[lf[:, None] + lrow[None, :]]
            rank += 1
        if singular:
            raise SingularMatrixError(rank, n)
        return aug[:, n:]

    def rank(self, a: np.ndarray) -> int:
        a = np.array(a, dtype=self.dtype)
        rank = 0
        rows_total = a.shape[0]
        for col in range(a.shape[1]):
            if rank == rows_total:
                break
            nz = np.flatnonzero(a[rank:, col])
            if nz.size == 0:
                continue
            piv = rank + nz[0]
            if piv != rank:
                a[[rank, piv]] = a[[piv, rank]]
            row = a[rank]
            lrow = self._log[row] + (self._n - self._log[row[col]])
            lrow[row == 0] = self._zero_log
            a[rank] = self._exp[lrow]
            below = rank + 1 + np.flatnonzero(a[rank + 1 :, col])
            if below.size:
                lf = self._log[a[below, col]]
                a[below] ^= self._exp[lf[:, None] + self._log[a[rank]][None, :]]
            rank += 1
        return rank


@lru_cache(maxsize=None)
def field(w: int) -> GaloisField:
    return GaloisField(w)


@dataclass(frozen=True)
class FieldElement:
    value: int
    w: int = 8

    def __post_init__(self):
        if self.w not in POLYNOMIALS:
            raise ValueError(f"unsupported field width {self.w}")
        if not 0 <= self.value < (1 << self.w):
            raise ValueError(f"{self.value} does not fit in {self.w} bits")

    def _check(self, other: FieldElement) -> None:
        if not isinstance(other, FieldElement):
            raise TypeError(f"expected FieldElement, got {type(other).__name__}")
        if other.w != self.w:
            raise FieldMismatchError(f"GF(2^{self.w}) vs GF(2^{other.w})")

    def __add__(self, other: FieldElement) -> FieldElement:
        self._check(other)
        return FieldElement(self.value ^ other.value, self.w)

    __sub__ = __add__

    def __mul__(self, other: FieldElement) -> FieldElement:
        self._check(other)
        return FieldElement(int(field(self.w).mul(self.value, other.value)), self.w)

    def __truediv__(self, other: FieldElement) -> FieldElement:
        self._check(other)
        return FieldElement(int(field(self.w).div(self.value, other.value)), self.w)

    def inverse(self) -> FieldElement:
        return FieldElement(int(field(self.w).inv(self.value)), self.w)


def gf_mul(a: FieldElement, b: FieldElement) -> FieldElement:
    return a * b


def gf_inv(a: FieldElement) -> FieldElement:
    return a.inverse()


@dataclass(frozen=True, eq=False)
class FieldMatrix:
    """Dense matrix over GF(2^w), stored row-major in a numpy array."""

    data: np.ndarray
    w: int = 8

    def __post_init__(self):
        gf = field(self.w)
        data = gf.asarray(self.data)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"FieldMatrix needs a non-empty 2-D array, got shape {data.shape}")
        object.__setattr__(self, "data", data)

    @classmethod
    def identity(cls, n: int, w: int = 8) -> FieldMatrix:
        return cls(np.eye(n, dtype=np.int64), w)

    @classmethod
    def zeros(cls, rows: int, cols: int, w: int = 8) -> FieldMatrix:
        return cls(np.zeros((rows, cols), dtype=np.int64), w)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, FieldMatrix):
            return NotImplemented
        return self.w == other.w and np.array_equal(self.data, other.data)

    def __matmul__(self, other: FieldMatrix) -> FieldMatrix:
        return mat_mul(self, other)


def _same_field(a: FieldMatrix, b: FieldMatrix) -> None:
    if a.w != b.w:
        raise FieldMismatchError(f"GF(2^{a.w}) vs GF(2^{b.w})")


def mat_mul(a: FieldMatrix, b: FieldMatrix) -> FieldMatrix:
    _same_field(a, b)
    if a.cols != b.rows:
        raise ValueError(f"shape mismatch ({a.rows}x{a.cols}) @ ({b.rows}x{b.cols})")
    return FieldMatrix(field(a.w).matmul(a.data, b.data), a.w)


def mat_solve(a: FieldMatrix, b: FieldMatrix) -> FieldMatrix:
    _same_field(a, b)
    return FieldMatrix(field(a.w).solve(a.data, b.data), a.w)


@dataclass(frozen=True, eq=False)
class PermDiagMatrix:
    """A permutation matrix with nonzero scales: ``out[perm[i]] = scale[i] * v[i]``.

    ``inv_perm`` may be passed in so that many matrices share one pair of index arrays.
    """

    perm: np.ndarray
    scale: np.ndarray
    w: int = 16

    inv_perm: np.ndarray | None = None

    def __post_init__(self):
        perm = np.asarray(self.perm, dtype=np.int64)
        scale = field(self.w).asarray(self.scale)
        if perm.ndim != 1 or scale.shape != perm.shape:
            raise ValueError("perm and scale must be 1-D arrays of equal length")
        if np.any(scale == 0):
            raise ValueError("PermDiagMatrix scales must be nonzero")
        inv = self.inv_perm
        if inv is None:
            if not np.array_equal(np.sort(perm), np.arange(perm.size)):
                raise ValueError("perm is not a bijection")
            inv = np.empty_like(perm)
            inv[perm] = np.arange(perm.size)
        elif inv.shape != perm.shape or not np.array_equal(perm[inv], np.arange(perm.size)):
            # a caller-supplied inverse (shared between matrices) must really invert perm
            raise ValueError("inv_perm does not invert perm")
        object.__setattr__(self, "perm", perm)
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "inv_perm", inv)
        # scale indexed by output position: out[u] = scale_out[u] * v[inv_perm[u]]
        object.__setattr__(self, "scale_out", scale[inv])

    @property
    def dim(self) -> int:
        return self.perm.size

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Apply along the last axis; leading axes are treated as a batch."""
        v = np.asarray(v)
        if v.shape[-1] != self.dim:
            raise ValueError(f"vector length {v.shape[-1]} != dimension {self.dim}")
        return field(self.w).mul(self.scale_out, v[..., self.inv_perm])

    def to_dense(self) -> FieldMatrix:
        d = np.zeros((self.dim, self.dim), dtype=np.int64)
        d[self.perm, np.arange(self.dim)] = self.scale
        return FieldMatrix(d, self.w)


def pd_apply(m: PermDiagMatrix, v) -> np.ndarray:
    return m.apply(v)
