"""A systematic (k+r, k) MSR code built from digit-shift permutation matrices.

Each node stores ``alpha_prime = r**k`` symbols.  A symbol index ``v`` is read
as k base-r digits, the digit belonging to systematic node ``i`` sitting at
weight ``r**(i-1)``.  Parity ``j`` applies to systematic part ``i`` a
permutation that adds ``j-1`` (mod r) to digit ``i``, followed by a diagonal
scaling drawn from a seeded generator.  Repairing systematic node ``i`` needs
only the rows whose digit ``i`` is zero from every other node.

Nodes are numbered 1..k (systematic) and k+1..k+r (parity) throughout.
Payload arrays keep the symbol axis last; leading axes are a batch.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from typing import Mapping

import numpy as np

from .bandwidth_meter import MeteredCluster, TransferLedger
from .gf_matrix import GaloisField, PermDiagMatrix, SingularMatrixError, field

MAX_MDS_RETRIES = 16


class ConstructionError(RuntimeError):
    pass


@dataclass(frozen=True)
class BaseParams:
    k: int
    r: int
    w: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.k < 2:
            raise ValueError(f"k must be >= 2, got {self.k}")
        if not 2 <= self.r <= self.k:
            raise ValueError(f"need 2 <= r <= k, got r={self.r}, k={self.k}")
        if self.w not in (8, 16):
            raise ValueError(f"w must be 8 or 16, got {self.w}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def n(self) -> int:
        return self.k + self.r


@dataclass(frozen=True)
class RepairSelector:
    node: int
    rows: np.ndarray


@dataclass(frozen=True)
class MdsReport:
    subsets_checked: int
    all_invertible: bool
    failures: list = dc_field(default_factory=list)


def digit_shift_perm(k: int, r: int, node: int, shift: int) -> np.ndarray:
    """Permutation adding ``shift`` (mod r) to the digit of systematic ``node``."""
    idx = np.arange(r**k, dtype=np.int64)
    weight = r ** (node - 1)
    d = (idx // weight) % r
    return idx + (((d + shift) % r) - d) * weight


@lru_cache(maxsize=256)
def _shared_shift(k: int, r: int, node: int, shift: int) -> tuple:
    # read-only, shared by every code with the same (k, r)
    perm = digit_shift_perm(k, r, node, shift)
    inv = digit_shift_perm(k, r, node, (-shift) % r)
    perm.setflags(write=False)
    inv.setflags(write=False)
    return perm, inv


class _Decoder:
    """Inverse of the reduced system for one choice of surviving nodes.

    The unknowns are the lost systematic parts.  Shifts only touch the digits of
    lost nodes, so the system splits into independent components indexed by the
    remaining digits; every component has the same size ``t * r**t``.
    """

    def __init__(self, lost: tuple, parities: tuple, eq_index: np.ndarray, unk_index: np.ndarray, inverses: np.ndarray):
        self.lost = lost
        self.parities = parities
        self.eq_index = eq_index
        self.unk_index = unk_index
        self.inverses = inverses


class BaseMsrCode:
    def __init__(self, params: BaseParams, coding: list, seed_used: int | None = None, verified_mds: bool = False):
        self.params = params
        self.k = params.k
        self.r = params.r
        self.n = params.n
        self.alpha_prime = params.r**params.k
        self.coding = coding
        self.gf: GaloisField = field(params.w)
        self.seed_used = params.seed if seed_used is None else seed_used
        self.verified_mds = verified_mds
        self._decoders: dict = {}
        self._selectors: dict = {}
        if len(coding) != self.r or any(len(row) != self.k for row in coding):
            raise ValueError("coding grid must be r x k")

    def __repr__(self) -> str:
        return (f"BaseMsrCode(k={self.k}, r={self.r}, w={self.params.w}, "
                f"alpha_prime={self.alpha_prime}, verified_mds={self.verified_mds})")

    def matrix(self, j: int, i: int) -> PermDiagMatrix:
        """Coding matrix applied by parity ``j`` (1-based) to systematic part ``i``."""
        return self.coding[j - 1][i - 1]

    def selector(self, i: int) -> RepairSelector:
        if not 1 <= i <= self.k:
            raise ValueError(f"no systematic node {i}")
        if i not in self._selectors:
            idx = np.arange(self.alpha_prime)
            rows = idx[(idx // self.r ** (i - 1)) % self.r == 0]
            rows.setflags(write=False)
            self._selectors[i] = RepairSelector(i, rows)
        return self._selectors[i]

    def _decoder(self, survivors: frozenset) -> _Decoder:
        dec = self._decoders.get(survivors)
        if dec is None:
            dec = self._build_decoder(survivors)
            self._decoders[survivors] = dec
        return dec

    def _build_decoder(self, survivors: frozenset) -> _Decoder:
        k, r, ap = self.k, self.r, self.alpha_prime
        lost = tuple(i for i in range(1, k + 1) if i not in survivors)
        parities = tuple(sorted(j - k for j in survivors if j > k))
        t = len(lost)
        if len(parities) != t:
            raise ValueError("need exactly k distinct nodes")
        idx = np.arange(ap, dtype=np.int64)
        loc = np.zeros(ap, dtype=np.int64)
        key = idx.copy()
        for m, l in enumerate(lost):
            d = (idx // r ** (l - 1)) % r
            loc += d * r**m
            key -= d * r ** (l - 1)
        block = r**t
        size = t * block
        comps = np.unique(key)
        comp_of = np.searchsorted(comps, key)
        ncomp = comps.size
        # flat position in the stacked (t * ap) vectors for local slot (component, row)
        eq_index = np.empty((ncomp, size), dtype=np.int64)
        unk_index = np.empty((ncomp, size), dtype=np.int64)
        for m in range(t):
            eq_index[comp_of, m * block + loc] = m * ap + idx
            unk_index[comp_of, m * block + loc] = m * ap + idx
        mats = np.zeros((ncomp, size, size), dtype=self.gf.dtype)
        for n_eq, j in enumerate(parities):
            for m, l in enumerate(lost):
                pd = self.matrix(j, l)
                # equation (j, u) picks up scale_out[u] * f_l[inv_perm[u]]
                u = idx
                v = pd.inv_perm[u]
                mats[comp_of[u], n_eq * block + loc[u], m * block + loc[v]] = pd.scale_out[u]
        inverses = np.empty_like(mats)
        eye = np.eye(size, dtype=self.gf.dtype)
        for c in range(ncomp):
            try:
                inverses[c] = self.gf.solve(mats[c], eye)
            except SingularMatrixError as exc:
                raise SingularMatrixError(exc.rank + (ncomp - 1) * size, ncomp * size) from None
        return _Decoder(lost, parities, eq_index, unk_index, inverses)


def _draw_coding(params: BaseParams, seed: int) -> list:
    gf = field(params.w)
    rng = np.random.default_rng(seed)
    ap = params.r**params.k
    coding = []
    for j in range(1, params.r + 1):
        row = []
        for i in range(1, params.k + 1):
            perm, inv = _shared_shift(params.k, params.r, i, j - 1)
            row.append(PermDiagMatrix(perm, gf.random(rng, ap, nonzero=True), params.w, inv))
        coding.append(row)
    return coding


def build_base_code(params: BaseParams, verify: bool = True, max_retries: int = MAX_MDS_RETRIES) -> BaseMsrCode:
    """Draw scales from ``params.seed`` and check the MDS property exhaustively.

    On a singular subset the seed is incremented and the scales redrawn, up to
    ``max_retries`` times.  ``verify=False`` skips the check for codes too large
    to verify at desk scale; ``verified_mds`` then stays False.
    """
    if not verify:
        return BaseMsrCode(params, _draw_coding(params, params.seed))
    last = None
    for attempt in range(max_retries):
        seed = (params.seed + attempt) % 2**64
        code = BaseMsrCode(params, _draw_coding(params, seed), seed_used=seed)
        report = verify_mds(code)
        if report.all_invertible:
            code.verified_mds = True
            return code
        last = report.failures[0]
    raise ConstructionError(f"MDS verification failed after {max_retries} attempts; last failing node subset {last[0]}")


def verify_mds(code: BaseMsrCode) -> MdsReport:
    """Check every k-subset that contains at least one parity node."""
    checked = 0
    failures = []
    for subset in itertools.combinations(range(1, code.n + 1), code.k):
        if subset[-1] <= code.k:
            continue
        checked += 1
        try:
            code._decoder(frozenset(subset))
        except SingularMatrixError as exc:
            failures.append((subset, exc.rank))
    return MdsReport(checked, not failures, failures)


def base_encode(code: BaseMsrCode, source) -> np.ndarray:
    """Parities ``(..., r, alpha_prime)`` for systematic data ``(..., k, alpha_prime)``."""
    source = code.gf.asarray(source)
    if source.shape[-2:] != (code.k, code.alpha_prime):
        raise ValueError(f"source shape {source.shape} does not end in ({code.k}, {code.alpha_prime})")
    out = np.zeros(source.shape[:-2] + (code.r, code.alpha_prime), dtype=code.gf.dtype)
    for j in range(1, code.r + 1):
        acc = out[..., j - 1, :]
        for i in range(1, code.k + 1):
            acc ^= code.matrix(j, i).apply(source[..., i - 1, :])
    return out


def base_codeword(code: BaseMsrCode, source) -> np.ndarray:
    source = code.gf.asarray(source)
    return np.concatenate([source, base_encode(code, source)], axis=-2)


def base_repair_systematic(code: BaseMsrCode, i: int, helper_rows: Mapping[int, np.ndarray]) -> np.ndarray:
    """Rebuild systematic part ``i`` from the selector rows of all other nodes."""
    k, r, ap = code.k, code.r, code.alpha_prime
    sel = code.selector(i).rows
    expected = set(range(1, code.n + 1)) - {i}
    if set(helper_rows) != expected:
        missing = sorted(expected - set(helper_rows))
        raise ValueError(f"missing helper slices from nodes {missing}" if missing else "unexpected helper slices")
    rows = {}
    for node, arr in helper_rows.items():
        arr = code.gf.asarray(arr)
        if arr.shape[-1] != sel.size:
            raise ValueError(f"helper {node} sent {arr.shape[-1]} symbols, expected {sel.size}")
        rows[node] = arr
    batch = np.broadcast_shapes(*(a.shape[:-1] for a in rows.values()))
    # position of an index with digit i == 0 inside the selector slice
    pos = np.full(ap, -1, dtype=np.int64)
    pos[sel] = np.arange(sel.size)
    out = np.zeros(batch + (ap,), dtype=code.gf.dtype)
    for j in range(1, r + 1):
        acc = np.array(np.broadcast_to(rows[k + j], batch + (sel.size,)))
        for l in range(1, k + 1):
            if l == i:
                continue
            pd = code.matrix(j, l)
            src = pd.inv_perm[sel]
            acc ^= code.gf.mul(pd.scale_out[sel], rows[l][..., pos[src]])
        pd = code.matrix(j, i)
        out[..., pd.inv_perm[sel]] = code.gf.div(acc, pd.scale_out[sel])
    return out


def base_reconstruct(code: BaseMsrCode, payloads: Mapping[int, np.ndarray]) -> np.ndarray:
    """Recover ``(..., k, alpha_prime)`` source data from any k node payloads."""
    k, ap = code.k, code.alpha_prime
    nodes = set(payloads)
    if len(nodes) != k or not nodes <= set(range(1, code.n + 1)):
        raise ValueError(f"need payloads from exactly {k} distinct nodes in 1..{code.n}")
    data = {node: code.gf.asarray(p) for node, p in payloads.items()}
    for node, p in data.items():
        if p.shape[-1] != ap:
            raise ValueError(f"node {node} payload has {p.shape[-1]} symbols, expected {ap}")
    batch = np.broadcast_shapes(*(p.shape[:-1] for p in data.values()))
    out = np.zeros(batch + (k, ap), dtype=code.gf.dtype)
    for i in range(1, k + 1):
        if i in data:
            out[..., i - 1, :] = data[i]
    if all(node <= k for node in nodes):
        return out
    dec = code._decoder(frozenset(nodes))
    residual = []
    for j in dec.parities:
        acc = np.array(np.broadcast_to(data[k + j], batch + (ap,)))
        for i in range(1, k + 1):
            if i in data:
                acc ^= code.matrix(j, i).apply(data[i])
        residual.append(acc)
    y = np.concatenate(residual, axis=-1)[..., dec.eq_index]
    x = code.gf.batched_matvec(dec.inverses, y)
    flat = np.zeros(batch + (len(dec.lost) * ap,), dtype=code.gf.dtype)
    flat[..., dec.unk_index] = x
    for m, l in enumerate(dec.lost):
        out[..., l - 1, :] = flat[..., m * ap : (m + 1) * ap]
    return out


def base_repair_node(code: BaseMsrCode, node: int, cluster: Mapping[int, np.ndarray]):
    """Metered single-node repair of a plain codeword (payloads ``(..., alpha_prime)``).

    Systematic nodes use the selector rows; parity nodes are rebuilt the trivial
    way, from the full contents of every systematic node.
    """
    ledger = TransferLedger(node)
    reader = MeteredCluster(cluster, node, ledger)
    if node <= code.k:
        rows = code.selector(node).rows
        helpers = {h: reader.fetch(h, (), rows, "selector") for h in range(1, code.n + 1) if h != node}
        return base_repair_systematic(code, node, helpers), ledger
    systematic = np.stack([reader.fetch(h, (), None, "systematic") for h in range(1, code.k + 1)], axis=-2)
    j = node - code.k
    return base_encode(code, systematic)[..., j - 1, :], ledger
