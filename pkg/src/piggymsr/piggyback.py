"""s-instance piggybacking of a base MSR code for cheap parity-node repair.

Node payloads are arrays ``(..., s, alpha_prime)``: one cell per instance.
Instance ``s`` of parity ``i`` carries ``f_{k+i}^(s) + P_i`` where ``P_i`` is
the XOR of the earlier-instance parity cells assigned to it by an injection
table ``p``: parity ``i'`` of instance ``j' < s`` goes into ``P_{p_{i'}(j')}``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .bandwidth_meter import MeteredCluster, TransferLedger
from .base_msr import (BaseMsrCode, BaseParams, base_encode, base_reconstruct,
                       base_repair_systematic, build_base_code)


class InvalidTableError(ValueError):
    pass


@dataclass(frozen=True)
class InjectionTable:
    """``p[i-1][j-1]`` is the 1-based piggyback index holding parity i of instance j."""

    r: int
    s: int
    p: tuple

    def __post_init__(self):
        object.__setattr__(self, "p", tuple(tuple(int(x) for x in row) for row in self.p))

    def __call__(self, i: int, j: int) -> int:
        return self.p[i - 1][j - 1]

    def to_json(self) -> list:
        return [list(row) for row in self.p]

    @classmethod
    def from_json(cls, rows) -> InjectionTable:
        rows = [list(row) for row in rows]
        if not rows or any(len(row) != len(rows[0]) for row in rows):
            raise InvalidTableError("injection table must be a non-empty rectangular array")
        return cls(len(rows), len(rows[0]), rows)


@dataclass(frozen=True)
class PiggybackSupport:
    l: int
    members: frozenset


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple
    support_sizes: tuple

    @property
    def valid(self) -> bool:
        """Usable for encoding and repair (possibly with unequal supports)."""
        return all(v.startswith("unequal supports") for v in self.violations)

    @property
    def optimal(self) -> bool:
        return not self.violations


def _check_range(r: int, s: int) -> None:
    if not 2 <= s <= r:
        raise ValueError(f"need 2 <= s <= r, got r={r}, s={s}")


def injection_main_diagonal(r: int, s: int) -> InjectionTable:
    _check_range(r, s)
    return InjectionTable(r, s, [[((i - j + s - 1) % r) + 1 for j in range(1, s + 1)] for i in range(1, r + 1)])


def injection_anti_diagonal(r: int, s: int) -> InjectionTable:
    _check_range(r, s)
    return InjectionTable(r, s, [[((i + j - s - 1) % r) + 1 for j in range(1, s + 1)] for i in range(1, r + 1)])


INJECTIONS = {"main-diag": injection_main_diagonal, "anti-diag": injection_anti_diagonal}


def validate_injection(table: InjectionTable) -> ValidationReport:
    r, s, p = table.r, table.s, table.p
    problems = []
    if len(p) != r or any(len(row) != s for row in p) or not 2 <= s <= r:
        return ValidationReport((f"shape: expected {r} rows of {s} entries with 2 <= s <= r",), ())
    for i, row in enumerate(p, start=1):
        if any(not 1 <= x <= r for x in row):
            problems.append(f"range: p_{i} leaves 1..{r}")
        if len(set(row)) != s:
            problems.append(f"not injective: p_{i}")
        if row[s - 1] != i:
            problems.append(f"p_{i}({s}) != {i}")
        if i in row[: s - 1]:
            problems.append(f"self-column nonzero: p_{i} sends an earlier instance to P_{i}")
    sizes = [0] * r
    for row in p:
        for x in row[: s - 1]:
            if 1 <= x <= r:
                sizes[x - 1] += 1
    if not problems and any(n != s - 1 for n in sizes):
        problems.append(f"unequal supports: sizes {sizes}, optimal needs all {s - 1}")
    return ValidationReport(tuple(problems), tuple(sizes))


def piggyback_supports(table: InjectionTable) -> list:
    if not validate_injection(table).valid:
        raise InvalidTableError(f"invalid injection table: {validate_injection(table).violations}")
    members = {l: set() for l in range(1, table.r + 1)}
    for i in range(1, table.r + 1):
        for j in range(1, table.s):
            members[table(i, j)].add((i, j))
    return [PiggybackSupport(l, frozenset(m)) for l, m in members.items()]


class PiggybackedCode:
    def __init__(self, base: BaseMsrCode, table: InjectionTable, allow_suboptimal: bool = False):
        if table.r != base.r:
            raise InvalidTableError(f"table has r={table.r}, base code has r={base.r}")
        report = validate_injection(table)
        if not report.valid:
            raise InvalidTableError(f"invalid injection table: {report.violations}")
        if not report.optimal and not allow_suboptimal:
            raise InvalidTableError(f"suboptimal injection table ({report.violations[0]}); "
                                    "pass allow_suboptimal to use it anyway")
        self.base = base
        self.table = table
        self.s = table.s
        self.k = base.k
        self.r = base.r
        self.n = base.n
        self.alpha_prime = base.alpha_prime
        self.alpha = self.s * base.alpha_prime
        self.optimal = report.optimal
        self.supports = {sup.l: tuple(sorted(sup.members)) for sup in piggyback_supports(table)}

    def __repr__(self) -> str:
        return f"PiggybackedCode(k={self.k}, r={self.r}, s={self.s}, alpha={self.alpha})"

    @property
    def gf(self):
        return self.base.gf


def build_piggybacked_code(params: BaseParams, s: int, injection="main-diag", allow_suboptimal: bool = False,
                           verify: bool = True) -> PiggybackedCode:
    if isinstance(injection, str):
        try:
            table = INJECTIONS[injection](params.r, s)
        except KeyError:
            raise InvalidTableError(f"unknown injection {injection!r}") from None
    else:
        table = injection
        if table.s != s:
            raise InvalidTableError(f"table has s={table.s}, expected {s}")
    return PiggybackedCode(build_base_code(params, verify=verify), table, allow_suboptimal)


def piggybacks(code: PiggybackedCode, parity_cells: np.ndarray) -> np.ndarray:
    """``P_1..P_r`` from parity cells ``(..., r, s, alpha_prime)`` of instances 1..s-1."""
    out = np.zeros(parity_cells.shape[:-3] + (code.r, code.alpha_prime), dtype=code.gf.dtype)
    for l, members in code.supports.items():
        for (i, j) in members:
            out[..., l - 1, :] ^= parity_cells[..., i - 1, j - 1, :]
    return out


def pb_encode(code: PiggybackedCode, source) -> np.ndarray:
    """Payloads ``(..., k+r, s, alpha_prime)`` for source ``(..., k, s, alpha_prime)``."""
    source = code.gf.asarray(source)
    if source.shape[-3:] != (code.k, code.s, code.alpha_prime):
        raise ValueError(f"source shape {source.shape} does not end in ({code.k}, {code.s}, {code.alpha_prime})")
    # base_encode wants (..., k, alpha'): move the instance axis into the batch
    per_instance = np.swapaxes(source, -3, -2)
    parity = np.swapaxes(base_encode(code.base, per_instance), -3, -2)
    parity[..., :, code.s - 1, :] ^= piggybacks(code, parity)
    return np.concatenate([source, parity], axis=-3)


def pb_reconstruct(code: PiggybackedCode, payloads: Mapping[int, np.ndarray]) -> np.ndarray:
    """Recover source ``(..., k, s, alpha_prime)`` from any k node payloads."""
    k, s = code.k, code.s
    data = {node: code.gf.asarray(p) for node, p in payloads.items()}
    for node, p in data.items():
        if p.shape[-2:] != (s, code.alpha_prime):
            raise ValueError(f"node {node} payload shape {p.shape} does not end in ({s}, {code.alpha_prime})")
    early = base_reconstruct(code.base, {node: p[..., : s - 1, :] for node, p in data.items()})
    # early: (..., s-1, k, alpha') with instances as batch
    batch = early.shape[:-3]
    parity_early = base_encode(code.base, early)
    cells = np.zeros(batch + (code.r, s, code.alpha_prime), dtype=code.gf.dtype)
    cells[..., :, : s - 1, :] = np.swapaxes(parity_early, -3, -2)
    pig = piggybacks(code, cells)
    last = {}
    for node, p in data.items():
        cell = p[..., s - 1, :]
        last[node] = cell ^ pig[..., node - k - 1, :] if node > k else cell
    final = base_reconstruct(code.base, last)
    return np.concatenate([np.swapaxes(early, -3, -2), final[..., :, None, :]], axis=-2)


def _repair_systematic(code: PiggybackedCode, i: int, reader) -> np.ndarray:
    k, s = code.k, code.s
    rows = code.base.selector(i).rows
    got = {}
    for h in range(1, code.n + 1):
        if h == i:
            continue
        got[h] = np.stack([reader.fetch(h, (c,), rows, "selector") for c in range(s)], axis=-2)
    # cancel S_i P_l using the selected rows of the earlier-instance parity cells
    for l, members in code.supports.items():
        for (pi, pj) in members:
            got[k + l][..., s - 1, :] ^= got[k + pi][..., pj - 1, :]
    # the cell axis rides along as a batch axis, one base repair per instance
    return base_repair_systematic(code.base, i, got)


def _repair_parity(code: PiggybackedCode, i: int, reader) -> np.ndarray:
    k, s = code.k, code.s
    table = code.table
    # step 1: full instance-s systematic cells, recompute instance-s parities
    systematic = np.stack([reader.fetch(h, (s - 1,), None, "step1-systematic") for h in range(1, k + 1)], axis=-2)
    parity_s = base_encode(code.base, systematic)
    batch = parity_s.shape[:-2]
    out = np.zeros(batch + (s, code.alpha_prime), dtype=code.gf.dtype)
    # step 2: each earlier-instance cell from the piggyback that carries it
    for j in range(1, s):
        l = table(i, j)
        acc = reader.fetch(k + l, (s - 1,), None, "step2-piggybacked") ^ parity_s[..., l - 1, :]
        for (pi, pj) in code.supports[l]:
            if (pi, pj) != (i, j):
                acc ^= reader.fetch(k + pi, (pj - 1,), None, "step2-support")
        out[..., j - 1, :] = acc
    # step 3: rebuild this node's own piggyback
    acc = parity_s[..., i - 1, :].copy()
    for (pi, pj) in code.supports[i]:
        acc ^= reader.fetch(k + pi, (pj - 1,), None, "step3-support")
    out[..., s - 1, :] = acc
    return out


def pb_repair_systematic(code: PiggybackedCode, i: int, cluster: Mapping[int, np.ndarray]):
    if not 1 <= i <= code.k:
        raise ValueError(f"node {i} is not systematic")
    ledger = TransferLedger(i)
    return _repair_systematic(code, i, MeteredCluster(cluster, i, ledger)), ledger


def pb_repair_parity(code: PiggybackedCode, i: int, cluster: Mapping[int, np.ndarray]):
    """Repair parity ``i`` (1..r), i.e. node ``k + i``."""
    if not 1 <= i <= code.r:
        raise ValueError(f"no parity {i}")
    node = code.k + i
    ledger = TransferLedger(node)
    return _repair_parity(code, i, MeteredCluster(cluster, node, ledger)), ledger


def pb_repair(code: PiggybackedCode, node: int, cluster: Mapping[int, np.ndarray]):
    if node <= code.k:
        return pb_repair_systematic(code, node, cluster)
    return pb_repair_parity(code, node - code.k, cluster)


def parity_repair_plan(code: PiggybackedCode, i: int) -> list:
    """``(helper node, instance)`` cells a parity-``i`` repair downloads in full."""
    k, s = code.k, code.s
    plan = [(h, s) for h in range(1, k + 1)]
    for j in range(1, s):
        l = code.table(i, j)
        plan.append((k + l, s))
        plan += [(k + pi, pj) for (pi, pj) in code.supports[l] if (pi, pj) != (i, j)]
    plan += [(k + pi, pj) for (pi, pj) in code.supports[i]]
    return plan


def per_parity_helper_profile(code: PiggybackedCode, i: int) -> dict:
    """Symbols each helper sends when parity ``i`` is repaired, for s = r codes.

    Systematic helpers send one cell (alpha/r).  With s = r, steps 2-3 request
    r(r-1) distinct cells held by r-1 parity helpers that own r cells each, so
    every parity helper sends its whole node (alpha).
    """
    if code.s != code.r:
        raise ValueError("per-helper balance holds for r-piggybacked codes (s = r) only")
    if not code.optimal:
        raise InvalidTableError("per-helper balance is only defined for optimal tables")
    profile: dict = {}
    for h, _ in parity_repair_plan(code, i):
        profile[h] = profile.get(h, 0) + code.alpha_prime
    a = code.alpha
    for h, n in profile.items():
        want = a // code.r if h <= code.k else a
        if n != want:
            raise AssertionError(f"helper {h} sends {n} symbols, expected {want}")
    return dict(sorted(profile.items()))


def enumerate_tables(r: int, s: int):
    """Every structurally valid table: p_i injective, p_i(s) = i."""
    _check_range(r, s)
    choices = [list(itertools.permutations([x for x in range(1, r + 1) if x != i], s - 1)) for i in range(1, r + 1)]
    for combo in itertools.product(*choices):
        yield InjectionTable(r, s, [list(c) + [i] for i, c in enumerate(combo, start=1)])


def table_parity_bandwidth(table: InjectionTable, k: int, i: int) -> int:
    """Parity-``i`` repair download in base cells: k plus the support sizes of every P_{p_i(j)}."""
    sizes = validate_injection(table).support_sizes
    return k + sum(sizes[table(i, j) - 1] for j in range(1, table.s + 1))
