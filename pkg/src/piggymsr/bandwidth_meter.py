"""Symbol-exact transfer accounting and closed-form bandwidth expressions.

Every repair reads helper data through :class:`MeteredCluster`, which appends
one ledger entry per fetch.  Analytic values are :class:`~fractions.Fraction`
multiples of the per-node storage ``alpha`` of the code being described.
"""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, NamedTuple

import numpy as np


class UnavailableHelperError(LookupError):
    pass


class LedgerEntry(NamedTuple):
    helper: int
    symbols: int
    phase: str


@dataclass
class TransferLedger:
    failed_node: int
    entries: list = field(default_factory=list)

    def record(self, helper: int, symbols: int, phase: str = "") -> None:
        if symbols < 0:
            raise ValueError("symbol counts are nonnegative")
        self.entries.append(LedgerEntry(int(helper), int(symbols), phase))

    @property
    def total(self) -> int:
        return sum(e.symbols for e in self.entries)

    def per_helper(self) -> dict:
        out: dict = defaultdict(int)
        for e in self.entries:
            out[e.helper] += e.symbols
        return dict(sorted(out.items()))

    def per_phase(self) -> dict:
        out: dict = defaultdict(int)
        for e in self.entries:
            out[e.phase] += e.symbols
        return dict(out)

    def merge(self, other: TransferLedger) -> TransferLedger:
        if other.failed_node != self.failed_node:
            raise ValueError("cannot merge ledgers of different repair episodes")
        return TransferLedger(self.failed_node, self.entries + other.entries)

    def csv_rows(self) -> list:
        """(failed_node, helper, phase, symbols) aggregated and sorted by helper."""
        agg: dict = defaultdict(int)
        for e in self.entries:
            agg[(e.helper, e.phase)] += e.symbols
        return [(self.failed_node, h, p, n) for (h, p), n in sorted(agg.items())]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["failed_node", "helper", "phase", "symbols"])
        writer.writerows(self.csv_rows())
        return buf.getvalue()


class MeteredCluster:
    """Read-only view of node payloads that records every symbol handed out.

    ``payloads`` maps node id to an array whose last axis is the symbol axis;
    ``index`` in :meth:`fetch` selects a cell along the axes before it and
    ``rows`` (optional) selects symbols inside the cell.
    """

    def __init__(self, payloads: Mapping[int, np.ndarray], failed_node: int, ledger: TransferLedger):
        self._payloads = payloads
        self.failed_node = failed_node
        self.ledger = ledger

    def fetch(self, node: int, index: tuple = (), rows=None, phase: str = "") -> np.ndarray:
        if node == self.failed_node:
            raise UnavailableHelperError(f"node {node} is the failed node")
        try:
            arr = self._payloads[node]
        except KeyError:
            raise UnavailableHelperError(f"helper node {node} is unavailable") from None
        if arr is None:
            raise UnavailableHelperError(f"helper node {node} is unavailable")
        # cell axes sit just before the symbol axis
        out = arr[(Ellipsis,) + tuple(index) + (slice(None),)] if index else arr
        if rows is not None:
            out = out[..., rows]
        out = np.array(out)
        self.ledger.record(node, out.size, phase)
        return out


@dataclass(frozen=True)
class BandwidthReport:
    total: int
    per_helper: dict
    expected: Fraction
    alpha: int
    match: bool

    @property
    def expected_symbols(self) -> Fraction:
        return self.expected * self.alpha


def assert_measured(ledger: TransferLedger, expected, alpha: int = 1) -> BandwidthReport:
    """Compare a ledger total against ``expected * alpha`` symbols, exactly."""
    expected = Fraction(expected)
    total = ledger.total
    return BandwidthReport(total, ledger.per_helper(), expected, alpha, Fraction(total) == expected * alpha)


class AnalyticBandwidth(NamedTuple):
    gamma_system: Fraction
    gamma_parity: Fraction
    gamma_msr_bound: Fraction


def msr_bound(k: int, r: int) -> Fraction:
    return Fraction(k + r - 1, r)


def analytic_bandwidth(k: int, r: int, s: int) -> AnalyticBandwidth:
    """Repair bandwidths of the s-piggybacked code, in units of its node size."""
    if not 2 <= s <= r <= k:
        raise ValueError(f"need 2 <= s <= r <= k, got k={k}, r={r}, s={s}")
    bound = msr_bound(k, r)
    return AnalyticBandwidth(bound, Fraction(k + s * (s - 1), s), bound)


class LegacyBandwidth(NamedTuple):
    single_piggyback: Fraction
    modified: Fraction


def legacy_average_parity_bandwidth(k: int, r: int) -> LegacyBandwidth:
    """Average parity repair of the two-instance designs, in units of alpha = 2 alpha'.

    ``single_piggyback``: one piggyback on parity 1 holding parities 2..r of
    instance 1.  ``modified``: the same plus parity 1 of instance 1 folded into
    parity 2's second-instance cell.
    """
    if r < 2:
        raise ValueError("need at least two parity nodes to piggyback")
    if k < 1:
        raise ValueError("k must be positive")
    single = Fraction(2 * k + (r - 1) * (k + r - 1), 2 * r)
    modified = Fraction((k + r + 1) + (r - 1) * (k + r - 1), 2 * r)
    return LegacyBandwidth(single, modified)


HADAMARD_PARITY = "(k+1)/2"


@dataclass(frozen=True)
class ComparisonRow:
    k: int
    r: int
    s: int
    msr_bound: Fraction
    gamma_system: Fraction
    gamma_parity: Fraction
    legacy: Fraction
    legacy_modified: Fraction
    hadamard_parity: Fraction | None


def compare_table(k_list: Iterable[int], r: int, s: int | None = None) -> list:
    """One row per k; ``s`` defaults to r.  The Hadamard column exists only for r = 2."""
    s = r if s is None else s
    rows = []
    for k in k_list:
        new = analytic_bandwidth(k, r, s)
        old = legacy_average_parity_bandwidth(k, r)
        hadamard = Fraction(k + 1, 2) if r == 2 else None
        rows.append(ComparisonRow(k, r, s, new.gamma_msr_bound, new.gamma_system, new.gamma_parity,
                                  old.single_piggyback, old.modified, hadamard))
    return rows


def _fmt(x: Fraction | None) -> str:
    if x is None:
        return "-"
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


COMPARISON_COLUMNS = ["k", "r", "s", "msr_bound", "gamma_system", "gamma_parity", "legacy", "legacy_modified", "hadamard_parity"]


def comparison_cells(row: ComparisonRow) -> list:
    return [str(row.k), str(row.r), str(row.s), _fmt(row.msr_bound), _fmt(row.gamma_system),
            _fmt(row.gamma_parity), _fmt(row.legacy), _fmt(row.legacy_modified), _fmt(row.hadamard_parity)]


def rows_to_markdown(header: list, rows: list) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(r) + " |" for r in rows]
    return "\n".join(lines) + "\n"


def rows_to_csv(header: list, rows: list) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()
