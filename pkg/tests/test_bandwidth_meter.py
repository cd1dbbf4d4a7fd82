from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from piggymsr.bandwidth_meter import (COMPARISON_COLUMNS, LedgerEntry, MeteredCluster, TransferLedger,
                                      UnavailableHelperError, analytic_bandwidth, assert_measured,
                                      compare_table, comparison_cells, legacy_average_parity_bandwidth,
                                      msr_bound, rows_to_csv, rows_to_markdown)
from piggymsr.base_msr import BaseParams
from piggymsr.piggyback import build_piggybacked_code, pb_encode, pb_repair


def test_empty_ledger_matches_zero():
    report = assert_measured(TransferLedger(1), 0)
    assert report.match and report.total == 0


def test_ledger_sums_and_groups():
    ledger = TransferLedger(3)
    ledger.record(1, 5, "a")
    ledger.record(2, 7, "a")
    ledger.record(1, 2, "b")
    assert ledger.total == 14
    assert ledger.per_helper() == {1: 7, 2: 7}
    assert ledger.per_phase() == {"a": 12, "b": 2}
    with pytest.raises(ValueError):
        ledger.record(1, -1)


entries = st.lists(st.tuples(st.integers(1, 9), st.integers(0, 1000), st.sampled_from(["x", "y", "z"])),
                   max_size=30)


@settings(max_examples=100, deadline=None)
@given(entries, st.randoms())
def test_totals_independent_of_order(items, random):
    a = TransferLedger(0, [LedgerEntry(*e) for e in items])
    shuffled = list(items)
    random.shuffle(shuffled)
    b = TransferLedger(0, [LedgerEntry(*e) for e in shuffled])
    assert a.total == b.total
    assert a.per_helper() == b.per_helper()
    assert a.to_csv() == b.to_csv()


@settings(max_examples=100, deadline=None)
@given(entries, entries)
def test_merge_adds(left, right):
    a = TransferLedger(0, [LedgerEntry(*e) for e in left])
    b = TransferLedger(0, [LedgerEntry(*e) for e in right])
    assert a.merge(b).total == a.total + b.total
    assert a.merge(b).per_helper() == b.merge(a).per_helper()


def test_merge_refuses_other_episode():
    with pytest.raises(ValueError):
        TransferLedger(1).merge(TransferLedger(2))


def test_csv_sorted_by_helper():
    ledger = TransferLedger(4)
    for h in (3, 1, 2, 1):
        ledger.record(h, 10, "p")
    lines = ledger.to_csv().splitlines()
    assert lines[0] == "failed_node,helper,phase,symbols"
    assert lines[1:] == ["4,1,p,20", "4,2,p,10", "4,3,p,10"]


def test_metered_cluster_counts_and_refuses():
    payloads = {1: np.arange(12).reshape(3, 4), 2: None}
    ledger = TransferLedger(5)
    reader = MeteredCluster(payloads, 5, ledger)
    assert reader.fetch(1, (1,), [0, 2]).tolist() == [4, 6]
    assert reader.fetch(1).shape == (3, 4)
    assert ledger.total == 14
    with pytest.raises(UnavailableHelperError):
        reader.fetch(2)
    with pytest.raises(UnavailableHelperError):
        reader.fetch(3)
    with pytest.raises(UnavailableHelperError):
        reader.fetch(5)


def test_fetch_returns_a_copy():
    data = np.zeros(4, dtype=np.int64)
    out = MeteredCluster({1: data}, 9, TransferLedger(9)).fetch(1)
    out[0] = 1
    assert data[0] == 0


@pytest.mark.parametrize("node,expected", [(1, Fraction(6)), (5, Fraction(10))])
def test_measured_against_analytic_k4_r3_s3(node, expected, rng):
    code = build_piggybacked_code(BaseParams(4, 3, 16, seed=1), 3)
    cw = pb_encode(code, code.gf.random(rng, (4, 3, 81)))
    _, ledger = pb_repair(code, node, {n: cw[n - 1] for n in range(1, 8)})
    report = assert_measured(ledger, expected, code.alpha_prime)
    assert report.match
    assert report.total == {1: 486, 5: 810}[node]


@pytest.mark.parametrize("k,r,s,system,parity", [
    (4, 3, 3, Fraction(2), Fraction(10, 3)),
    (8, 4, 4, Fraction(11, 4), Fraction(5)),
    (10, 2, 2, Fraction(11, 2), Fraction(6)),
    (4, 4, 2, Fraction(7, 4), Fraction(3)),
])
def test_analytic_values(k, r, s, system, parity):
    got = analytic_bandwidth(k, r, s)
    assert (got.gamma_system, got.gamma_parity) == (system, parity)
    assert got.gamma_msr_bound == msr_bound(k, r) == Fraction(k + r - 1, r)


def test_analytic_rejects_bad_range():
    with pytest.raises(ValueError):
        analytic_bandwidth(4, 3, 4)
    with pytest.raises(ValueError):
        analytic_bandwidth(2, 3, 2)


@pytest.mark.parametrize("k,r,single", [(10, 2, Fraction(31, 4)), (4, 2, Fraction(13, 4)), (6, 3, Fraction(14, 3))])
def test_legacy_values(k, r, single):
    assert legacy_average_parity_bandwidth(k, r).single_piggyback == single


def test_legacy_rejects_single_parity():
    with pytest.raises(ValueError):
        legacy_average_parity_bandwidth(4, 1)


@pytest.mark.parametrize("r", [2, 3, 4])
def test_new_parity_against_modified_legacy(r):
    # difference is (r-2)(k-r-1)/(2r): zero for r = 2, positive for r > 2 once k > r + 1
    for k in range(r, 65):
        diff = legacy_average_parity_bandwidth(k, r).modified - analytic_bandwidth(k, r, r).gamma_parity
        assert diff == Fraction((r - 2) * (k - r - 1), 2 * r)


@pytest.mark.parametrize("r", [2, 3, 4])
def test_single_legacy_minus_modified(r):
    for k in range(r, 65):
        old = legacy_average_parity_bandwidth(k, r)
        assert old.single_piggyback - old.modified == Fraction(k - r - 1, 2 * r)


def test_comparison_rows_for_two_parities():
    for row in compare_table([4, 8, 16], 2):
        assert row.gamma_system == Fraction(row.k + 1, 2)
        assert row.gamma_parity == Fraction(row.k + 2, 2)
        assert row.hadamard_parity == Fraction(row.k + 1, 2)
    assert all(row.hadamard_parity is None for row in compare_table([4, 8], 3))


def test_comparison_rendering():
    rows = [comparison_cells(r) for r in compare_table([4], 3, 2)]
    md = rows_to_markdown(COMPARISON_COLUMNS, rows)
    assert md.splitlines()[0].startswith("| k | r | s |")
    assert "| 4 | 3 | 2 |" in md
    csv_text = rows_to_csv(COMPARISON_COLUMNS, rows)
    assert csv_text.splitlines()[1].split(",")[:3] == ["4", "3", "2"]


@pytest.mark.parametrize("r", [2, 3, 4])
def test_new_parity_against_single_legacy(r):
    # (r-1)(k-r-1)/(2r): the new design wins strictly only once k > r + 1
    for k in range(r, 65):
        diff = legacy_average_parity_bandwidth(k, r).single_piggyback - analytic_bandwidth(k, r, r).gamma_parity
        assert diff == Fraction((r - 1) * (k - r - 1), 2 * r)


def test_four_instances_beat_three_only_for_large_k():
    # (k+12)/4 < (k+6)/3  <=>  k > 12
    for k in range(4, 65):
        four = analytic_bandwidth(k, 4, 4).gamma_parity
        three = analytic_bandwidth(k, 4, 3).gamma_parity
        assert (four < three) == (k > 12)
        assert (four == three) == (k == 12)
