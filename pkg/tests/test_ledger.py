import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypersweep.ledger import (FIELDS, LedgerFormatError, LedgerRow, UnknownGroupKey, aggregate,
                               append_csv, fixture_path, load_fixture, load_stated, read_csv, report,
                               verify, verify_document)

TABLE2_TOTALS = {
    "RarePlanes": {"gpu_hours": 241.2, "vram_gb": 122.2, "params_millions": 674.6},
    "DOTA": {"gpu_hours": 580.4, "vram_gb": 164.7, "params_millions": 674.6},
    "XView": {"gpu_hours": 580.6, "vram_gb": 167.4, "params_millions": 674.6},
}


def test_table2_fixture_shape():
    rows = load_fixture("table2.csv")
    assert len(rows) == 30
    assert {r.dataset for r in rows} == set(TABLE2_TOTALS)
    assert all(sum(1 for r in rows if r.dataset == d) == 10 for d in TABLE2_TOTALS)


@pytest.mark.parametrize("dataset", sorted(TABLE2_TOTALS))
def test_table2_group_totals(dataset):
    agg = aggregate(load_fixture("table2.csv"), ["dataset"])
    for col, stated in TABLE2_TOTALS[dataset].items():
        assert abs(agg[dataset][col] - stated) <= 0.05, col


def test_table2_verifies_clean():
    rows = load_fixture("table2.csv")
    assert verify_document(rows, load_stated(fixture_path("table2_totals.json"))) == []


def test_table4_single_epoch_discrepancy():
    rows = load_fixture("table4.csv")
    found = verify_document(rows, load_stated(fixture_path("table4_totals.json")))
    assert len(found) == 1
    d = found[0]
    assert (d.column, d.stated, d.computed, d.delta) == ("epochs", 35200, 35400, 200)
    totals = aggregate(rows).total
    assert (totals["models"], totals["params_millions"], totals["imagery_gb"], totals["wall_hours"]) == (
        234, 8084, 37745, 4040)


def test_table4_prose_figures_flag_imagery_units():
    rows = load_fixture("table4.csv")
    found = verify_document(rows, load_stated(fixture_path("table4_text.json")))
    assert [(d.group, d.column) for d in found] == [("Detection with Transformers", "imagery_gb")]


def test_table3_timing_fixture():
    rows = load_fixture("table3.csv")
    assert [r.network for r in rows] == ["U-Net", "U-Net++", "DeepLabV3", "DeepLabV3+"]
    assert all(r.epochs == 200 for r in rows)


def test_empty_aggregate_all_zero():
    agg = aggregate([])
    assert all(v == 0 for v in agg.total.values())


def test_missing_cells_flagged():
    rows = [LedgerRow(application="a", models=2, epochs=10), LedgerRow(application="b", models=3)]
    agg = aggregate(rows, ["application"])
    assert agg.total["epochs"] == 10 and "epochs" in agg.total_missing
    assert "epochs" in agg.missing[("b",)] and "epochs" not in agg.missing[("a",)]


def test_unknown_group_key():
    with pytest.raises(UnknownGroupKey):
        aggregate([], ["gpu_model"])


def test_negative_value_rejected():
    with pytest.raises(ValueError):
        LedgerRow(models=-1)


def test_verify_tolerance_boundary():
    rows = [LedgerRow(gpu_hours=1.0)]
    assert verify(rows, {"gpu_hours": 1.05}) == []
    assert len(verify(rows, {"gpu_hours": 1.06})) == 1


def test_report_table4():
    text = report(load_fixture("table4.csv"))
    lines = text.splitlines()
    assert lines[0] == "Summary of Compute"
    header = [c.strip() for c in lines[2].split("|")]
    assert header == ["Scientific Application", "Networks", "Models", "Parameters (M)",
                      "Imagery (GB)", "Epochs", "Time (h)"]
    total = [c.strip() for c in lines[-1].split("|")]
    assert total == ["TOTAL", "15", "234", "8084", "37745", "35400", "4040"]
    assert report(load_fixture("table4.csv")) == text


def test_report_single_row_total_equals_row():
    lines = report([LedgerRow(application="x", networks=1, models=2, params_millions=3.5,
                              imagery_gb=4, epochs=5, wall_hours=6.5)]).splitlines()
    row = [c.strip() for c in lines[4].split("|")][1:]
    total = [c.strip() for c in lines[-1].split("|")][1:]
    assert row == total


def test_report_missing_marker():
    text = report([LedgerRow(application="a", models=1, epochs=3), LedgerRow(application="b", models=1)])
    assert "?" in text
    total = [c.strip() for c in text.splitlines()[-2].split("|")]
    assert total[5] == "3*"
    assert text.splitlines()[-1].startswith("* total excludes blank cells")
    assert "Epochs" in text.splitlines()[-1]


def test_report_empty_is_header_only():
    lines = report([]).splitlines()
    assert len(lines) == 4 and "TOTAL" not in report([])


def test_csv_round_trip_and_append(tmp_path):
    rows = load_fixture("table2.csv")[:4]
    path = tmp_path / "ledger.csv"
    append_csv(path, rows[:2])
    append_csv(path, rows[2:])
    assert read_csv(path) == rows
    assert path.read_text().splitlines()[0] == ",".join(FIELDS)


def test_csv_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("application,models\nx,1\n")
    with pytest.raises(LedgerFormatError):
        read_csv(bad)
    bad.write_text(",".join(FIELDS) + "\n" + "x,,,,lots,,,,,,\n")
    with pytest.raises(LedgerFormatError):
        read_csv(bad)
    bad.write_text("not,a,ledger\n")
    with pytest.raises(LedgerFormatError):
        append_csv(bad, [])


value = st.one_of(st.none(), st.floats(0, 1e4, allow_nan=False).map(lambda v: round(v, 1)))
row_st = st.builds(LedgerRow, application=st.sampled_from(["a", "b", "c"]),
                   models=st.one_of(st.none(), st.integers(0, 100)), gpu_hours=value, vram_gb=value,
                   params_millions=value, wall_hours=value)


@settings(max_examples=200, deadline=None)
@given(st.lists(row_st, max_size=30), st.randoms())
def test_aggregate_permutation_invariant(rows, rnd):
    shuffled = list(rows)
    rnd.shuffle(shuffled)
    a, b = aggregate(rows, ["application"]), aggregate(shuffled, ["application"])
    assert a.total == b.total
    assert {g: a.groups[g] for g in a.groups} == {g: b.groups[g] for g in b.groups}


@settings(max_examples=200, deadline=None)
@given(st.lists(row_st, min_size=1, max_size=30))
def test_verify_self_consistent(rows):
    totals = aggregate(rows).total
    assert verify(rows, totals) == []
    grouped = aggregate(rows, ["application"])
    stated = {g[0]: sums for g, sums in grouped.groups.items()}
    assert verify(rows, stated, group_by="application") == []


def test_compensated_sum_order_free():
    rng = random.Random(1)
    vals = [rng.choice([1e15, 1.0, -0.0]) for _ in range(500)] + [0.1] * 1000
    rows = [LedgerRow(gpu_hours=v) for v in vals]
    expected = math.fsum(vals)
    for _ in range(5):
        rng.shuffle(rows)
        assert aggregate(rows).total["gpu_hours"] == expected
