import csv
import io
import random
import statistics

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pbbsim import metrics
from pbbsim.metrics import (
    CSV_HEADER, READ, RESPONSE, WRITE, MetricsError, MetricsLog, StratumStats, compute_report,
)


def log_from(spec):
    """spec: list of (kind, mixers, created_at, delivered_at or None)."""
    log = MetricsLog()
    for uid, (kind, k, c, d) in enumerate(spec, 1):
        log.record_created(uid, kind, k, c)
        if d is not None:
            log.record_delivered(uid, d)
    return log


def test_create_then_deliver_latency():
    log = log_from([(WRITE, 0, 1.5, 4.0)])
    assert log.records[1].latency == 2.5


def test_deliver_unknown_and_twice_errors():
    log = log_from([(WRITE, 0, 0.0, None)])
    with pytest.raises(MetricsError):
        log.record_delivered(99, 1.0)
    log.record_delivered(1, 1.0)
    with pytest.raises(MetricsError):
        log.record_delivered(1, 2.0)


def test_bad_records_rejected():
    log = MetricsLog()
    with pytest.raises(MetricsError):
        log.record_created(1, "OTHER", 0, 0.0)
    with pytest.raises(MetricsError):
        log.record_created(1, WRITE, 4, 0.0)
    log.record_created(1, WRITE, 0, 5.0)
    with pytest.raises(MetricsError):
        log.record_created(1, WRITE, 0, 5.0)
    with pytest.raises(MetricsError):
        log.record_delivered(1, 4.0)


def test_undelivered_in_denominator_only():
    rep = compute_report(log_from([(WRITE, 1, 0.0, 3.0), (WRITE, 1, 0.0, None)]))
    s = rep.strata[WRITE][1]
    assert (s.created, s.delivered, s.ratio) == (2, 1, 0.5)
    assert s.latency_mean == s.latency_median == 3.0


def test_four_way_mean_example():
    # stratum ratios 1, 1, 0.5, 0.5 -> total 0.75
    spec = [(WRITE, 0, 0, 1), (WRITE, 1, 0, 1), (WRITE, 2, 0, 1), (WRITE, 2, 0, None),
            (WRITE, 3, 0, 1), (WRITE, 3, 0, None)]
    rep = compute_report(log_from(spec))
    assert [s.ratio for s in rep.strata[WRITE]] == [1.0, 1.0, 0.5, 0.5]
    assert rep.totals[WRITE].ratio == pytest.approx(0.75, abs=1e-12)
    # not the pooled ratio 4/6
    assert rep.totals[WRITE].ratio != pytest.approx(4 / 6)


def test_median_mean_example():
    st_ = StratumStats.from_latencies(3, [2.0, 4.0, 10.0])
    assert st_.latency_median == 4.0
    assert st_.latency_mean == pytest.approx(16 / 3)


def test_empty_stratum_excluded():
    rep = compute_report(log_from([(READ, 0, 0, 1), (READ, 2, 0, None)]))
    assert rep.strata[READ][1].ratio is None
    assert rep.totals[READ].ratio == pytest.approx(0.5)


def test_empty_log_all_absent():
    rep = compute_report(MetricsLog(), "x", 1, "d")
    text = metrics.report_csv(rep)
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == CSV_HEADER and len(rows) == 11
    assert all(r[6] == r[7] == r[8] == "" for r in rows[1:])


def test_totals_latency_over_union():
    spec = [(WRITE, 0, 0, 1), (WRITE, 1, 0, 5), (WRITE, 3, 0, 9), (WRITE, 3, 0, 10)]
    tot = compute_report(log_from(spec)).totals[WRITE]
    assert tot.latency_median == statistics.median([1, 5, 9, 10])
    assert tot.latency_mean == pytest.approx(25 / 4)


def test_response_rows_only_in_text(tmp_path):
    rep = compute_report(log_from([(READ, 0, 0, 2), (RESPONSE, 1, 0, 30)]), "s", 3, "abc123")
    csv_path, txt_path = metrics.write_report(rep, tmp_path / "out")
    assert RESPONSE not in csv_path.read_text()
    text = txt_path.read_text()
    assert "abc123" in text and "RESPONSE" in text and "scenario: s" in text and "seed: 3" in text
    assert text.count("\nWRITE") == 5 and text.count("\nREAD ") == 5


def test_write_report_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        metrics.write_report(compute_report(MetricsLog()), blocker / "sub")


def test_read_report_header_mismatch(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(MetricsError):
        metrics.read_report_csv(p)


def test_compare_self_all_zero(tmp_path):
    rep = compute_report(log_from([(WRITE, 0, 0, 2), (READ, 1, 0, 3)]), "s", 1, "d")
    metrics.write_report(rep, tmp_path)
    t = metrics.read_report_csv(tmp_path / "report.csv")
    rows = list(csv.DictReader(io.StringIO(metrics.compare_tables(t, t))))
    assert rows and all(r["delta"] in ("", "0.000000") for r in rows)
    assert any(r["ratio"] == "1.000000" for r in rows)


def test_aggregate_means():
    a = compute_report(log_from([(WRITE, 0, 0, 2)]), "s", 1, "d")
    b = compute_report(log_from([(WRITE, 0, 0, 4), (WRITE, 0, 0, None)]), "s", 2, "d")
    tables = [list(csv.DictReader(io.StringIO(metrics.report_csv(r)))) for r in (a, b)]
    agg = list(csv.DictReader(io.StringIO(metrics.aggregate_rows(tables, "s"))))
    row = agg[0]
    assert row["seed"] == "mean"
    assert float(row["ratio"]) == pytest.approx(0.75)
    assert float(row["latency_mean"]) == pytest.approx(3.0)
    assert agg[1]["ratio"] == ""


@settings(max_examples=150, deadline=None)
@given(st.lists(st.tuples(st.sampled_from([WRITE, READ]), st.integers(0, 3),
                          st.floats(0, 1000), st.one_of(st.none(), st.floats(0, 1000))),
                max_size=80))
def test_identities_property(spec):
    spec = [(k, m, c, None if d is None else c + d) for k, m, c, d in spec]
    rep = compute_report(log_from(spec))
    for kind in (WRITE, READ):
        present = [s.ratio for s in rep.strata[kind] if s.ratio is not None]
        tot = rep.totals[kind]
        if present:
            assert abs(tot.ratio - sum(present) / len(present)) <= 1e-9
        else:
            assert tot.ratio is None
        lat = sorted(d - c for k, _, c, d in spec if k == kind and d is not None)
        if lat:
            n = len(lat)
            oracle = lat[n // 2] if n % 2 else (lat[n // 2 - 1] + lat[n // 2]) / 2
            assert tot.latency_median == pytest.approx(oracle, abs=1e-9)
        for k, s in enumerate(rep.strata[kind]):
            assert s.ratio is None or 0 <= s.ratio <= 1


def test_adding_delivery_never_lowers_ratio():
    r = random.Random(0)
    log = MetricsLog()
    for uid in range(1, 41):
        log.record_created(uid, WRITE, r.randrange(4), 0.0)
    prev = [s.ratio for s in compute_report(log).strata[WRITE]]
    for uid in r.sample(range(1, 41), 40):
        log.record_delivered(uid, 1.0)
        cur = [s.ratio for s in compute_report(log).strata[WRITE]]
        assert all(c >= p for c, p in zip(cur, prev))
        prev = cur
