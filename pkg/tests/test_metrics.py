import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import small_config
from swarm_offload.engine import Engine
from swarm_offload.metrics import (
    METRICS,
    LedgerError,
    MessageSent,
    MetricsLedger,
    OffloadRequested,
    QueueSample,
    RequestLost,
    ResultReturned,
    TargetFound,
    compute_summary,
    export_timeseries,
    read_summary_csv,
    summary_row,
    timeseries,
    write_summary_csv,
)


def ledger_of(*records, duration_ms=0):
    led = MetricsLedger("aco", duration_ms)
    for r in sorted(records, key=lambda r: r.t_ms):
        led.append(r)
    return led


def test_load_distribution_is_plain_mean():
    led = ledger_of(*(QueueSample(i * 1000, n, occ)
                      for i in range(3) for n, occ in (("a", 2), ("b", 8))))
    assert compute_summary(led).LD == 5.0


def test_hops_and_hit_ratio():
    led = ledger_of(
        OffloadRequested(0, "r1", "a"), OffloadRequested(0, "r2", "a"),
        OffloadRequested(0, "r3", "a"), OffloadRequested(0, "r4", "a"),
        TargetFound(10, "r1", 1), TargetFound(10, "r2", 3),
        RequestLost(20, "r3"), RequestLost(20, "r4"),
    )
    s = compute_summary(led)
    assert s.HPH == 2.0 and s.HMR == 50.0


def test_global_rate_and_service_time():
    led = ledger_of(
        OffloadRequested(0, "r1", "a"), OffloadRequested(1000, "r2", "a"),
        TargetFound(2000, "r1", 1), TargetFound(2000, "r2", 1),
        ResultReturned(12_000, "r1"),
    )
    s = compute_summary(led)
    assert s.GR == 50.0 and s.ST == 12.0 and s.returned == 1


def test_messages_counted_all_but_attributed_per_request():
    led = ledger_of(
        OffloadRequested(0, "r1", "a"), OffloadRequested(0, "r2", "a"),
        MessageSent(1, "r1", "aco", "a", "ForwardAnt"),
        MessageSent(2, "r1", "aco", "b", "ForwardAnt"),
        MessageSent(3, "r2", "aco", "a", "ForwardAnt"),
        MessageSent(4, None, "aco", "a", "DisconnectNotice"),
    )
    s = compute_summary(led)
    assert s.AM == 4 and s.MPR == 1.5 and s.attributed_messages == 3


def test_no_requests_gives_absent_values(tmp_path):
    s = compute_summary(ledger_of(QueueSample(0, "a", 1)))
    assert (s.HPH, s.MPR, s.HMR, s.GR, s.ST) == (None, None, None, None, None)
    assert s.AM == 0 and s.LD == 1.0
    path = tmp_path / "summary.csv"
    write_summary_csv([summary_row(s, strategy="aco", nodes=2, queue=5, env="static", seed=1)], path)
    assert "NA" in path.read_text().splitlines()[1]
    assert read_summary_csv(path)[0]["HMR"] is None


def test_ledger_rejects_time_travel_and_duplicates():
    led = MetricsLedger()
    led.append(QueueSample(100, "a", 0))
    with pytest.raises(LedgerError):
        led.append(QueueSample(99, "a", 0))
    led.append(OffloadRequested(100, "r1", "a"))
    with pytest.raises(LedgerError):
        led.append(OffloadRequested(200, "r1", "a"))


def test_timeseries_bucket_count():
    samples = [QueueSample(t, "a", 1) for t in range(0, 600_000, 10_000)]
    series = timeseries(ledger_of(*samples, duration_ms=600_000), 60)
    assert len(series["LD"]) == 10
    assert [t for t, _ in series["LD"]] == [60.0 * i for i in range(10)]


def test_timeseries_rejects_bad_bucket():
    with pytest.raises(ValueError):
        timeseries(MetricsLedger(), 0)


def test_csv_header_and_empty_ledger(tmp_path):
    led = ledger_of(OffloadRequested(0, "r1", "a"), TargetFound(500, "r1", 2), duration_ms=60_000)
    paths = export_timeseries(led, 30, tmp_path, "cell")
    assert set(paths) == set(METRICS)
    lines = paths["HPH"].read_text().splitlines()
    assert lines == ["time,value", "0,2.0"]
    empty = export_timeseries(MetricsLedger(), 30, tmp_path / "empty", "cell")
    for p in empty.values():
        assert p.read_text() == "time,value\n"


@pytest.mark.parametrize("seed", range(6))
def test_timeseries_reconciles_with_summary(seed):
    res = Engine(small_config(seed)).run()
    series = timeseries(res.ledger, 45)
    led = res.ledger
    n_by_bucket = {}
    for r in led.of(OffloadRequested):
        n_by_bucket[r.t_ms // 45_000 * 45.0] = n_by_bucket.get(r.t_ms // 45_000 * 45.0, 0) + 1
    if res.summary.requests:
        weighted = sum(v * n_by_bucket[t] for t, v in series["MPR"]) / res.summary.requests
        assert weighted == pytest.approx(res.summary.MPR, abs=1e-9)
        gr = sum(v * n_by_bucket[t] for t, v in series["GR"]) / res.summary.requests
        assert gr == pytest.approx(res.summary.GR, abs=1e-9)
    assert sum(v for _, v in series["AM"]) == res.summary.AM
    for metric in ("HMR", "GR"):
        assert all(0 <= v <= 100 for _, v in series[metric])


def test_summary_csv_roundtrip(tmp_path):
    rows = []
    for seed in range(3):
        res = Engine(small_config(seed)).run()
        rows.append(summary_row(res.summary, strategy=res.config.strategy, nodes=res.config.node_count,
                                queue="table", env=res.config.environment, seed=seed))
    path = tmp_path / "s.csv"
    write_summary_csv(rows, path)
    back = read_summary_csv(path)
    assert path.read_text().splitlines()[0] == "strategy,nodes,queue,env,seed,LD,ST,HPH,AM,MPR,HMR,GR"
    for a, b in zip(rows, back):
        for m in METRICS:
            if a[m] is None:
                assert b[m] is None
            else:
                assert b[m] == pytest.approx(a[m], rel=1e-5, abs=1e-6)


outcomes = st.lists(st.tuples(st.sampled_from(["hit", "miss", "open"]), st.integers(1, 9),
                              st.booleans()), max_size=40)


@settings(max_examples=80, deadline=None)
@given(outcomes)
def test_ratio_metrics_stay_in_range(reqs):
    records = []
    for i, (outcome, hops, back) in enumerate(reqs):
        q = f"r{i}"
        records.append(OffloadRequested(i, q, "a"))
        if outcome == "hit":
            records.append(TargetFound(i + 100, q, hops))
            if back:
                records.append(ResultReturned(i + 200, q))
        elif outcome == "miss":
            records.append(RequestLost(i + 100, q))
    s = compute_summary(ledger_of(*records))
    for value in (s.HMR, s.GR):
        assert value is None or 0 <= value <= 100
    if s.HPH is not None:
        assert 1 <= s.HPH <= 9
    assert s.hits + s.misses <= s.requests
    assert s.GR is None or math.isclose(s.GR, 100 * s.returned / s.requests)
