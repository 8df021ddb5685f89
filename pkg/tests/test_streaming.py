import threading
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from autocomply import streaming
from autocomply.domain import AnomalyFlag, Severity

from oracles import percentile_by_sort


def test_assign_window_floor_arithmetic():
    w = streaming.TumblingWindow(60_000)
    assert streaming.assign_window(w, 125_000) == 2


def test_window_boundary_is_left_closed():
    w = streaming.TumblingWindow(60_000)
    assert streaming.assign_window(w, 120_000) == 2
    assert streaming.assign_window(w, 119_999) == 1


def test_every_timestamp_lands_in_exactly_one_window():
    w = streaming.TumblingWindow(7_000)
    rng = np.random.default_rng(0)
    stamps = rng.integers(0, 10_000_000, size=10_000)
    counts: dict[int, int] = {}
    for t in stamps:
        idx = streaming.assign_window(w, int(t))
        assert idx * w.width_ms <= t < (idx + 1) * w.width_ms
        counts[idx] = counts.get(idx, 0) + 1
    assert sum(counts.values()) == 10_000


def _case(cid, score, flag, ts):
    return (cid, score, flag, ts)


def test_alert_thresholds():
    policy = streaming.AlertPolicy()
    alerts = streaming.emit_alerts(policy, 0, [
        _case("c1", 0.97, AnomalyFlag.INLIER, 10),
        _case("c2", 0.85, AnomalyFlag.INLIER, 20),
        _case("c3", 0.50, AnomalyFlag.INLIER, 30),
    ])
    by_case = {a.case_id: a for a in alerts}
    assert by_case["c1"].severity is Severity.HIGH
    assert by_case["c2"].severity is Severity.WARNING
    assert "c3" not in by_case


def test_window_rate_alert_fires_once():
    policy = streaming.AlertPolicy(rate_threshold=10)
    cases = [_case(f"c{i}", 0.1, AnomalyFlag.OUTLIER, i) for i in range(12)]
    alerts = streaming.emit_alerts(policy, 7, cases)
    rate_alerts = [a for a in alerts if a.case_id == "window:7"]
    assert len(rate_alerts) == 1
    assert rate_alerts[0].severity is Severity.HIGH


def test_alert_ordering_severity_then_time():
    policy = streaming.AlertPolicy()
    alerts = streaming.emit_alerts(policy, 0, [
        _case("w1", 0.85, AnomalyFlag.INLIER, 5),
        _case("h2", 0.99, AnomalyFlag.INLIER, 50),
        _case("h1", 0.96, AnomalyFlag.INLIER, 40),
        _case("w2", 0.88, AnomalyFlag.INLIER, 45),
    ])
    assert [a.case_id for a in alerts] == ["h1", "h2", "w1", "w2"]


def test_alert_emission_is_idempotent():
    policy = streaming.AlertPolicy()
    cases = [_case("c1", 0.9, AnomalyFlag.OUTLIER, 1)]
    first = streaming.emit_alerts(policy, 3, cases)
    second = streaming.emit_alerts(policy, 3, cases)
    assert [a.to_json_dict() for a in first] == [a.to_json_dict() for a in second]


def test_alert_policy_validation():
    with pytest.raises(ValueError):
        streaming.AlertPolicy(score_warn=0.9, score_high=0.8)


def test_percentile_examples():
    assert streaming.percentile(range(1, 101), 95) == 95
    assert streaming.percentile([42.0], 1) == 42.0
    assert streaming.percentile([42.0], 100) == 42.0


def test_percentile_matches_sort_oracle():
    rng = np.random.default_rng(1)
    samples = rng.normal(size=1000).tolist()
    for p in (50, 95, 99):
        assert streaming.percentile(samples, p) == percentile_by_sort(samples, p)


def test_percentile_empty_and_domain():
    stats = streaming.LatencyStats()
    with pytest.raises(streaming.EmptySample):
        stats.percentile(50)
    stats.add(1.0)
    with pytest.raises(ValueError):
        stats.percentile(0.0)
    with pytest.raises(ValueError):
        stats.percentile(101.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=200),
       st.floats(0.5, 100.0), st.floats(0.5, 100.0))
def test_percentile_monotone_in_p(samples, p, q):
    lo, hi = min(p, q), max(p, q)
    assert streaming.percentile(samples, lo) <= streaming.percentile(samples, hi)


def test_throughput_example():
    # 10k events spread over 2 s of steady state -> 5k ev/s
    times = np.linspace(100.0, 102.0, 10_000).tolist()
    assert streaming.throughput_eps(times) == pytest.approx(5000.0, rel=1e-2)


def test_throughput_zero_events():
    assert streaming.throughput_eps([]) == 0.0


def test_throughput_excludes_warmup_and_drain():
    # burst at the start, nothing after: steady-state window sees only part
    times = [0.0] * 100 + [10.0]
    eps = streaming.throughput_eps(times)
    assert eps < 100.0 / 10.0  # the t=0 burst is outside [0.5, 9.5]


def test_windowing_conservation_and_dead_letter():
    state = streaming.WindowingState(window=streaming.TumblingWindow(1_000),
                                     lateness_ms=500)
    closed = []
    for ts in (100, 400, 900, 1200, 2600):
        closed.extend(state.observe(ts, ("r", ts)))
    # watermark 2600 closes windows 0 and 1
    assert state.windows_closed == 2
    late = state.observe(100, ("late", 100))
    assert late == []
    assert state.dead_letter_count == 1
    closed.extend(state.flush())
    total_records = sum(len(records) for _, records in closed)
    assert total_records + state.dead_letter_count == 6
    assert state.windowed_count == 5


def test_bounded_queue_backpressure_never_drops():
    q = streaming.BoundedIngestQueue(maxsize=8)
    produced = 500

    def producer():
        for i in range(produced):
            q.put(i)
        q.close()

    consumed = []

    def consumer():
        while True:
            batch = q.drain(max_items=16)
            if batch is None:
                break
            consumed.extend(batch)
            time.sleep(0.0005)  # slower than the producer

    t1 = threading.Thread(target=producer)
    t2 = threading.Thread(target=consumer)
    t1.start()
    t2.start()
    t1.join()
    t2.join()
    assert q.accepted == produced
    assert q.processed == produced
    assert consumed == list(range(produced))
