"""Tumbling-window alerting and nearest-rank latency percentiles."""
import numpy as np

from autocomply.domain import AnomalyFlag
from autocomply.streaming import (
    AlertPolicy, LatencyStats, TumblingWindow, WindowingState, emit_alerts)

state = WindowingState(window=TumblingWindow(60_000), lateness_ms=5_000)
rng = np.random.default_rng(2)

closed = []
for i in range(300):
    ts = 1_000_000 + i * 700
    score = float(rng.beta(2, 6))
    flag = AnomalyFlag.OUTLIER if rng.random() < 0.08 else AnomalyFlag.INLIER
    closed.extend(state.observe(ts, (f"case-{i}", score, flag, ts)))
closed.extend(state.flush())

policy = AlertPolicy(score_warn=0.5, score_high=0.7, rate_threshold=5)
total = 0
for widx, records in closed:
    alerts = emit_alerts(policy, widx, records)
    total += len(alerts)
    if alerts:
        worst = alerts[0]
        print(f"window {widx}: {len(records)} events, {len(alerts)} alerts "
              f"(top: {worst.severity.value} on {worst.case_id})")
print(f"windows closed: {state.windows_closed}, alerts: {total}, "
      f"dead-lettered: {state.dead_letter_count}")

stats = LatencyStats()
stats.extend(rng.gamma(2.0, 3.0, size=5_000))
print(f"latency p50/p95/p99: {stats.percentile(50):.1f} / "
      f"{stats.percentile(95):.1f} / {stats.percentile(99):.1f} ms")
