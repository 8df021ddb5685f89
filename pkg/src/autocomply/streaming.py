"""Windowed stream monitoring: tumbling windows, threshold alerts,
nearest-rank latency percentiles, and throughput metering.

Windows are epoch-aligned and tumbling, so every event timestamp maps to
exactly one window (the conservation property the metrics rely on).
Event-time windowing allows a bounded lateness; anything older goes to a
dead-letter count instead of being silently dropped.
"""

from __future__ import annotations

import math
import queue
import threading
from dataclasses import dataclass, field

import numpy as np

from .domain import Alert, AnomalyFlag, Severity

DEFAULT_WINDOW_MS = 60_000
DEFAULT_LATENESS_MS = 5_000


class EmptySample(Exception):
    pass


@dataclass(frozen=True)
class TumblingWindow:
    width_ms: int = DEFAULT_WINDOW_MS

    def __post_init__(self):
        if self.width_ms <= 0:
            raise ValueError("window width must be positive")


def assign_window(window: TumblingWindow, timestamp_ms: int) -> int:
    """Window n covers [n*width, (n+1)*width); left-closed."""
    if timestamp_ms < 0:
        raise ValueError("timestamps must be >= 0")
    return timestamp_ms // window.width_ms


@dataclass(frozen=True)
class AlertPolicy:
    score_warn: float = 0.80
    score_high: float = 0.95
    rate_threshold: int = 10  # outliers per window that raise a window-level alert

    def __post_init__(self):
        if not (0.0 < self.score_warn < self.score_high <= 1.0):
            raise ValueError("need 0 < score_warn < score_high <= 1")


_SEVERITY_ORDER = {Severity.HIGH: 0, Severity.WARNING: 1, Severity.INFO: 2}


def emit_alerts(policy: AlertPolicy, window_index: int, window_cases: list) -> list[Alert]:
    """Alerts for one closed window.

    window_cases carry (case_id, risk_score, anomaly_flag, timestamp).
    Per-case: score >= score_high -> high, >= score_warn -> warning. One
    extra window-level high alert fires when the outlier count reaches
    the rate threshold. Output ordered by (severity desc, timestamp).
    """
    alerts: list[Alert] = []
    outliers = 0
    window_end = 0
    for case_id, score, flag, ts in window_cases:
        window_end = max(window_end, ts)
        if flag is AnomalyFlag.OUTLIER:
            outliers += 1
        if score is None:
            continue
        if score >= policy.score_high:
            severity = Severity.HIGH
        elif score >= policy.score_warn:
            severity = Severity.WARNING
        else:
            continue
        alerts.append(Alert(
            alert_id=f"{case_id}-risk",
            case_id=case_id,
            severity=severity,
            reason=f"risk_score {score:.4f} >= {policy.score_warn if severity is Severity.WARNING else policy.score_high}",
            emitted_at=ts,
        ))
    if outliers >= policy.rate_threshold:
        alerts.append(Alert(
            alert_id=f"w{window_index}-rate",
            case_id=f"window:{window_index}",
            severity=Severity.HIGH,
            reason=f"outlier_rate {outliers} >= {policy.rate_threshold} in window {window_index}",
            emitted_at=window_end,
        ))
    alerts.sort(key=lambda a: (_SEVERITY_ORDER[a.severity], a.emitted_at))
    return alerts


class LatencyStats:
    """Accumulates per-event latency samples; percentiles are nearest-rank."""

    def __init__(self):
        self._samples: list[float] = []
        self._sorted: np.ndarray | None = None

    def add(self, latency: float) -> None:
        self._samples.append(latency)
        self._sorted = None

    def extend(self, latencies) -> None:
        self._samples.extend(float(v) for v in latencies)
        self._sorted = None

    @property
    def count(self) -> int:
        return len(self._samples)

    def mean(self) -> float:
        if not self._samples:
            raise EmptySample("no latency samples")
        return float(np.mean(self._samples))

    def percentile(self, p: float) -> float:
        """Nearest-rank: the sorted sample at 1-based index ceil(p/100 * n)."""
        if not self._samples:
            raise EmptySample("no latency samples")
        if not (0.0 < p <= 100.0):
            raise ValueError("p must be in (0, 100]")
        if self._sorted is None:
            self._sorted = np.sort(np.asarray(self._samples, dtype=np.float64))
        rank = math.ceil(p / 100.0 * len(self._sorted))
        return float(self._sorted[rank - 1])


def percentile(samples, p: float) -> float:
    stats = LatencyStats()
    stats.extend(samples)
    return stats.percentile(p)


def throughput_eps(completion_times: list[float]) -> float:
    """Events per second over the steady-state middle 90% of the run.

    completion_times are wall-clock seconds; the first and last 5% of the
    run's duration are excluded as warmup/drain.
    """
    if not completion_times:
        return 0.0
    t = np.sort(np.asarray(completion_times, dtype=np.float64))
    t0, t1 = t[0], t[-1]
    duration = t1 - t0
    if duration <= 0:
        return 0.0
    lo = t0 + 0.05 * duration
    hi = t1 - 0.05 * duration
    inside = np.count_nonzero((t >= lo) & (t <= hi))
    span = hi - lo
    if span <= 0:
        return 0.0
    return float(inside / span)


@dataclass
class WindowingState:
    """Event-time tumbling windows with bounded lateness and dead-lettering."""

    window: TumblingWindow = field(default_factory=TumblingWindow)
    lateness_ms: int = DEFAULT_LATENESS_MS
    watermark_ms: int = 0
    open_windows: dict[int, list] = field(default_factory=dict)
    windows_closed: int = 0
    dead_letter_count: int = 0
    windowed_count: int = 0

    def observe(self, timestamp_ms: int, record) -> list[tuple[int, list]]:
        """Route one record; returns any windows closed by watermark advance."""
        self.watermark_ms = max(self.watermark_ms, timestamp_ms)
        idx = assign_window(self.window, timestamp_ms)
        if (idx + 1) * self.window.width_ms + self.lateness_ms <= self.watermark_ms:
            # the event's window already closed; count it instead of dropping silently
            self.dead_letter_count += 1
            return []
        self.open_windows.setdefault(idx, []).append(record)
        self.windowed_count += 1
        closeable = [
            w for w in self.open_windows
            if (w + 1) * self.window.width_ms + self.lateness_ms <= self.watermark_ms
        ]
        closed = []
        for w in sorted(closeable):
            closed.append((w, self.open_windows.pop(w)))
            self.windows_closed += 1
        return closed

    def flush(self) -> list[tuple[int, list]]:
        """Close every remaining window (end of stream)."""
        closed = [(w, self.open_windows.pop(w)) for w in sorted(self.open_windows)]
        self.windows_closed += len(closed)
        return closed


class BoundedIngestQueue:
    """Blocking bounded queue: producers never drop, they wait.

    Tracks accepted vs processed so conservation (processed == accepted)
    is checkable after a run.
    """

    _DONE = object()

    def __init__(self, maxsize: int = 10_000):
        self._q: queue.Queue = queue.Queue(maxsize=maxsize)
        self._accepted = 0
        self._processed = 0
        self._lock = threading.Lock()

    @property
    def accepted(self) -> int:
        with self._lock:
            return self._accepted

    @property
    def processed(self) -> int:
        with self._lock:
            return self._processed

    def put(self, item) -> None:
        self._q.put(item)  # blocks when full
        with self._lock:
            self._accepted += 1

    def close(self) -> None:
        self._q.put(self._DONE)

    def drain(self, max_items: int = 1024) -> list | None:
        """Up to max_items pending items; None once the queue is closed."""
        first = self._q.get()
        if first is self._DONE:
            return None
        batch = [first]
        while len(batch) < max_items:
            try:
                item = self._q.get_nowait()
            except queue.Empty:
                break
            if item is self._DONE:
                self._q.put(self._DONE)  # keep the sentinel for the next drain
                break
            batch.append(item)
        with self._lock:
            self._processed += len(batch)
        return batch
