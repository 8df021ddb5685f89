"""Closed-loop load bench against a running service.

Each concurrency level runs N workers that issue one request, wait for the
response, and immediately issue the next. Besides the detailed percentile
report, the CSV keeps the classic six load-test columns (concurrent users,
mean response time, TPS, CPU%, memory%, success rate) so runs at different
levels line up row by row. Values are hardware-dependent measurements, not
assertions.
"""

from __future__ import annotations

import csv
import io
import json
import os
import threading
import time
from dataclasses import dataclass, field

import httpx

from .streaming import percentile

BENCH_CSV_HEADER = [
    "concurrent_users", "response_time_ms", "tps",
    "cpu_usage_pct", "memory_usage_pct", "success_rate_pct",
]


class TargetUnreachable(Exception):
    pass


@dataclass
class LevelResult:
    concurrency: int
    requests: int
    successes: int
    elapsed_s: float
    latencies_ms: list[float] = field(default_factory=list)
    cpu_pct: float = 0.0
    mem_pct: float = 0.0

    @property
    def success_rate(self) -> float:
        return self.successes / self.requests if self.requests else 0.0

    @property
    def tps(self) -> float:
        return self.requests / self.elapsed_s if self.elapsed_s > 0 else 0.0

    @property
    def mean_ms(self) -> float:
        return sum(self.latencies_ms) / len(self.latencies_ms) if self.latencies_ms else 0.0

    def percentiles(self) -> dict:
        if not self.latencies_ms:
            return {"p50": 0.0, "p95": 0.0, "p99": 0.0}
        return {f"p{p}": percentile(self.latencies_ms, p) for p in (50, 95, 99)}


def _resource_sampler(stop: threading.Event, samples: list):
    try:
        import psutil
    except ImportError:
        return
    psutil.cpu_percent(interval=None)  # prime the counter; first read is always 0
    stop.wait(0.2)
    while not stop.is_set():
        samples.append((psutil.cpu_percent(interval=None),
                        psutil.virtual_memory().percent))
        stop.wait(0.2)


def run_level(url: str, concurrency: int, duration_s: float,
              event_template=None) -> LevelResult:
    stop_at = time.perf_counter() + duration_s
    lock = threading.Lock()
    latencies: list[float] = []
    counts = {"requests": 0, "successes": 0}
    resource_samples: list = []
    stop_flag = threading.Event()

    def worker(worker_id: int):
        with httpx.Client(base_url=url, timeout=10.0) as client:
            i = 0
            while time.perf_counter() < stop_at:
                event = {
                    "id": f"bench-{worker_id}-{time.time_ns()}-{i}",
                    "timestamp": int(time.time() * 1000),
                    "account": f"BENCH-{worker_id % 50:03d}",
                    "amount": 25.0 + (i % 1900),
                    "channel": "api",
                    "region": "domestic",
                }
                if event_template:
                    event.update(event_template)
                    event["id"] = f"bench-{worker_id}-{time.time_ns()}-{i}"
                t0 = time.perf_counter()
                ok = False
                try:
                    resp = client.post("/v1/events", json=event)
                    ok = resp.status_code < 400
                except httpx.HTTPError:
                    ok = False
                dt_ms = (time.perf_counter() - t0) * 1000.0
                with lock:
                    counts["requests"] += 1
                    counts["successes"] += 1 if ok else 0
                    latencies.append(dt_ms)
                i += 1

    sampler = threading.Thread(target=_resource_sampler, args=(stop_flag, resource_samples))
    sampler.start()
    t_start = time.perf_counter()
    threads = [threading.Thread(target=worker, args=(w,)) for w in range(concurrency)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    elapsed = time.perf_counter() - t_start
    stop_flag.set()
    sampler.join()

    cpu = sum(s[0] for s in resource_samples) / len(resource_samples) if resource_samples else 0.0
    mem = sum(s[1] for s in resource_samples) / len(resource_samples) if resource_samples else 0.0
    return LevelResult(concurrency=concurrency, requests=counts["requests"],
                       successes=counts["successes"], elapsed_s=elapsed,
                       latencies_ms=latencies, cpu_pct=cpu, mem_pct=mem)


def bench(url: str, levels: list[int], duration_s: float = 10.0,
          out_dir: str | None = None) -> list[LevelResult]:
    """Run the closed-loop bench at each level; optionally write report files."""
    try:
        resp = httpx.get(url.rstrip("/") + "/v1/health", timeout=5.0)
        resp.raise_for_status()
    except httpx.HTTPError as e:
        raise TargetUnreachable(f"health check failed for {url}: {e}") from None

    results = [run_level(url, level, duration_s) for level in levels]
    if out_dir is not None:
        write_bench_files(results, out_dir)
    return results


def render_bench_csv(results: list[LevelResult]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(BENCH_CSV_HEADER)
    for r in results:
        writer.writerow([
            r.concurrency,
            f"{r.mean_ms:.2f}",
            f"{r.tps:.1f}",
            f"{r.cpu_pct:.1f}",
            f"{r.mem_pct:.1f}",
            f"{r.success_rate * 100.0:.2f}",
        ])
    return buf.getvalue()


def write_bench_files(results: list[LevelResult], out_dir: str) -> dict[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "csv": os.path.join(out_dir, "bench.csv"),
        "detail": os.path.join(out_dir, "bench_detail.json"),
    }
    with open(paths["csv"], "w", encoding="utf-8", newline="") as f:
        f.write(render_bench_csv(results))
    detail = []
    for r in results:
        detail.append({
            "concurrency": r.concurrency,
            "requests": r.requests,
            "successes": r.successes,
            "success_rate": r.success_rate,
            "elapsed_s": r.elapsed_s,
            "tps": r.tps,
            "response_time_ms_mean": r.mean_ms,
            **r.percentiles(),
            "cpu_usage_pct": r.cpu_pct,
            "memory_usage_pct": r.mem_pct,
            "raw_latencies_ms": r.latencies_ms,
        })
    with open(paths["detail"], "w", encoding="utf-8") as f:
        json.dump(detail, f)
    return paths
