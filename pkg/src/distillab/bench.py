"""Parameter-compression and inference-latency measurement.

Timing covers the forward pass only (no tokenization or I/O) over fixed
random id sequences of length 32, mirroring batch inference at batch size
32 and online inference at batch size 1. The median is the primary
statistic; the mean is also reported.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .models import count_params
from .nn import no_grad

__all__ = ["LatencyStats", "BenchReport", "measure_latency", "compression_report"]

_bench_active = False

DEFAULT_SEQ_LEN = 32


@dataclass(frozen=True)
class LatencyStats:
    """Per-run wall-clock seconds to predict all queries."""

    median: float
    mean: float
    p95: float
    runs: int
    queries: int
    batch_size: int

    def per_query_ms(self) -> float:
        return 1000.0 * self.median / self.queries


def measure_latency(
    model,
    batch_size: int,
    query_count: int = 1000,
    runs: int = 100,
    warmup: int = 3,
    seq_len: int = DEFAULT_SEQ_LEN,
    seed: int = 0,
) -> LatencyStats:
    """Time `runs` passes over `query_count` random queries.

    The model must expose predict_probs over (B, seq_len) id batches and a
    config with vocab_size/max_len. Refuses to run re-entrantly: latency
    numbers are only meaningful with the process to itself.
    """
    global _bench_active
    if warmup < 1:
        raise ConfigurationError("need at least one warmup run")
    if _bench_active:
        raise ConfigurationError("another latency measurement is already running")
    if model.config.max_len != seq_len:
        raise ConfigurationError(
            f"model max_len {model.config.max_len} != benchmark sequence length {seq_len}"
        )
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xBE7C]))
    # content ids only: PAD would shorten the effective sequence
    ids = rng.integers(1, model.config.vocab_size, size=(query_count, seq_len))
    batches = [ids[lo : lo + batch_size] for lo in range(0, query_count, batch_size)]

    _bench_active = True
    try:
        with no_grad():
            for _ in range(warmup):
                for batch in batches:
                    model.predict_probs(batch)
            samples = []
            for _ in range(runs):
                start = time.perf_counter()
                for batch in batches:
                    model.predict_probs(batch)
                samples.append(time.perf_counter() - start)
    finally:
        _bench_active = False
    arr = np.array(samples)
    return LatencyStats(
        median=float(np.median(arr)),
        mean=float(arr.mean()),
        p95=float(np.percentile(arr, 95)),
        runs=runs,
        queries=query_count,
        batch_size=batch_size,
    )


@dataclass
class BenchReport:
    teacher_params: int
    student_params: int
    compression: float
    teacher_batch: LatencyStats
    student_batch: LatencyStats
    batch_speedup: float
    teacher_online: LatencyStats | None = None
    student_online: LatencyStats | None = None
    online_speedup: float | None = None
    extra: dict = field(default_factory=dict)

    def table(self) -> str:
        lines = [
            f"{'':<14} {'params':>12} {'batch med (s)':>14} {'batch mean (s)':>15}",
            f"{'teacher':<14} {self.teacher_params:>12d} {self.teacher_batch.median:>14.6f} {self.teacher_batch.mean:>15.6f}",
            f"{'student':<14} {self.student_params:>12d} {self.student_batch.median:>14.6f} {self.student_batch.mean:>15.6f}",
            f"compression = {self.compression:.2f}x   batch speedup = {self.batch_speedup:.2f}x",
        ]
        if self.online_speedup is not None:
            lines.append(f"online speedup = {self.online_speedup:.2f}x")
        return "\n".join(lines)

    def records(self) -> str:
        rows = [
            ("teacher", self.teacher_params, self.teacher_batch),
            ("student", self.student_params, self.student_batch),
        ]
        out = []
        for name, params, stats in rows:
            out.append(
                f"{name}\t{params}\t{stats.median:.6f}\t{stats.mean:.6f}\t{stats.p95:.6f}"
            )
        out.append(f"compression\t{self.compression:.4f}")
        out.append(f"batch_speedup\t{self.batch_speedup:.4f}")
        if self.online_speedup is not None:
            out.append(f"online_speedup\t{self.online_speedup:.4f}")
        return "\n".join(out) + "\n"


def compression_report(
    teacher,
    student,
    batch_size: int = 32,
    query_count: int = 1000,
    runs: int = 100,
    online: bool = False,
    online_queries: int = 64,
    online_runs: int = 10,
    seq_len: int = DEFAULT_SEQ_LEN,
) -> BenchReport:
    """Exact parameter ratio plus measured latency ratios on this machine."""
    teacher_params = count_params(teacher)
    student_params = count_params(student)
    t_batch = measure_latency(teacher, batch_size, query_count, runs, seq_len=seq_len)
    s_batch = measure_latency(student, batch_size, query_count, runs, seq_len=seq_len)
    report = BenchReport(
        teacher_params=teacher_params,
        student_params=student_params,
        compression=teacher_params / student_params,
        teacher_batch=t_batch,
        student_batch=s_batch,
        batch_speedup=t_batch.median / s_batch.median,
    )
    if online:
        t_online = measure_latency(teacher, 1, online_queries, online_runs, seq_len=seq_len)
        s_online = measure_latency(student, 1, online_queries, online_runs, seq_len=seq_len)
        report.teacher_online = t_online
        report.student_online = s_online
        report.online_speedup = t_online.median / s_online.median
    return report
