"""Embedded-vs-remote integration benchmark for the model scoring pipe.

Both integrations score identical synthetic data through the same worker
pool; the only difference is the per-record injected network wait of the
simulated remote call. With per-record compute C ms and network delay L ms,
the expected throughput ratio is (L + C) / C when the lanes are not
contending for cores.
"""

from __future__ import annotations

import statistics
import string
import random
import time
from dataclasses import dataclass, field

from .dataio import Dataset, repartition
from .engine import PipeRunContext
from .kernel import IMPLEMENTATION, busy_wait_ms
from .lifecycle import LifecycleStore
from .metrics import MetricRegistry
from .pool import WorkerPool
from .stdpipes import standard_registry

BENCH_SCHEMA = (("doc_id", "string"), ("text", "string"))


def synthetic_records(count: int, seed: int = 0) -> Dataset:
    rng = random.Random(seed)
    alphabet = string.ascii_lowercase
    records = []
    for i in range(count):
        text = "".join(rng.choice(alphabet) for _ in range(32))
        records.append((f"rec{i:06d}", text))
    return Dataset.from_records(BENCH_SCHEMA, records)


@dataclass
class IntegrationResult:
    integration: str
    throughputs: list[float] = field(default_factory=list)

    @property
    def median_throughput(self) -> float:
        return statistics.median(self.throughputs)


@dataclass
class BenchReport:
    records: int
    workers: int
    network_delay_ms: int
    compute_delay_ms: int
    repeats: int
    kernel: str
    embedded: IntegrationResult
    remote: IntegrationResult
    elapsed_seconds: float

    @property
    def ratio(self) -> float:
        return self.embedded.median_throughput / self.remote.median_throughput

    def to_dict(self) -> dict:
        return {
            "records": self.records,
            "workers": self.workers,
            "networkDelayMillis": self.network_delay_ms,
            "computeDelayMillis": self.compute_delay_ms,
            "repeats": self.repeats,
            "kernel": self.kernel,
            "embedded": {
                "throughputs": self.embedded.throughputs,
                "medianRecordsPerSecond": self.embedded.median_throughput,
            },
            "remote": {
                "throughputs": self.remote.throughputs,
                "medianRecordsPerSecond": self.remote.median_throughput,
            },
            "throughputRatio": self.ratio,
            "elapsedSeconds": self.elapsed_seconds,
        }

    def summary_lines(self) -> list[str]:
        return [
            f"model integration benchmark: {self.records} records, {self.workers} workers, "
            f"compute {self.compute_delay_ms} ms, network {self.network_delay_ms} ms, "
            f"{self.repeats} repeats, kernel={self.kernel}",
            f"  embedded:   median {self.embedded.median_throughput:10.1f} records/s",
            f"  remote_sim: median {self.remote.median_throughput:10.1f} records/s",
            f"  embedded/remote throughput ratio: {self.ratio:.2f} "
            f"(closed form {(self.network_delay_ms + self.compute_delay_ms) / max(self.compute_delay_ms, 1e-9):.2f})",
        ]


def _measure_once(ds: Dataset, integration: str, network_delay_ms: int, compute_delay_ms: int, workers: int) -> float:
    registry = standard_registry()
    factory = registry.resolve("ModelPredictionTransformer")
    params = factory.contract.resolve_params(
        {
            "integration": integration,
            "networkDelayMillis": str(network_delay_ms),
            "computeDelayMillis": str(compute_delay_ms),
        }
    )
    with WorkerPool(workers) as pool:
        ctx = PipeRunContext(
            pipe_index=0,
            transformer_type="ModelPredictionTransformer",
            pool=pool,
            metrics=MetricRegistry(),
            lifecycle=LifecycleStore(),
        )
        instance = factory.build(params, ctx)
        pool.run_on_all_lanes(lambda: instance.warmup(ctx))
        started = time.perf_counter()
        out = instance.transform([ds], ctx)
        elapsed = time.perf_counter() - started
    assert out.record_count == ds.record_count
    return ds.record_count / elapsed


def run_benchmark(
    records: int,
    network_delay_ms: int,
    compute_delay_ms: int,
    workers: int,
    repeats: int = 3,
    seed: int = 0,
) -> BenchReport:
    """Measure both integrations ``repeats`` times on the same dataset."""
    if records < 1 or repeats < 1:
        raise ValueError("records and repeats must be >= 1")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if network_delay_ms < 0 or compute_delay_ms < 0:
        raise ValueError("delays must be >= 0")

    ds = repartition(synthetic_records(records, seed), max(workers * 2, 1))
    embedded = IntegrationResult("embedded")
    remote = IntegrationResult("remote_sim")
    started = time.perf_counter()
    for _ in range(repeats):
        embedded.throughputs.append(
            _measure_once(ds, "embedded", network_delay_ms, compute_delay_ms, workers)
        )
        remote.throughputs.append(
            _measure_once(ds, "remote_sim", network_delay_ms, compute_delay_ms, workers)
        )
    return BenchReport(
        records=records,
        workers=workers,
        network_delay_ms=network_delay_ms,
        compute_delay_ms=compute_delay_ms,
        repeats=repeats,
        kernel=IMPLEMENTATION,
        embedded=embedded,
        remote=remote,
        elapsed_seconds=time.perf_counter() - started,
    )


def spin_parallel_efficiency(workers: int, spin_ms: float = 2.0, spins: int = 60) -> float:
    """Measured speedup fraction of parallel busy-wait at ``workers`` lanes.

    1.0 means the lanes spin fully in parallel; well below 1.0 means core
    contention (or a GIL-bound pure kernel), in which case throughput-ratio
    benchmarks should drop to a single worker.
    """
    def spin_all(count: int) -> None:
        for _ in range(count):
            busy_wait_ms(spin_ms)

    serial_start = time.perf_counter()
    spin_all(spins)
    serial = time.perf_counter() - serial_start

    with WorkerPool(workers) as pool:
        parallel_start = time.perf_counter()
        pool.map_partitions(lambda i, part: spin_all(spins // workers), [()] * workers)
        parallel = time.perf_counter() - parallel_start
    if parallel <= 0:
        return 1.0
    return min(serial / (parallel * workers), 1.0)
