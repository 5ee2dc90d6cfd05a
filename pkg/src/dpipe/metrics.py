"""Thread-safe metric registry with asynchronous periodic publishing.

Counters are monotone integers, gauges are last-write-wins floats. A
publisher thread snapshots the registry every cadence interval and emits one
NDJSON line per snapshot; ``stop()`` always emits a final flush so totals are
never lost, whatever the cadence.

Snapshot line format: ``{"ts":<epoch_millis>,"metrics":{"<name>":<number>,...}}``
"""

from __future__ import annotations

import json
import logging
import math
import sys
import threading
import time
from dataclasses import dataclass

from .errors import DpipeError
from .spec_model import MetricsConfig

log = logging.getLogger(__name__)


class MetricsError(DpipeError):
    pass


class NegativeDelta(MetricsError):
    pass


class NonFiniteValue(MetricsError):
    pass


def pipe_metric(transformer_type: str, name: str) -> str:
    """Namespace a metric under its pipe type: ``pipe.<type>.<name>``."""
    return f"pipe.{transformer_type}.{name}"


@dataclass(frozen=True)
class MetricSnapshot:
    """A consistent point-in-time copy: sorted, unique names."""

    ts_millis: int
    entries: tuple[tuple[str, float], ...]

    def as_dict(self) -> dict[str, float]:
        return dict(self.entries)

    def value(self, name: str, default=None):
        for key, value in self.entries:
            if key == name:
                return value
        return default

    def to_line(self) -> str:
        return json.dumps(
            {"ts": self.ts_millis, "metrics": self.as_dict()}, separators=(",", ":")
        )


class MetricRegistry:
    """Named counters and gauges, safe for unbounded concurrent writers."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._counters: dict[str, int] = {}
        self._gauges: dict[str, float] = {}

    def counter_add(self, name: str, delta: int) -> None:
        if delta < 0:
            raise NegativeDelta(f"counter '{name}' delta must be >= 0, got {delta}")
        with self._lock:
            self._counters[name] = self._counters.get(name, 0) + int(delta)

    def gauge_set(self, name: str, value: float) -> None:
        if not math.isfinite(value):
            raise NonFiniteValue(f"gauge '{name}' value must be finite, got {value!r}")
        with self._lock:
            self._gauges[name] = float(value)

    def counter_value(self, name: str) -> int:
        with self._lock:
            return self._counters.get(name, 0)

    def snapshot(self) -> MetricSnapshot:
        with self._lock:
            merged: dict[str, float] = dict(self._counters)
            merged.update(self._gauges)
        return MetricSnapshot(
            ts_millis=int(time.time() * 1000),
            entries=tuple(sorted(merged.items())),
        )


# ---------------------------------------------------------------------------
# Sinks and publisher
# ---------------------------------------------------------------------------


class SnapshotSink:
    def emit(self, line: str) -> None:
        raise NotImplementedError

    def close(self) -> None:
        pass


class NullSink(SnapshotSink):
    def emit(self, line: str) -> None:
        pass


class StdoutSink(SnapshotSink):
    def emit(self, line: str) -> None:
        print(line, file=sys.stdout, flush=True)


class FileSink(SnapshotSink):
    def __init__(self, path: str):
        self._fh = open(path, "a", encoding="utf-8")
        self._lock = threading.Lock()

    def emit(self, line: str) -> None:
        with self._lock:
            self._fh.write(line + "\n")
            self._fh.flush()

    def close(self) -> None:
        with self._lock:
            self._fh.close()


def sink_for(kind: str, path: str | None = None) -> SnapshotSink:
    if kind == "stdout":
        return StdoutSink()
    if kind == "null":
        return NullSink()
    if kind == "file":
        return FileSink(path)
    raise MetricsError(f"unknown sink kind '{kind}'")


class MetricsPublisher:
    """Periodic snapshot emitter owned by an engine run.

    Emission happens on a dedicated thread; sink failures are logged and do
    not interrupt the run. ``stop()`` flushes one final snapshot.
    """

    def __init__(self, registry: MetricRegistry, cadence_millis: int, sink: SnapshotSink):
        if cadence_millis < 1:
            raise MetricsError(f"cadence must be >= 1 ms, got {cadence_millis}")
        self._registry = registry
        self._cadence_s = cadence_millis / 1000.0
        self._sink = sink
        self._stop = threading.Event()
        self._done = False
        self._lock = threading.Lock()
        self._thread = threading.Thread(target=self._run, name="dpipe-metrics", daemon=True)

    def start(self) -> "MetricsPublisher":
        self._thread.start()
        return self

    def _emit(self) -> None:
        line = self._registry.snapshot().to_line()
        try:
            self._sink.emit(line)
        except Exception as exc:  # noqa: BLE001
            log.warning("metrics sink write failed: %s", exc)

    def _run(self) -> None:
        while not self._stop.wait(self._cadence_s):
            with self._lock:
                if self._done:
                    return
                self._emit()

    def stop(self) -> None:
        """Stop periodic publishing and emit exactly one final snapshot."""
        with self._lock:
            if self._done:
                return
            self._done = True
        self._stop.set()
        self._thread.join()
        self._emit()


def run_publisher(registry: MetricRegistry, config: MetricsConfig, sink: SnapshotSink | None = None) -> MetricsPublisher:
    """Start a publisher per the spec's metrics config; caller must stop() it."""
    if sink is None:
        sink = sink_for(config.sink_kind, config.sink_path)
    return MetricsPublisher(registry, config.cadence_millis, sink).start()
