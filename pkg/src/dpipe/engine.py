"""Execution engine: runs a plan over an anchor store with explicit state
management, lifecycle scopes, per-pipe metrics, and a structured event log.

Two modes:

* ``SEQUENTIAL`` (default) -- pipes run one at a time in execution-index
  order; deterministic logs and metrics timing.
* ``DEPENDENCY_PARALLEL`` -- a pipe starts as soon as every producer of its
  inputs has completed; independent pipes overlap.

Either way, partition-level parallelism inside a pipe comes from a single
fixed pool of ``worker_count`` lanes shared by the whole run. Memory anchors
are reference-counted: once the last consumer finishes, a non-persisted
memory anchor is released and its dataset dropped.
"""

from __future__ import annotations

import enum
import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping

from . import dataio
from .dataio import Dataset, KeyProvider, repartition
from .errors import DpipeError
from .lifecycle import LifecycleScope, LifecycleStore
from .metrics import MetricRegistry, MetricSnapshot, pipe_metric
from .planner import ExecutionPlan
from .pool import WorkerPool
from .registry import Pipe, PipeRegistry
from .spec_model import PipelineSpec

log = logging.getLogger(__name__)


class ExecutionMode(enum.Enum):
    SEQUENTIAL = "sequential"
    DEPENDENCY_PARALLEL = "parallel"


class PipeStatus(enum.Enum):
    NOT_STARTED = "NotStarted"
    RUNNING = "Running"
    COMPLETED = "Completed"
    FAILED = "Failed"


class AnchorState(enum.Enum):
    EMPTY = "Empty"
    MATERIALIZED = "Materialized"
    RELEASED = "Released"


class EngineError(DpipeError):
    pass


class DoubleRelease(EngineError):
    pass


class TransformFailed(EngineError):
    pass


class PipeFailed(EngineError):
    def __init__(self, index: int, cause: str):
        super().__init__(f"pipe {index} failed: {cause}")
        self.index = index
        self.cause = cause


class SetupError(EngineError):
    """Configuration problems detected before any pipe runs."""


# ---------------------------------------------------------------------------
# Event log
# ---------------------------------------------------------------------------


class EventLog:
    """Append-only NDJSON event stream: pipe and anchor state transitions."""

    def __init__(self, path: str | None = None):
        self._lock = threading.Lock()
        self._events: list[dict] = []
        self._fh = open(path, "a", encoding="utf-8") if path else None

    def emit(self, **fields) -> None:
        event = {"ts": int(time.time() * 1000), **fields}
        with self._lock:
            self._events.append(event)
            if self._fh:
                self._fh.write(json.dumps(event, separators=(",", ":")) + "\n")
                self._fh.flush()

    def events(self) -> list[dict]:
        with self._lock:
            return list(self._events)

    def close(self) -> None:
        with self._lock:
            if self._fh:
                self._fh.close()
                self._fh = None


# ---------------------------------------------------------------------------
# Anchor store
# ---------------------------------------------------------------------------


@dataclass
class _AnchorEntry:
    state: AnchorState = AnchorState.EMPTY
    dataset: Dataset | None = None
    remaining_consumers: int = 0
    persisted: bool = False
    kind: str = "memory"
    released_by: set[int] = field(default_factory=set)


class AnchorStore:
    """Runtime state of every anchor plus logical memory accounting.

    ``high_water_bytes`` tracks the peak of summed approx_bytes over all
    materialized anchors; releasing drops the references so the memory is
    reclaimable.
    """

    def __init__(self, spec: PipelineSpec, consumer_counts: Mapping[str, int], event_log: EventLog | None = None):
        self._lock = threading.Lock()
        self._event_log = event_log
        self._entries: dict[str, _AnchorEntry] = {}
        for decl in spec.data:
            self._entries[decl.id] = _AnchorEntry(
                remaining_consumers=consumer_counts.get(decl.id, 0),
                persisted=decl.persist,
                kind=decl.location.kind,
            )
        self._resident_bytes = 0
        self.high_water_bytes = 0

    def state(self, anchor_id: str) -> AnchorState:
        with self._lock:
            return self._entries[anchor_id].state

    def states(self) -> dict[str, AnchorState]:
        with self._lock:
            return {anchor_id: entry.state for anchor_id, entry in self._entries.items()}

    def is_materialized(self, anchor_id: str) -> bool:
        return self.state(anchor_id) is AnchorState.MATERIALIZED

    def materialize(self, anchor_id: str, ds: Dataset) -> None:
        with self._lock:
            entry = self._entries[anchor_id]
            if entry.state is AnchorState.RELEASED:
                raise EngineError(f"anchor '{anchor_id}' was already released")
            entry.dataset = ds
            entry.state = AnchorState.MATERIALIZED
            self._resident_bytes += ds.approx_bytes()
            self.high_water_bytes = max(self.high_water_bytes, self._resident_bytes)
        if self._event_log:
            self._event_log.emit(kind="anchor", id=anchor_id, state="Materialized")

    def get(self, anchor_id: str) -> Dataset:
        with self._lock:
            entry = self._entries[anchor_id]
            if entry.state is AnchorState.RELEASED:
                raise EngineError(f"anchor '{anchor_id}' read after release")
            if entry.state is not AnchorState.MATERIALIZED:
                raise EngineError(f"anchor '{anchor_id}' read before materialization")
            return entry.dataset

    def release_after_last_consumer(self, anchor_id: str, just_completed_pipe: int) -> None:
        """Decrement the consumer refcount; free eligible anchors at zero.

        Non-persisted memory anchors transition to Released and drop their
        data. File/table anchors stay Materialized (the bytes live on disk),
        but their in-memory copy is evicted once nothing will read it again.
        Persisted anchors keep everything for the whole run.
        """
        released = False
        with self._lock:
            entry = self._entries[anchor_id]
            if just_completed_pipe in entry.released_by:
                raise DoubleRelease(
                    f"pipe {just_completed_pipe} already released anchor '{anchor_id}'"
                )
            entry.released_by.add(just_completed_pipe)
            entry.remaining_consumers -= 1
            if (
                entry.remaining_consumers <= 0
                and not entry.persisted
                and entry.state is AnchorState.MATERIALIZED
                and entry.dataset is not None
            ):
                self._resident_bytes -= entry.dataset.approx_bytes()
                entry.dataset = None
                if entry.kind == "memory":
                    entry.state = AnchorState.RELEASED
                    released = True
        if released and self._event_log:
            self._event_log.emit(kind="anchor", id=anchor_id, state="Released")


# ---------------------------------------------------------------------------
# Contexts
# ---------------------------------------------------------------------------


@dataclass
class ExecutionContext:
    """Run-wide knobs and services handed to the engine and to pipes."""

    worker_count: int = 1
    partition_count_default: int | None = None
    metrics: MetricRegistry = field(default_factory=MetricRegistry)
    lifecycle: LifecycleStore = field(default_factory=LifecycleStore)
    key_provider: KeyProvider | None = None

    def __post_init__(self) -> None:
        if self.worker_count < 1:
            raise SetupError(f"worker count must be >= 1, got {self.worker_count}")
        if self.partition_count_default is None:
            self.partition_count_default = self.worker_count
        if self.partition_count_default < 1:
            raise SetupError(
                f"default partition count must be >= 1, got {self.partition_count_default}"
            )


class PipeRunContext:
    """Per-pipe facade over the pool, metrics, and lifecycle store.

    Transforms call :meth:`map_partitions` for partition-parallel work and
    the counter/gauge helpers for metrics, which land under the pipe's
    ``pipe.<transformerType>.`` namespace.
    """

    def __init__(
        self,
        pipe_index: int,
        transformer_type: str,
        pool: WorkerPool,
        metrics: MetricRegistry,
        lifecycle: LifecycleStore,
    ):
        self.pipe_index = pipe_index
        self.transformer_type = transformer_type
        self._pool = pool
        self.metrics = metrics
        self.lifecycle = lifecycle

    @property
    def worker_count(self) -> int:
        return self._pool.worker_count

    def counter(self, name: str, delta: int = 1) -> None:
        self.metrics.counter_add(pipe_metric(self.transformer_type, name), delta)

    def gauge(self, name: str, value: float) -> None:
        self.metrics.gauge_set(pipe_metric(self.transformer_type, name), value)

    def map_partitions(self, fn: Callable[[int, tuple], object], ds: Dataset) -> list:
        """Run ``fn(partition_index, records)`` over every partition of ``ds``."""
        return self._pool.map_partitions(fn, ds.partitions, pipe_token=self.pipe_index)

    def run_on_all_lanes(self, fn: Callable[[], None]) -> None:
        self._pool.run_on_all_lanes(fn)

    def get_or_init(self, scope: LifecycleScope, key: str, initializer: Callable[[], object]) -> object:
        return self.lifecycle.get_or_init(scope, key, initializer)


def lifecycle_get_or_init(
    ctx: PipeRunContext, scope: LifecycleScope, key: str, initializer: Callable[[], object]
) -> object:
    return ctx.get_or_init(scope, key, initializer)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class PipeRunState:
    index: int
    transformer_type: str
    status: PipeStatus = PipeStatus.NOT_STARTED
    error: str | None = None
    start_ts: int | None = None
    end_ts: int | None = None
    metric_snapshot: dict[str, float] = field(default_factory=dict)


@dataclass
class RunReport:
    pipes: list[PipeRunState]
    overall: PipeStatus
    duration_millis: int
    final_metrics: MetricSnapshot
    anchor_states: dict[str, str]
    store_high_water_bytes: int

    @property
    def completed(self) -> bool:
        return self.overall is PipeStatus.COMPLETED

    def failed_pipe_indices(self) -> set[int]:
        return {p.index for p in self.pipes if p.status is PipeStatus.FAILED}

    def to_dict(self) -> dict:
        return {
            "status": self.overall.value,
            "durationMillis": self.duration_millis,
            "pipes": [
                {
                    "index": p.index,
                    "transformerType": p.transformer_type,
                    "state": p.status.value,
                    "error": p.error,
                    "startTs": p.start_ts,
                    "endTs": p.end_ts,
                    "metrics": p.metric_snapshot,
                }
                for p in self.pipes
            ],
            "anchors": dict(self.anchor_states),
            "metrics": self.final_metrics.as_dict(),
            "storeHighWaterBytes": self.store_high_water_bytes,
        }


# ---------------------------------------------------------------------------
# Pipe execution
# ---------------------------------------------------------------------------


def run_pipe(instance: Pipe, inputs: list[Dataset], ctx: PipeRunContext, declared_schema=None) -> Dataset:
    """Run one pipe instance: per-lane warmup, transform, output verification.

    The output is reordered to ``declared_schema`` column order when given;
    a schema set mismatch raises TransformFailed.
    """
    ctx.run_on_all_lanes(lambda: instance.warmup(ctx))
    try:
        out = instance.transform(inputs, ctx)
    except DpipeError:
        raise
    except Exception as exc:  # noqa: BLE001
        raise TransformFailed(f"{type(exc).__name__}: {exc}") from exc
    if not isinstance(out, Dataset):
        raise TransformFailed(f"transform returned {type(out).__name__}, expected Dataset")
    if declared_schema is not None:
        try:
            out = out.reorder_columns(tuple(declared_schema))
        except dataio.SchemaMismatch as exc:
            raise TransformFailed(str(exc)) from exc
    return out


class _RunState:
    """Mutable bookkeeping shared by the scheduler and the watcher."""

    def __init__(self, plan: ExecutionPlan):
        self.lock = threading.Lock()
        self.pipe_states = {
            decl_index: PipeRunState(index=decl_index, transformer_type=pipe.transformer_type)
            for decl_index, (_, pipe) in zip(plan.decl_order, plan.order)
        }

    def snapshot(self) -> dict[int, PipeRunState]:
        with self.lock:
            return {
                i: PipeRunState(
                    index=s.index,
                    transformer_type=s.transformer_type,
                    status=s.status,
                    error=s.error,
                    start_ts=s.start_ts,
                    end_ts=s.end_ts,
                    metric_snapshot=dict(s.metric_snapshot),
                )
                for i, s in self.pipe_states.items()
            }


class RunHandle:
    """Live view of an in-flight run: poll snapshots, then collect the report."""

    def __init__(self, spec: PipelineSpec, plan: ExecutionPlan):
        self.spec = spec
        self.plan = plan
        self._state = _RunState(plan)
        self._store: AnchorStore | None = None
        self._metrics: MetricRegistry | None = None
        self._done = threading.Event()
        self._report: RunReport | None = None
        self._error: BaseException | None = None

    def done(self) -> bool:
        return self._done.is_set()

    def pipe_states(self) -> dict[int, PipeRunState]:
        return self._state.snapshot()

    def anchor_states(self) -> dict[str, AnchorState]:
        return self._store.states() if self._store is not None else {}

    def metric_snapshot(self) -> MetricSnapshot:
        if self._metrics is None:
            return MetricSnapshot(ts_millis=0, entries=())
        return self._metrics.snapshot()

    def report(self, timeout: float | None = None) -> RunReport:
        if not self._done.wait(timeout):
            raise EngineError("run did not finish within the timeout")
        if self._error is not None:
            raise self._error
        return self._report


class Engine:
    """Binds a validated spec, its plan, and a registry into runnable form."""

    def __init__(
        self,
        plan: ExecutionPlan,
        registry: PipeRegistry,
        spec: PipelineSpec,
        ctx: ExecutionContext,
        event_log: EventLog | None = None,
    ):
        self.plan = plan
        self.registry = registry
        self.spec = spec
        self.ctx = ctx
        self.event_log = event_log
        self.declared = {decl.id: decl for decl in spec.data}
        # Resolve every factory up front: an unknown type is a setup failure,
        # not a mid-run pipe failure.
        self.factories = {
            decl_index: registry.resolve(pipe.transformer_type)
            for decl_index, (_, pipe) in zip(plan.decl_order, plan.order)
        }

    # -- single pipe ---------------------------------------------------------

    def _load_inputs(self, decl_index: int, store: AnchorStore) -> list[Dataset]:
        pipe = self.spec.pipes[decl_index]
        datasets = []
        target = max(pipe.parallelism or 0, self.ctx.partition_count_default)
        for anchor_id in pipe.input_data_ids:
            decl = self.declared[anchor_id]
            if not store.is_materialized(anchor_id):
                # External source: file/table anchors with no producer are
                # read on first use. Validation guarantees memory anchors
                # always have a producer.
                ds = dataio.read_dataset(decl, self.ctx.key_provider)
                dataio.validate_dataset(ds)
                store.materialize(anchor_id, ds)
            ds = store.get(anchor_id)
            if ds.partition_count != target:
                ds = repartition(ds, target)
            datasets.append(ds)
        return datasets

    def _run_one(self, decl_index: int, store: AnchorStore, pool: WorkerPool, state: _RunState) -> None:
        pipe = self.spec.pipes[decl_index]
        factory = self.factories[decl_index]
        run_state = state.pipe_states[decl_index]

        with state.lock:
            run_state.status = PipeStatus.RUNNING
            run_state.start_ts = int(time.time() * 1000)
        if self.event_log:
            self.event_log.emit(
                kind="pipe", index=decl_index, type=pipe.transformer_type, state="Running"
            )

        run_ctx = PipeRunContext(
            pipe_index=decl_index,
            transformer_type=pipe.transformer_type,
            pool=pool,
            metrics=self.ctx.metrics,
            lifecycle=self.ctx.lifecycle,
        )
        try:
            inputs = self._load_inputs(decl_index, store)
            params = factory.contract.resolve_params(pipe.params_dict())
            instance = factory.build(params, run_ctx)
            declared_schema = self.declared[pipe.output_data_id].schema
            out = run_pipe(instance, inputs, run_ctx, declared_schema)
            dataio.validate_dataset(out)
            out_decl = self.declared[pipe.output_data_id]
            if out_decl.location.kind != "memory":
                dataio.write_dataset(out, out_decl, self.ctx.key_provider)
            store.materialize(pipe.output_data_id, out)
        except Exception as exc:  # noqa: BLE001
            with state.lock:
                run_state.status = PipeStatus.FAILED
                run_state.error = f"{type(exc).__name__}: {exc}"
                run_state.end_ts = int(time.time() * 1000)
            if self.event_log:
                self.event_log.emit(
                    kind="pipe",
                    index=decl_index,
                    type=pipe.transformer_type,
                    state="Failed",
                    error=run_state.error,
                )
            raise PipeFailed(decl_index, run_state.error) from exc

        prefix = pipe_metric(pipe.transformer_type, "")
        snapshot = {
            name: value
            for name, value in self.ctx.metrics.snapshot().entries
            if name.startswith(prefix)
        }
        with state.lock:
            run_state.status = PipeStatus.COMPLETED
            run_state.end_ts = int(time.time() * 1000)
            run_state.metric_snapshot = snapshot
        if self.event_log:
            self.event_log.emit(
                kind="pipe", index=decl_index, type=pipe.transformer_type, state="Completed"
            )
        # Post-completion actions: input refcounts drop (freeing anchors whose
        # last consumer this was), then the pipe's own cleanup hooks run.
        for anchor_id in dict.fromkeys(pipe.input_data_ids):
            store.release_after_last_consumer(anchor_id, decl_index)
        for hook in instance.cleanup_hooks:
            try:
                hook()
            except Exception as exc:  # noqa: BLE001
                log.warning("cleanup hook of pipe %d failed: %s", decl_index, exc)
        self.ctx.lifecycle.clear_partition_entries()

    # -- schedulers -----------------------------------------------------------

    def _mark_dependency_failed(self, decl_index: int, failed_ancestor: int, state: _RunState) -> None:
        pipe = self.spec.pipes[decl_index]
        with state.lock:
            run_state = state.pipe_states[decl_index]
            run_state.status = PipeStatus.FAILED
            run_state.error = f"DependencyFailed: upstream pipe {failed_ancestor} failed"
        if self.event_log:
            self.event_log.emit(
                kind="pipe",
                index=decl_index,
                type=pipe.transformer_type,
                state="Failed",
                error=run_state.error,
            )

    def _run_sequential(self, store: AnchorStore, pool: WorkerPool, state: _RunState) -> None:
        failed: dict[int, int] = {}  # decl index -> failed ancestor
        for decl_index in self.plan.decl_order:
            blocking = [
                dep for dep in self.plan.dag.pipe_dependencies(decl_index) if dep in failed
            ]
            if blocking:
                ancestor = failed[min(blocking)]
                failed[decl_index] = ancestor
                self._mark_dependency_failed(decl_index, ancestor, state)
                continue
            try:
                self._run_one(decl_index, store, pool, state)
            except PipeFailed:
                failed[decl_index] = decl_index

    def _run_dependency_parallel(self, store: AnchorStore, pool: WorkerPool, state: _RunState) -> None:
        dag = self.plan.dag
        n = len(self.spec.pipes)
        deps = {i: dag.pipe_dependencies(i) for i in range(n)}
        dependents = {i: dag.pipe_dependents(i) for i in range(n)}
        lock = threading.Lock()
        pending = {i: len(deps[i]) for i in range(n)}
        failed: dict[int, int] = {}
        remaining = n
        all_done = threading.Event()
        if remaining == 0:
            return

        coordinator = ThreadPoolExecutor(max_workers=max(1, n), thread_name_prefix="dpipe-pipe")

        def finish(decl_index: int, failed_as: int | None) -> None:
            nonlocal remaining
            to_fail: list[tuple[int, int]] = []
            to_start: list[int] = []
            with lock:
                remaining -= 1
                if failed_as is not None:
                    failed[decl_index] = failed_as
                for dependent in sorted(dependents[decl_index]):
                    pending[dependent] -= 1
                    if pending[dependent] == 0:
                        ancestors = [d for d in deps[dependent] if d in failed]
                        if failed_as is not None or ancestors:
                            ancestor = failed[min(ancestors)] if ancestors else failed_as
                            to_fail.append((dependent, ancestor))
                        else:
                            to_start.append(dependent)
                if remaining == 0:
                    all_done.set()
            for dependent, ancestor in to_fail:
                self._mark_dependency_failed(dependent, ancestor, state)
                finish(dependent, ancestor)
            for dependent in to_start:
                coordinator.submit(run_task, dependent)

        def run_task(decl_index: int) -> None:
            try:
                self._run_one(decl_index, store, pool, state)
            except PipeFailed:
                finish(decl_index, decl_index)
            except Exception:  # noqa: BLE001  pragma: no cover - defensive
                log.exception("unexpected scheduler error in pipe %d", decl_index)
                finish(decl_index, decl_index)
            else:
                finish(decl_index, None)

        try:
            initial = sorted(i for i in range(n) if pending[i] == 0)
            for decl_index in initial:
                coordinator.submit(run_task, decl_index)
            all_done.wait()
        finally:
            coordinator.shutdown(wait=True)

    # -- entry points ----------------------------------------------------------

    def start(self, mode: ExecutionMode = ExecutionMode.SEQUENTIAL) -> RunHandle:
        handle = RunHandle(self.spec, self.plan)
        consumer_counts = {
            anchor_id: self.plan.dag.consumer_count(anchor_id) for anchor_id in self.plan.dag.anchors
        }
        store = AnchorStore(self.spec, consumer_counts, self.event_log)
        handle._store = store
        handle._metrics = self.ctx.metrics

        def drive() -> None:
            started = time.perf_counter()
            pool = WorkerPool(self.ctx.worker_count)
            try:
                if mode is ExecutionMode.SEQUENTIAL:
                    self._run_sequential(store, pool, handle._state)
                else:
                    self._run_dependency_parallel(store, pool, handle._state)
                snapshot = handle._state.snapshot()
                states = [snapshot[i] for i in sorted(snapshot)]
                overall = (
                    PipeStatus.COMPLETED
                    if all(s.status is PipeStatus.COMPLETED for s in states)
                    else PipeStatus.FAILED
                )
                handle._report = RunReport(
                    pipes=states,
                    overall=overall,
                    duration_millis=int((time.perf_counter() - started) * 1000),
                    final_metrics=self.ctx.metrics.snapshot(),
                    anchor_states={aid: st.value for aid, st in store.states().items()},
                    store_high_water_bytes=store.high_water_bytes,
                )
            except BaseException as exc:  # noqa: BLE001
                handle._error = exc
            finally:
                pool.shutdown()
                handle._done.set()

        thread = threading.Thread(target=drive, name="dpipe-run", daemon=True)
        thread.start()
        return handle


def execute(
    plan: ExecutionPlan,
    registry: PipeRegistry,
    spec: PipelineSpec,
    ctx: ExecutionContext,
    mode: ExecutionMode = ExecutionMode.SEQUENTIAL,
    event_log: EventLog | None = None,
) -> RunReport:
    """Run the whole plan to completion and return the report.

    Every pipe runs exactly once; pipes downstream of a failure are marked
    Failed with a DependencyFailed cause while independent pipes still
    complete. Outputs are written per their declarations (file/table flushed
    to disk, memory held in the store).
    """
    engine = Engine(plan, registry, spec, ctx, event_log)
    return engine.start(mode).report()


def release_after_last_consumer(store: AnchorStore, anchor_id: str, just_completed_pipe: int) -> None:
    store.release_after_last_consumer(anchor_id, just_completed_pipe)
