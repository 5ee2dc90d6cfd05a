"""Fixed pool of worker lanes pulling partition tasks from a shared queue.

Lanes are threads; CPU-bound per-record work scales across them only when it
releases the GIL (see :mod:`dpipe.kernel`). Each lane carries a stable lane
index, and partition tasks expose the partition token being processed -- the
lifecycle store keys its instance- and partition-scoped caches on these.
"""

from __future__ import annotations

import itertools
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

from .errors import DpipeError

_tls = threading.local()


def current_lane() -> int | None:
    """Lane index of the calling thread, or None outside the pool."""
    return getattr(_tls, "lane_index", None)


def current_partition() -> object | None:
    """Token of the partition being processed, or None outside a partition task."""
    return getattr(_tls, "partition_token", None)


class PoolError(DpipeError):
    pass


class WorkerPool:
    """``worker_count`` lanes executing partition tasks from a shared queue."""

    def __init__(self, worker_count: int):
        if worker_count < 1:
            raise PoolError(f"worker count must be >= 1, got {worker_count}")
        self._worker_count = worker_count
        self._lane_counter = itertools.count()
        self._executor = ThreadPoolExecutor(
            max_workers=worker_count,
            thread_name_prefix="dpipe-lane",
            initializer=self._init_lane,
        )
        # Only one all-lanes barrier may be in flight at a time, otherwise two
        # interleaved barrier sets could each starve the other of lanes.
        self._all_lanes_mutex = threading.Lock()

    def _init_lane(self) -> None:
        _tls.lane_index = next(self._lane_counter)

    @property
    def worker_count(self) -> int:
        return self._worker_count

    def map_partitions(
        self,
        fn: Callable[[int, object], object],
        partitions: Sequence,
        pipe_token: object = None,
    ) -> list:
        """Run ``fn(partition_index, partition)`` for every partition.

        Results come back in partition order regardless of completion order.
        The first failing partition (by index) raises after all tasks settle.
        """

        def task(index: int, partition):
            _tls.partition_token = (pipe_token, index)
            try:
                return fn(index, partition)
            finally:
                _tls.partition_token = None

        futures = [
            self._executor.submit(task, i, part) for i, part in enumerate(partitions)
        ]
        results = []
        first_error: BaseException | None = None
        for future in futures:
            try:
                results.append(future.result())
            except BaseException as exc:  # noqa: BLE001
                if first_error is None:
                    first_error = exc
                results.append(None)
        if first_error is not None:
            raise first_error
        return results

    def run_on_all_lanes(self, fn: Callable[[], None]) -> None:
        """Execute ``fn`` exactly once on every lane.

        A barrier holds each claiming lane until all ``worker_count`` tasks
        have been claimed, so no lane can take two and none can take zero.
        """
        with self._all_lanes_mutex:
            barrier = threading.Barrier(self._worker_count)

            def task():
                barrier.wait()
                fn()

            futures = [self._executor.submit(task) for _ in range(self._worker_count)]
            first_error: BaseException | None = None
            for future in futures:
                try:
                    future.result()
                except BaseException as exc:  # noqa: BLE001
                    if first_error is None:
                        first_error = exc
            if first_error is not None:
                raise first_error

    def shutdown(self) -> None:
        self._executor.shutdown(wait=True)

    def __enter__(self) -> "WorkerPool":
        return self

    def __exit__(self, *exc) -> None:
        self.shutdown()
