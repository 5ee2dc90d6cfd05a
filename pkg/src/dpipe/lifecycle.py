"""Scope-keyed object cache: record, partition, and instance lifecycles.

Expensive objects (models, clients) declare how often they are initialized:

* ``RECORD``    -- once per record processed: the initializer runs on every call.
* ``PARTITION`` -- once per (partition, key): cached for the partition task.
* ``INSTANCE``  -- once per (worker lane, key): the singleton-per-worker case.

Initialization counts are observable per key so tests can pin the exact
formulas (instance count == workers, partition count == partitions, record
count == records).
"""

from __future__ import annotations

import enum
import threading
from typing import Callable

from .errors import DpipeError
from .pool import current_lane, current_partition


class LifecycleScope(enum.Enum):
    RECORD = "record"
    PARTITION = "partition"
    INSTANCE = "instance"


class InitializerFailed(DpipeError):
    def __init__(self, key: str, cause: BaseException):
        super().__init__(f"initializer for '{key}' failed: {cause}")
        self.key = key
        self.cause = cause


class LifecycleStore:
    """Thread-safe cache behind :func:`get_or_init`.

    Qualified keys embed the lane (INSTANCE) or partition token (PARTITION),
    so concurrent lanes never contend on the same slot and initializers can
    run outside the lock.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._objects: dict[tuple, object] = {}
        self._init_counts: dict[str, int] = {}

    def _qualified(self, scope: LifecycleScope, key: str) -> tuple:
        if scope is LifecycleScope.INSTANCE:
            return ("i", current_lane(), key)
        if scope is LifecycleScope.PARTITION:
            return ("p", current_partition(), key)
        raise ValueError(scope)

    def _initialize(self, key: str, initializer: Callable[[], object]) -> object:
        try:
            obj = initializer()
        except Exception as exc:  # noqa: BLE001
            raise InitializerFailed(key, exc) from exc
        with self._lock:
            self._init_counts[key] = self._init_counts.get(key, 0) + 1
        return obj

    def get_or_init(self, scope: LifecycleScope, key: str, initializer: Callable[[], object]) -> object:
        if scope is LifecycleScope.RECORD:
            return self._initialize(key, initializer)
        qualified = self._qualified(scope, key)
        with self._lock:
            if qualified in self._objects:
                return self._objects[qualified]
        obj = self._initialize(key, initializer)
        with self._lock:
            self._objects[qualified] = obj
        return obj

    def init_count(self, key: str) -> int:
        with self._lock:
            return self._init_counts.get(key, 0)

    def clear_partition_entries(self) -> None:
        """Drop partition-scoped objects (called between pipe runs)."""
        with self._lock:
            self._objects = {
                qualified: obj for qualified, obj in self._objects.items() if qualified[0] != "p"
            }
