# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled hot kernels: wall-deadline busy spin and FNV-1a record hashing.

The spin releases the GIL, so worker lanes saturate real cores while
simulating fixed per-record compute. Results are bit-identical to the
pure-Python kernel in dpipe._kernel_py.
"""

cdef extern from "time.h" nogil:
    ctypedef long time_t
    cdef struct timespec:
        time_t tv_sec
        long tv_nsec
    int clock_gettime(int clk_id, timespec *tp)

DEF CLOCK_MONOTONIC_ID = 1

IMPLEMENTATION = "compiled"

cdef inline double _now_ms() noexcept nogil:
    cdef timespec ts
    clock_gettime(CLOCK_MONOTONIC_ID, &ts)
    return ts.tv_sec * 1000.0 + ts.tv_nsec / 1e6


def busy_wait_ms(double duration_ms):
    """Burn CPU until ``duration_ms`` of wall time has elapsed (GIL released)."""
    cdef double deadline
    cdef unsigned long long sink = 0xcbf29ce484222325ULL
    cdef int i
    if duration_ms <= 0:
        return
    with nogil:
        deadline = _now_ms() + duration_ms
        while _now_ms() < deadline:
            for i in range(128):
                sink = (sink ^ <unsigned long long>i) * 0x100000001b3ULL


def fnv1a64(data):
    """64-bit FNV-1a hash of a bytes-like value."""
    cdef const unsigned char[::1] view = data
    cdef unsigned long long h = 0xcbf29ce484222325ULL
    cdef Py_ssize_t i, n = view.shape[0]
    with nogil:
        for i in range(n):
            h = (h ^ view[i]) * 0x100000001b3ULL
    return h


def score01(data):
    """Deterministic score in [0, 1) derived from the FNV-1a hash."""
    return fnv1a64(data) / 18446744073709551616.0
