"""
Parallel primitives for the round-based engine.
Provides a thread-pool executor with ordered results and the commutative
shared-write primitives (priority writes, atomic counters) the engine relies on.
The pool threads call compiled kernels that release the GIL.
"""
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, Tuple, TypeVar

import numba
import numpy as np

T = TypeVar("T")
R = TypeVar("R")

# Lock striping width for per-slot critical sections
_STRIPES = 64


class ParallelExecutor:
    """Runs independent tasks of one round on a thread pool.

    With ``threads == 1`` everything runs inline in the caller, which keeps
    single-threaded runs free of pool overhead. Results are always returned in
    input order so callers never depend on completion order. The thread count
    also caps the compiled parallel loops started from the creating thread.
    """

    def __init__(self, threads: int = 1):
        """Initialize the executor.

        Args:
            threads: Number of worker threads (a scheduling hint, >= 1)
        """
        self.threads = max(1, int(threads))
        numba.set_num_threads(min(self.threads, numba.config.NUMBA_NUM_THREADS))
        self._pool: Optional[ThreadPoolExecutor] = None
        if self.threads > 1:
            self._pool = ThreadPoolExecutor(max_workers=self.threads, thread_name_prefix="minihac")

    def map_ordered(self, fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
        """Apply ``fn`` to every item, possibly concurrently.

        Args:
            fn: Task function; must be safe under concurrent invocation
            items: Task inputs

        Returns:
            Results in the same order as ``items``
        """
        items = list(items)
        if self._pool is None or len(items) < 2:
            return [fn(item) for item in items]
        return list(self._pool.map(fn, items))

    def for_each(self, fn: Callable[[T], None], items: Iterable[T]) -> None:
        """Run ``fn`` on every item for its side effects."""
        self.map_ordered(fn, items)

    def shutdown(self) -> None:
        """Release worker threads."""
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    def __enter__(self) -> "ParallelExecutor":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.shutdown()


class AtomicCounter:
    """Integer counter safe under concurrent increments."""

    def __init__(self, value: int = 0):
        self._value = int(value)
        self._lock = threading.Lock()

    def add(self, amount: int = 1) -> int:
        """Add ``amount`` and return the new value."""
        with self._lock:
            self._value += int(amount)
            return self._value

    @property
    def value(self) -> int:
        return self._value

    def reset(self) -> None:
        with self._lock:
            self._value = 0


class WriteMax:
    """Single cell keeping the largest value ever written."""

    def __init__(self, initial: float = -math.inf):
        self._value = initial
        self._lock = threading.Lock()

    def write(self, value: float) -> bool:
        """Store ``value`` if it beats the current one.

        Returns:
            True if the cell changed
        """
        if value <= self._value:
            return False
        with self._lock:
            if value > self._value:
                self._value = value
                return True
            return False

    @property
    def value(self) -> float:
        return self._value


class CandidateTable:
    """Per-slot best (neighbor id, distance) under priority-write semantics.

    The order is the total order on ``(distance, id)``: a write wins when its
    distance is smaller, or equal with a smaller id. Concurrent writes commute,
    so the final content does not depend on thread interleaving.
    """

    def __init__(self, capacity: int):
        """Initialize an empty table.

        Args:
            capacity: Number of slots (cluster ids are 0..capacity-1)
        """
        self.best_id = np.full(capacity, -1, dtype=np.int64)
        self.best_dist = np.full(capacity, np.inf, dtype=np.float64)
        self._locks = [threading.Lock() for _ in range(_STRIPES)]

    def reset(self, slots: Optional[Iterable[int]] = None) -> None:
        """Clear the given slots (all slots when None)."""
        if slots is None:
            self.best_id.fill(-1)
            self.best_dist.fill(np.inf)
            return
        idx = np.fromiter(slots, dtype=np.int64)
        self.best_id[idx] = -1
        self.best_dist[idx] = np.inf

    def load(self, best_id: np.ndarray, best_dist: np.ndarray) -> None:
        """Overwrite every slot at once (single writer, between rounds)."""
        self.best_id[:] = best_id
        self.best_dist[:] = best_dist

    def store(self, slots: np.ndarray, best_id: np.ndarray, best_dist: np.ndarray) -> None:
        """Overwrite the given slots (single writer per slot)."""
        self.best_id[slots] = best_id
        self.best_dist[slots] = best_dist

    @staticmethod
    def _beats(dist: float, cand: int, cur_dist: float, cur_id: int) -> bool:
        if cur_id < 0:
            return True
        return dist < cur_dist or (dist == cur_dist and cand < cur_id)

    def write_min(self, slot: int, cand: int, dist: float) -> bool:
        """Priority-write ``(cand, dist)`` into ``slot``.

        Returns:
            True if the slot changed
        """
        with self._locks[slot % _STRIPES]:
            if self._beats(dist, cand, self.best_dist[slot], self.best_id[slot]):
                self.best_id[slot] = cand
                self.best_dist[slot] = dist
                return True
            return False

    def get(self, slot: int) -> Optional[Tuple[int, float]]:
        """Return ``(neighbor id, distance)`` or None if nothing was written."""
        cand = int(self.best_id[slot])
        if cand < 0:
            return None
        return cand, float(self.best_dist[slot])
