"""
Per-cluster bounded distance caches.
Each active cluster owns a table of at most ``s`` (neighbor id -> distance)
entries. Tables answer lookups in the NN phase, are refreshed after every
merge round with Lance-Williams combinations, and host the insert-once
reservations that keep concurrent searches from computing a pair twice.
"""
import threading
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Set, Tuple

from loguru import logger

from core.errors import InternalInvariantViolation, InvalidInputError
from core.linkage import LinkageKind, lance_williams
from core.parallel import ParallelExecutor

Pair = Tuple[int, int]


def _pair_key(i: int, j: int) -> Pair:
    return (i, j) if i < j else (j, i)


class CacheTable:
    """Bounded map from neighbor id to distance.

    Inserts are insert-if-absent; a full table rejects silently. All mutation
    happens under one lock, so the capacity is never overshot.
    """

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._entries: Dict[int, float] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: int) -> bool:
        return key in self._entries

    def get(self, key: int) -> Optional[float]:
        return self._entries.get(key)

    def insert(self, key: int, dist: float) -> bool:
        """Insert ``key`` unless present or full.

        Returns:
            True if the entry was stored
        """
        with self._lock:
            if key in self._entries or len(self._entries) >= self.capacity:
                return False
            self._entries[key] = dist
            return True

    def remove(self, key: int) -> None:
        with self._lock:
            self._entries.pop(key, None)

    def keys(self) -> List[int]:
        with self._lock:
            return list(self._entries)

    def items(self) -> List[Tuple[int, float]]:
        with self._lock:
            return list(self._entries.items())


@dataclass
class _Reservation:
    event: threading.Event = field(default_factory=threading.Event)
    value: Optional[float] = None


class CacheTables:
    """All cache tables of a run plus the reservation registry.

    Args:
        capacity: Per-table capacity ``s``; 0 disables caching entirely
    """

    def __init__(self, capacity: int):
        if capacity < 0:
            raise InvalidInputError(f"cache size must be >= 0, got {capacity}")
        self.capacity = int(capacity)
        self._tables: Dict[int, CacheTable] = {}
        # key -> owners whose table holds that key
        self._holders: Dict[int, Set[int]] = {}
        self._lock = threading.Lock()
        self._reservations: Dict[Pair, _Reservation] = {}
        self._reserve_lock = threading.Lock()

    @property
    def enabled(self) -> bool:
        return self.capacity > 0

    def table(self, owner: int) -> CacheTable:
        """Table of cluster ``owner``, created on first use."""
        table = self._tables.get(owner)
        if table is None:
            with self._lock:
                table = self._tables.setdefault(owner, CacheTable(self.capacity))
        return table

    def _insert(self, owner: int, key: int, dist: float) -> bool:
        if not self.table(owner).insert(key, dist):
            return False
        with self._lock:
            self._holders.setdefault(key, set()).add(owner)
        return True

    def get_cached_dist(self, i: int, j: int) -> Optional[float]:
        """Look up ``Δ(i, j)`` in ``H_i`` and ``H_j``.

        Returns:
            The stored distance, or None when neither table holds the pair.
            When both do, the value from the smaller id's table wins.

        Raises:
            InvalidInputError: If ``i == j``
        """
        if i == j:
            raise InvalidInputError(f"cache lookup of cluster {i} against itself")
        if not self.enabled:
            return None
        low, high = _pair_key(i, j)
        low_table = self._tables.get(low)
        if low_table is not None:
            value = low_table.get(high)
            if value is not None:
                return value
        high_table = self._tables.get(high)
        if high_table is not None:
            return high_table.get(low)
        return None

    def try_cache(self, i: int, j: int, dist: float) -> None:
        """Store ``dist`` in both tables; either may reject when full."""
        if not self.enabled or i == j:
            return
        self._insert(i, j, dist)
        self._insert(j, i, dist)

    # ---- reservations ---------------------------------------------------

    def reserve_pair(self, i: int, j: int) -> bool:
        """Claim the computation of ``Δ(i, j)`` for this episode.

        Returns:
            True for exactly one caller per unordered pair; everyone else gets
            False and should ``wait_for`` the published value
        """
        if i == j:
            raise InvalidInputError(f"cannot reserve cluster {i} against itself")
        key = _pair_key(i, j)
        with self._reserve_lock:
            if key in self._reservations:
                return False
            self._reservations[key] = _Reservation()
            return True

    def publish(self, i: int, j: int, dist: Optional[float]) -> None:
        """Release waiters on a reserved pair. ``None`` marks an abandoned computation."""
        reservation = self._reservations.get(_pair_key(i, j))
        if reservation is None:
            raise InternalInvariantViolation(f"publish on unreserved pair ({i}, {j})")
        reservation.value = dist
        reservation.event.set()

    def wait_for(self, i: int, j: int) -> float:
        """Block until the reserving caller publishes ``Δ(i, j)``."""
        reservation = self._reservations.get(_pair_key(i, j))
        if reservation is None:
            raise InternalInvariantViolation(f"wait on unreserved pair ({i}, {j})")
        reservation.event.wait()
        if reservation.value is None:
            raise InternalInvariantViolation(f"reserved computation of ({i}, {j}) was abandoned")
        return reservation.value

    def end_episode(self) -> None:
        """Commit the episode's published distances and forget all reservations.

        Called at every round boundary. Distances enter the tables in pair
        order, so which entries a full table keeps does not depend on thread
        timing.
        """
        with self._reserve_lock:
            published = sorted((key, r.value) for key, r in self._reservations.items() if r.value is not None)
            self._reservations.clear()
        for (i, j), dist in published:
            self.try_cache(i, j, dist)

    # ---- post-merge update ----------------------------------------------

    def _discard_table(self, owner: int) -> None:
        table = self._tables.pop(owner, None)
        if table is None:
            return
        for key in table.keys():
            holders = self._holders.get(key)
            if holders is not None:
                holders.discard(owner)

    def _purge_key(self, key: int) -> None:
        for owner in self._holders.pop(key, set()):
            table = self._tables.get(owner)
            if table is not None:
                table.remove(key)

    def update_cached_dists(self,
                            merges: Sequence[Tuple[int, int, float]],
                            kind: LinkageKind,
                            size_of: Callable[[int], int],
                            direct: Callable[[int, int], float],
                            executor: Optional[ParallelExecutor] = None) -> int:
        """Refresh the tables after a merge round.

        Every entry ``Δ(i or j, l)`` held by a merging cluster yields the
        distance from the merged cluster to ``l`` (or to whatever ``l`` merged
        into this round) through Lance-Williams combinations. Components not
        found in the cache are computed with ``direct``.

        Args:
            merges: The round's pairs ``(i, j, Δ(i, j))`` with ``i < j``
            kind: Linkage criterion
            size_of: Size of a pre-merge cluster
            direct: Distance between two pre-merge clusters
            executor: Optional executor for the read pass

        Returns:
            Number of merged-cluster distances produced
        """
        if not self.enabled or not merges:
            return 0
        partner: Dict[int, Tuple[int, int, float]] = {}
        for i, j, d in merges:
            partner[i] = (i, j, d)
            partner[j] = (i, j, d)

        def component(a: int, b: int) -> float:
            value = self.get_cached_dist(a, b)
            return direct(a, b) if value is None else value

        def to_merged(i: int, j: int, d_ij: float, other: int) -> float:
            return lance_williams(kind, component(i, other), component(j, other), d_ij,
                                  (size_of(i), size_of(j), size_of(other)))

        # Pair (k, target) -> the merge record on each side; collected before any write.
        jobs: Dict[Pair, Tuple[Tuple[int, int, float], Optional[Tuple[int, int, float]], int]] = {}
        for i, j, d in merges:
            keys = set(self.table(i).keys()) | set(self.table(j).keys())
            keys.discard(i)
            keys.discard(j)
            for other in sorted(keys):
                if other in partner:
                    other_merge = partner[other]
                    target = other_merge[0]
                    jobs.setdefault(_pair_key(i, target), ((i, j, d), other_merge, target))
                else:
                    jobs.setdefault(_pair_key(i, other), ((i, j, d), None, other))

        def produce(pair: Pair) -> Tuple[int, int, float]:
            (i, j, d_ij), other_merge, target = jobs[pair]
            if other_merge is None:
                return i, target, to_merged(i, j, d_ij, target)
            l1, l2, d_l = other_merge
            d_k_l1 = to_merged(i, j, d_ij, l1)
            d_k_l2 = to_merged(i, j, d_ij, l2)
            value = lance_williams(kind, d_k_l1, d_k_l2, d_l,
                                   (size_of(l1), size_of(l2), size_of(i) + size_of(j)))
            return i, target, value

        ordered = sorted(jobs)
        if executor is not None:
            produced = executor.map_ordered(produce, ordered)
        else:
            produced = [produce(pair) for pair in ordered]

        for i, j, _ in merges:
            self._discard_table(i)
            self._discard_table(j)
            self._purge_key(i)
            self._purge_key(j)
        for k, target, value in produced:
            self._insert(k, target, value)
            self._insert(target, k, value)
        logger.debug(f"cache update: {len(merges)} merges, {len(produced)} entries produced")
        return len(produced)

    # ---- inspection -------------------------------------------------------

    def entries(self) -> Iterator[Tuple[int, int, float]]:
        """Yield ``(owner, key, distance)`` for every stored entry."""
        for owner in sorted(self._tables):
            for key, value in sorted(self._tables[owner].items()):
                yield owner, key, value

    def max_table_size(self) -> int:
        return max((len(table) for table in self._tables.values()), default=0)

    def __len__(self) -> int:
        return sum(len(table) for table in self._tables.values())
