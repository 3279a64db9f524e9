"""
Round-based nearest-neighbor-chain HAC engine.

Every round, the chain tails (terminal clusters) look up their nearest active
cluster in parallel, chains are extended, all reciprocal nearest-neighbor
pairs are found and merged at once, and the per-round structures (centroid
kd-tree, or cluster marks on the all-points kd-tree for complete linkage) are
refreshed. Reducibility of the supported linkages makes the simultaneous
merges produce the same dendrogram as the sequential algorithm.
"""
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
from loguru import logger

from core import kernels
from core.cache import CacheTables
from core.dendrogram import Dendrogram
from core.errors import InternalInvariantViolation, InvalidInputError
from core.linkage import Cluster, LinkageKind, cluster_distance, merge_clusters, search_radius
from core.parallel import AtomicCounter, CandidateTable, ParallelExecutor
from core.spatial import (DEFAULT_LEAF_CAPACITY, Ball, PointSet, SpatialTree,
                          all_nearest_neighbors, build_tree, mark_uniform_clusters,
                          nearest_point, range_search)
from core.union_find import UnionFind

NO_LINK = -1

# Search balls are inflated by this factor so rounding never drops the cluster that set beta
RADIUS_PAD = 1.0 + 1e-9

MergeList = List[Tuple[int, int, float]]


class ChainState:
    """Successor and predecessor links of the NN chains, indexed by cluster id.

    ``succ`` has a single writer per slot (its owner). ``pred`` is a
    priority-write table: the minimum ``(distance, id)`` incoming edge wins.
    """

    def __init__(self, n: int):
        self.succ = np.full(n, NO_LINK, dtype=np.int64)
        self.pred = CandidateTable(n)

    def pred_of(self, cid: int) -> Optional[Tuple[int, float]]:
        return self.pred.get(cid)

    def clear(self, ids: Optional[np.ndarray] = None) -> None:
        """Drop the links of ``ids`` (every link when None)."""
        if ids is None:
            self.succ.fill(NO_LINK)
            self.pred.reset()
            return
        ids = np.asarray(ids, dtype=np.int64)
        self.succ[ids] = NO_LINK
        self.pred.reset(ids.tolist())


@dataclass
class RoundContext:
    """Active clusters, terminal clusters and the smallest active size of one round."""

    active: np.ndarray
    terminal: np.ndarray
    n_min: int


@dataclass
class RoundRecord:
    index: int
    terminals: int
    active: int
    merges: int


@dataclass
class RunStats:
    """Per-run instrumentation.

    ``work`` is the chain-maintenance work ``sum |A_i| (|Z_i| + log |A_i|)``;
    ``point_distances`` counts point-to-point distance computations.
    """

    n: int
    kind: str
    cache_size: int
    threads: int
    rounds: int = 0
    per_round: List[RoundRecord] = field(default_factory=list)
    work: float = 0.0
    point_distances: int = 0
    distance_evals: int = 0
    cache_hits: int = 0
    reset_rounds: int = 0
    peak_active: int = 0
    timings: Dict[str, float] = field(
        default_factory=lambda: {"init": 0.0, "nn": 0.0, "merge": 0.0, "update": 0.0})

    def add_round(self, ctx: RoundContext, merges: int) -> None:
        self.rounds += 1
        active, terminals = len(ctx.active), len(ctx.terminal)
        self.per_round.append(RoundRecord(self.rounds, terminals, active, merges))
        self.work += active * (terminals + math.log2(active))
        self.peak_active = max(self.peak_active, active)

    @property
    def total_time(self) -> float:
        return sum(self.timings.values())

    def as_dict(self) -> Dict[str, object]:
        return {
            "n": self.n,
            "linkage": self.kind,
            "cache_size": self.cache_size,
            "threads": self.threads,
            "rounds": self.rounds,
            "work_m": self.work,
            "point_distances_d": self.point_distances,
            "distance_evals": self.distance_evals,
            "cache_hits": self.cache_hits,
            "reset_rounds": self.reset_rounds,
            "peak_active": self.peak_active,
            **{f"time_{phase}": value for phase, value in self.timings.items()},
            "time_total": self.total_time,
        }


@dataclass
class RunResult:
    dendrogram: Dendrogram
    stats: RunStats


def first_round_all_nn(points: PointSet,
                       kind: LinkageKind,
                       leaf_capacity: int = DEFAULT_LEAF_CAPACITY,
                       executor: Optional[ParallelExecutor] = None,
                       counter: Optional[AtomicCounter] = None) -> CandidateTable:
    """Nearest neighbors of the initial singleton clusters.

    On singletons every linkage reduces to the (squared, for avg-2) Euclidean
    distance, so a single dual-tree all-nearest-neighbor pass answers the
    whole first round.
    """
    table = CandidateTable(points.n)
    neighbors, _ = all_nearest_neighbors(points, leaf_capacity, executor, counter)
    d2 = np.sum((points.points - points.points[neighbors]) ** 2, axis=1)
    table.load(neighbors, d2 if kind.squared else np.sqrt(d2))
    return table


def grow_chains(candidates: CandidateTable, chains: ChainState, terminals: np.ndarray) -> None:
    """Point every terminal at its nearest neighbor and priority-write the back links."""
    for i in terminals.tolist():
        hit = candidates.get(i)
        if hit is None:
            continue
        j, d = hit
        chains.succ[i] = j
        chains.pred.write_min(j, i, d)


def detect_rnn_pairs(chains: ChainState, ctx: RoundContext, candidates: CandidateTable) -> MergeList:
    """Reciprocal nearest-neighbor pairs closed this round, as sorted ``(i, j, d)`` with ``i < j``."""
    succ = chains.succ
    terminal = set(ctx.terminal.tolist())
    pairs: MergeList = []
    for t in sorted(terminal):
        u = int(succ[t])
        if u == NO_LINK or succ[u] != t:
            continue
        # Report once: by the smaller endpoint when both are terminal.
        if u in terminal and u < t:
            continue
        d = candidates.get(t)[1]
        pairs.append((min(t, u), max(t, u), d))
    pairs.sort()
    return pairs


class ChainEngine:
    """Drives the rounds of one clustering run.

    Args:
        points: Input points
        kind: Linkage criterion
        cache_size: Per-cluster cache capacity ``s`` (None for the linkage default)
        threads: Worker threads for the parallel phases
        leaf_capacity: kd-tree leaf capacity
        range_search: Use ball range queries; False scans every active cluster
    """

    def __init__(self,
                 points,
                 kind,
                 cache_size: Optional[int] = None,
                 threads: int = 1,
                 leaf_capacity: int = DEFAULT_LEAF_CAPACITY,
                 range_search: bool = True):
        self.points = points if isinstance(points, PointSet) else PointSet(points)
        self.kind = LinkageKind.parse(kind)
        if cache_size is None:
            cache_size = self.kind.default_cache_size
        if cache_size < 0:
            raise InvalidInputError(f"cache size must be >= 0, got {cache_size}")
        if threads < 1:
            raise InvalidInputError(f"threads must be >= 1, got {threads}")
        self.leaf_capacity = leaf_capacity
        self.use_range_search = range_search
        self.threads = threads

        n = self.points.n
        self.clusters: Dict[int, Cluster] = {}
        self.alive = np.ones(n, dtype=bool)
        self.sizes = np.ones(n, dtype=np.int64)
        self.centroids = np.array(self.points.points, dtype=np.float64)
        self.variances = np.zeros(n, dtype=np.float64)
        self.node_of = np.arange(n, dtype=np.int64)
        self.n_min = 1

        self.chains = ChainState(n)
        self.candidates = CandidateTable(n)
        self.caches = CacheTables(cache_size)
        self.uf = UnionFind(n)
        self.tree: Optional[SpatialTree] = None
        self.dendrogram = Dendrogram(n)

        self.point_counter = AtomicCounter()
        self.eval_counter = AtomicCounter()
        self.hit_counter = AtomicCounter()
        self.stats = RunStats(n=n, kind=self.kind.value, cache_size=cache_size, threads=threads,
                              peak_active=n)
        self.executor: Optional[ParallelExecutor] = None

    @contextmanager
    def _phase(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            self.stats.timings[name] += time.perf_counter() - start

    # ---- setup ---------------------------------------------------------------

    def _init_structures(self) -> None:
        for i in range(self.points.n):
            self.clusters[i] = Cluster.singleton(i, self.points)
        if not self.use_range_search:
            return
        if self.kind is LinkageKind.COMP:
            self.tree = build_tree(self.points, self.leaf_capacity)
            mark_uniform_clusters(self.tree, self.uf)
        else:
            self._rebuild_centroid_tree()

    def _rebuild_centroid_tree(self) -> None:
        active = np.flatnonzero(self.alive)
        self.tree = build_tree(self.centroids[active], self.leaf_capacity, ids=active)

    def context(self) -> RoundContext:
        active = np.flatnonzero(self.alive)
        terminal = active[self.chains.succ[active] == NO_LINK]
        return RoundContext(active, terminal, self.n_min)

    # ---- distances -------------------------------------------------------------

    def _compute(self, i: int, j: int) -> float:
        self.eval_counter.add(1)
        return cluster_distance(self.kind, self.clusters[i], self.clusters[j], self.points,
                                counter=self.point_counter, check=False)

    def distance(self, i: int, j: int) -> float:
        """``Δ(i, j)`` through the cache and the insert-once reservations."""
        if not self.caches.enabled:
            return self._compute(i, j)
        cached = self.caches.get_cached_dist(i, j)
        if cached is not None:
            self.hit_counter.add(1)
            return cached
        if not self.caches.reserve_pair(i, j):
            return self.caches.wait_for(i, j)
        try:
            d = self._compute(i, j)
        except BaseException:
            self.caches.publish(i, j, None)
            raise
        # Entered into the tables at end_episode.
        self.caches.publish(i, j, d)
        return d

    def _batch_distances(self, i: int, ids: np.ndarray) -> np.ndarray:
        """Ward or avg-2 distances from ``i`` to many clusters, from the stat arrays."""
        d2 = np.sum((self.centroids[ids] - self.centroids[i]) ** 2, axis=1)
        self.eval_counter.add(len(ids))
        self.point_counter.add(len(ids))
        if self.kind is LinkageKind.WARD:
            size_i, sizes = self.sizes[i], self.sizes[ids]
            return np.sqrt(2.0 * size_i * sizes / (size_i + sizes) * d2)
        return d2 + (self.variances[i] / self.sizes[i] + self.variances[ids] / self.sizes[ids])

    # ---- nearest-neighbor phase --------------------------------------------

    def update_nearest_neighbor(self, i: int, j: int, d: Optional[float] = None) -> float:
        """Evaluate ``Δ(i, j)`` and priority-write it into ``i``'s entry (and ``j``'s if terminal)."""
        if d is None:
            d = self.distance(i, j)
        self.candidates.write_min(i, j, d)
        if self.chains.succ[j] == NO_LINK:
            self.candidates.write_min(j, i, d)
        return d

    def _beta(self, i: int, ctx: RoundContext) -> Tuple[int, float]:
        """An active cluster and its current distance to ``i``.

        The predecessor link is used when its cluster is still alive;
        otherwise the cluster owning the nearest centroid (or, for complete
        linkage, the nearest point outside ``i``) supplies the bound.
        """
        pred = self.chains.pred_of(i)
        if pred is not None and self.alive[pred[0]]:
            return pred
        if self.tree is None:
            others = ctx.active[ctx.active != i]
            anchor = int(others[0])
        elif self.kind is LinkageKind.COMP:
            point, _ = nearest_point(self.tree, self.centroids[i], exclude_label=i,
                                     exclude_mark=i, counter=self.point_counter)
            anchor = self.uf.find(point)
        else:
            anchor, _ = nearest_point(self.tree, self.centroids[i], exclude_label=i,
                                      counter=self.point_counter)
        return anchor, self.distance(i, anchor)

    def _evaluate(self, i: int, ids: np.ndarray) -> None:
        if len(ids) == 0:
            return
        if self.kind.constant_time and not self.caches.enabled:
            # Vectorized path: only i's own entry is written.
            dists = self._batch_distances(i, ids)
            best = int(np.lexsort((ids, dists))[0])
            self.candidates.write_min(i, int(ids[best]), float(dists[best]))
            return
        for j in ids.tolist():
            self.update_nearest_neighbor(i, j)

    def _search(self, i: int, ctx: RoundContext) -> None:
        anchor, beta = self._beta(i, ctx)
        self.update_nearest_neighbor(i, anchor, beta)
        if not self.use_range_search:
            self._evaluate(i, ctx.active[(ctx.active != i) & (ctx.active != anchor)])
            return
        radius = search_radius(self.kind, beta, int(self.sizes[i]), ctx.n_min) * RADIUS_PAD
        if self.kind is LinkageKind.COMP:
            self.complete_linkage_range_search(i, radius, skip=anchor)
            return
        hits = range_search(self.tree, Ball(self.centroids[i], radius))
        self._evaluate(i, np.sort(hits[(hits != i) & (hits != anchor)]))

    def _statistics_search(self, ctx: RoundContext) -> None:
        """Ward / avg-2 nearest neighbors of every terminal in one compiled parallel pass."""
        tree = self.tree
        pred = self.chains.pred
        neighbors, dists, evals, work = kernels.statistics_search(
            ctx.terminal, pred.best_id, pred.best_dist, self.alive, self.sizes, self.centroids, self.variances,
            tree.coords, tree.ids, tree.start, tree.end, tree.left, tree.right, tree.lower, tree.upper,
            tree.mark, tree.max_depth, self.kind is LinkageKind.WARD, ctx.n_min, RADIUS_PAD)
        self.candidates.store(ctx.terminal, neighbors, dists)
        self.eval_counter.add(int(evals.sum()))
        self.point_counter.add(int(work.sum()))

    def find_nearest_neighbors(self, ctx: RoundContext) -> CandidateTable:
        """Fill the candidate entry of every terminal cluster, in parallel."""
        if self.kind.constant_time and not self.caches.enabled and self.tree is not None:
            self._statistics_search(ctx)
            return self.candidates

        def search(i: int) -> None:
            self._search(i, ctx)

        self.executor.for_each(search, ctx.terminal.tolist())
        return self.candidates

    def complete_linkage_range_search(self, i: int, radius: float, skip: int = NO_LINK) -> List[int]:
        """Complete-linkage candidates of ``i`` from the marked all-points tree.

        Points inside the ball are counted per cluster (a marked subtree that
        lies entirely inside counts at once). Only clusters whose count
        reaches their size, i.e. clusters wholly inside the ball, get a
        distance evaluation. Counts are local to this query.

        Returns:
            Ids of the clusters evaluated, ascending
        """
        tree = self.tree
        labels, counts, evaluated = kernels.complete_linkage_counts(
            tree.coords, tree.labels, tree.start, tree.end, tree.left, tree.right, tree.lower, tree.upper,
            tree.mark, tree.max_depth, self.centroids[i], radius * radius, i)
        self.point_counter.add(evaluated)
        clusters, inverse = np.unique(labels, return_inverse=True)
        totals = np.bincount(inverse, weights=counts, minlength=len(clusters)).astype(np.int64)
        full = clusters[(totals == self.sizes[clusters]) & (clusters != skip)]
        complete = full.tolist()
        for c in complete:
            self.update_nearest_neighbor(i, c)
        return complete

    # ---- merge phase -----------------------------------------------------

    def _clear_stale_links(self, merged_ids: np.ndarray) -> None:
        merged = np.zeros(len(self.alive), dtype=bool)
        merged[merged_ids] = True
        succ = self.chains.succ
        stale_succ = np.flatnonzero((succ != NO_LINK) & merged[np.where(succ == NO_LINK, 0, succ)])
        pred_ids = self.chains.pred.best_id
        stale_pred = np.flatnonzero((pred_ids >= 0) & merged[np.where(pred_ids < 0, 0, pred_ids)])
        succ[stale_succ] = NO_LINK
        succ[merged_ids] = NO_LINK
        self.chains.pred.reset(np.concatenate([stale_pred, merged_ids]).tolist())

    def merge_round(self, pairs: MergeList) -> None:
        """Merge every pair of the round and refresh the per-round structures.

        Raises:
            InternalInvariantViolation: If pairs overlap or reference dead clusters
        """
        seen = set()
        for i, j, _ in pairs:
            if i >= j or i in seen or j in seen or not (self.alive[i] and self.alive[j]):
                raise InternalInvariantViolation(f"invalid merge pair ({i}, {j})")
            seen.update((i, j))

        with self._phase("update"):
            if self.caches.enabled:
                sizes = self.sizes

                def size_of(c: int) -> int:
                    return int(sizes[c])

                self.caches.update_cached_dists(pairs, self.kind, size_of, self._compute, self.executor)

        with self._phase("merge"):
            clusters = self.clusters

            def merge_pair(pair: Tuple[int, int, float]) -> Cluster:
                return merge_clusters(clusters[pair[0]], clusters[pair[1]])

            merged = self.executor.map_ordered(merge_pair, pairs)
            for (i, j, d), cluster in zip(pairs, merged):
                self.node_of[i] = self.dendrogram.add_merge(int(self.node_of[i]), int(self.node_of[j]), d)
                del clusters[j]
                clusters[i] = cluster
                self.alive[j] = False
                self.sizes[i] = cluster.size
                self.centroids[i] = cluster.stats.centroid
                self.variances[i] = cluster.stats.variance
                self.uf.union(i, j)
            self._clear_stale_links(np.array([c for i, j, _ in pairs for c in (i, j)], dtype=np.int64))
            self.n_min = int(self.sizes[self.alive].min())
            if self.use_range_search:
                if self.kind is LinkageKind.COMP:
                    self.uf.compress()
                    mark_uniform_clusters(self.tree, self.uf)
                else:
                    self._rebuild_centroid_tree()

    # ---- driver ------------------------------------------------------------

    def run(self) -> RunResult:
        """Cluster the points; the engine is single-use."""
        n = self.points.n
        logger.info(f"clustering n={n} d={self.points.d} linkage={self.kind.value} "
                    f"s={self.caches.capacity} threads={self.threads}")
        with ParallelExecutor(self.threads) as executor:
            self.executor = executor
            with self._phase("init"):
                self._init_structures()
            active_count = n
            first = True
            empty_rounds = 0
            while active_count > 1:
                ctx = self.context()
                with self._phase("nn"):
                    if first and self.use_range_search:
                        self.candidates = first_round_all_nn(self.points, self.kind, self.leaf_capacity,
                                                             executor, self.point_counter)
                        self.eval_counter.add(n)
                    else:
                        self.candidates.reset(ctx.terminal.tolist())
                        self.find_nearest_neighbors(ctx)
                    grow_chains(self.candidates, self.chains, ctx.terminal)
                    pairs = detect_rnn_pairs(self.chains, ctx, self.candidates)
                    self.caches.end_episode()
                first = False
                if not pairs:
                    empty_rounds += 1
                    if empty_rounds > 1:
                        raise InternalInvariantViolation("no reciprocal pair even after resetting every chain")
                    logger.warning(f"no reciprocal pair among {len(ctx.active)} clusters; resetting chains")
                    self.stats.reset_rounds += 1
                    self.chains.clear()
                    continue
                empty_rounds = 0
                self.merge_round(pairs)
                active_count -= len(pairs)
                self.stats.add_round(ctx, len(pairs))
                logger.debug(f"round {self.stats.rounds}: terminals={len(ctx.terminal)} "
                             f"active={len(ctx.active)} merges={len(pairs)}")
        self.executor = None

        self.stats.point_distances = self.point_counter.value
        self.stats.distance_evals = self.eval_counter.value
        self.stats.cache_hits = self.hit_counter.value
        self.dendrogram.validate()
        logger.info(f"done: {self.stats.rounds} rounds, D={self.stats.point_distances}, "
                    f"{self.stats.total_time:.3f}s")
        return RunResult(self.dendrogram, self.stats)


def run(points,
        kind,
        cache_size: Optional[int] = None,
        threads: int = 1,
        leaf_capacity: int = DEFAULT_LEAF_CAPACITY,
        range_search: bool = True) -> RunResult:
    """Cluster ``points`` under ``kind``.

    Args:
        points: A PointSet or an (n, d) array
        kind: Linkage criterion or its name
        cache_size: Per-cluster cache capacity (None for the linkage default)
        threads: Worker threads; the result does not depend on it
        leaf_capacity: kd-tree leaf capacity
        range_search: False replaces range queries by exhaustive scans

    Returns:
        The dendrogram and the run statistics

    Raises:
        InvalidInputError: On invalid points or parameters
    """
    engine = ChainEngine(points, kind, cache_size, threads, leaf_capacity, range_search)
    return engine.run()
