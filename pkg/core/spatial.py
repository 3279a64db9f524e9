"""
Spatial indexing for the HAC engine.
Provides the point container, an array-backed kd-tree with bounding boxes,
ball range queries, nearest-point search, the dual-tree all-nearest-neighbor
and farthest-pair traversals, and uniform-cluster node marking.
Traversals run in the compiled kernels of :mod:`core.kernels`.
"""
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple, Union

import numpy as np

from core import kernels
from core.errors import InvalidInputError, NoCandidateError
from core.kernels import NO_EXCLUSION, NO_MARK
from core.parallel import AtomicCounter, ParallelExecutor, WriteMax
from core.union_find import UnionFind

DEFAULT_LEAF_CAPACITY = 16


@dataclass
class PointSet:
    """The n input points in d dimensions; immutable for a run.

    Point indices 0..n-1 are the canonical identity of points.
    """

    points: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.points, dtype=np.float64)
        if data.ndim == 1 and data.size > 0:
            data = data.reshape(-1, 1)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise InvalidInputError(f"need an n x d array with n >= 1 and d >= 1, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise InvalidInputError("every coordinate must be finite")
        data = np.ascontiguousarray(data)
        data.setflags(write=False)
        self.points = data

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, index):
        return self.points[index]


@dataclass
class BoundingBox:
    """Axis-aligned box; lower[k] <= upper[k] for every k."""

    lower: np.ndarray
    upper: np.ndarray

    @classmethod
    def from_points(cls, coords: np.ndarray) -> "BoundingBox":
        return cls(coords.min(axis=0), coords.max(axis=0))

    def min_dist_sq(self, center: np.ndarray) -> float:
        """Squared distance from ``center`` to the closest point of the box."""
        clamped = np.clip(center, self.lower, self.upper)
        return float(np.sum((clamped - center) ** 2))

    def contains(self, point: np.ndarray) -> bool:
        return bool(np.all(self.lower <= point) and np.all(point <= self.upper))


@dataclass
class Ball:
    """Closed ball used as a range."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        if not self.radius >= 0:
            raise InvalidInputError(f"ball radius must be >= 0, got {self.radius}")

    def contains(self, point: np.ndarray) -> bool:
        return float(np.sum((np.asarray(point) - self.center) ** 2)) <= self.radius * self.radius


class SpatialTree:
    """Array-backed kd-tree over a set of items (points or cluster centroids).

    Nodes are numbered in pre-order (a parent's index is smaller than its
    children's). Items are stored in tree order, so node ``q`` owns the
    contiguous slice ``coords[start[q]:end[q]]`` / ``ids[start[q]:end[q]]``.
    ``labels`` holds the owning cluster of every item in tree order (the item
    id itself until :func:`mark_uniform_clusters` relabels a point tree).
    The tree is immutable after construction except for ``mark`` and
    ``labels``, which that function refreshes.
    """

    def __init__(self, coords: np.ndarray, ids: np.ndarray, leaf_capacity: int):
        self.leaf_capacity = leaf_capacity
        self.dim = coords.shape[1]
        perm = np.arange(coords.shape[0], dtype=np.int64)

        lower: List[np.ndarray] = []
        upper: List[np.ndarray] = []
        start: List[int] = []
        end: List[int] = []
        left: List[int] = []
        right: List[int] = []
        depth: List[int] = []

        def build(s: int, e: int, level: int) -> int:
            node = len(start)
            block = coords[perm[s:e]]
            lo, hi = block.min(axis=0), block.max(axis=0)
            lower.append(lo)
            upper.append(hi)
            start.append(s)
            end.append(e)
            left.append(-1)
            right.append(-1)
            depth.append(level)
            if e - s <= leaf_capacity:
                return node
            # Split on the widest dimension at the median item.
            axis = int(np.argmax(hi - lo))
            order = np.argsort(block[:, axis], kind="stable")
            perm[s:e] = perm[s:e][order]
            mid = s + (e - s) // 2
            left[node] = build(s, mid, level + 1)
            right[node] = build(mid, e, level + 1)
            return node

        build(0, coords.shape[0], 0)

        self.coords = np.ascontiguousarray(coords[perm])
        self.ids = np.asarray(ids, dtype=np.int64)[perm]
        self.lower = np.asarray(lower)
        self.upper = np.asarray(upper)
        self.start = np.asarray(start, dtype=np.int64)
        self.end = np.asarray(end, dtype=np.int64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.depth = np.asarray(depth, dtype=np.int64)
        self.mark = np.full(len(start), NO_MARK, dtype=np.int64)
        self.labels = self.ids
        self.max_depth = int(self.depth.max())

        self.leaves = np.flatnonzero(self.left < 0)
        self.leaves = self.leaves[np.argsort(self.start[self.leaves])]
        internal = np.flatnonzero(self.left >= 0)
        self.parent = np.full(len(start), -1, dtype=np.int64)
        self.parent[self.left[internal]] = internal
        self.parent[self.right[internal]] = internal
        self.internal_by_depth = [
            internal[self.depth[internal] == level]
            for level in range(self.max_depth + 1)
        ]

    def __len__(self) -> int:
        return self.coords.shape[0]

    @property
    def node_count(self) -> int:
        return len(self.start)

    def size(self, node: int) -> int:
        return int(self.end[node] - self.start[node])

    def is_leaf(self, node: int) -> bool:
        return self.left[node] < 0

    def box(self, node: int) -> BoundingBox:
        return BoundingBox(self.lower[node], self.upper[node])

    def node_ids(self, node: int) -> np.ndarray:
        return self.ids[self.start[node]:self.end[node]]

    def leaf_order_ids(self) -> np.ndarray:
        """Item ids in in-order leaf traversal."""
        return np.concatenate([self.node_ids(leaf) for leaf in self.leaves])


def build_tree(points: Union[PointSet, np.ndarray],
               leaf_capacity: int = DEFAULT_LEAF_CAPACITY,
               ids: Optional[np.ndarray] = None) -> SpatialTree:
    """Build a kd-tree over points or a centroid list.

    Args:
        points: A PointSet or an (m, d) coordinate array
        leaf_capacity: Maximum number of items per leaf
        ids: Item ids (defaults to 0..m-1)

    Returns:
        The constructed tree

    Raises:
        InvalidInputError: If there are no items or the capacity is not positive
    """
    coords = points.points if isinstance(points, PointSet) else np.asarray(points, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[0] == 0:
        raise InvalidInputError("cannot build a tree over an empty item set")
    if leaf_capacity < 1:
        raise InvalidInputError(f"leaf_capacity must be positive, got {leaf_capacity}")
    if ids is None:
        ids = np.arange(coords.shape[0], dtype=np.int64)
    elif len(ids) != coords.shape[0]:
        raise InvalidInputError("ids and coordinates differ in length")
    return SpatialTree(coords, ids, leaf_capacity)


def ball_overlaps_box(ball: Ball, box: BoundingBox) -> bool:
    """Closed overlap test: min distance from the center to the box <= radius."""
    return box.min_dist_sq(ball.center) <= ball.radius * ball.radius


def range_search(tree: SpatialTree, ball: Ball) -> np.ndarray:
    """Ids of all stored items inside the ball, in tree order."""
    positions = kernels.ball_positions(tree.coords, tree.start, tree.end, tree.left, tree.right,
                                       tree.lower, tree.upper, tree.max_depth,
                                       ball.center, ball.radius * ball.radius)
    return tree.ids[positions]


def range_visit(tree: SpatialTree, ball: Ball, visitor: Callable[[int], None]) -> None:
    """Invoke ``visitor(item_id)`` once for every stored item inside the ball, in tree order.

    Subtrees whose boxes miss the ball are never descended.
    """
    for item in range_search(tree, ball).tolist():
        visitor(item)


def nearest_point(tree: SpatialTree,
                  query: np.ndarray,
                  exclude_label: Optional[int] = None,
                  exclude_mark: Optional[int] = None,
                  counter: Optional[AtomicCounter] = None) -> Tuple[int, float]:
    """Find the item closest to ``query`` that is not excluded.

    Args:
        tree: Tree to search
        query: Query coordinates
        exclude_label: Skip items whose label (``tree.labels``) equals this
        exclude_mark: Skip whole subtrees carrying this cluster mark
        counter: Optional point-distance counter

    Returns:
        ``(item id, distance)``; ties are broken by the smaller id

    Raises:
        NoCandidateError: If every item is excluded
    """
    query = np.ascontiguousarray(query, dtype=np.float64)
    pos, d2, evaluated = kernels.nearest_position(
        tree.coords, tree.ids, tree.labels, tree.start, tree.end, tree.left, tree.right,
        tree.lower, tree.upper, tree.mark, tree.max_depth, query,
        NO_EXCLUSION if exclude_label is None else int(exclude_label),
        NO_EXCLUSION if exclude_mark is None else int(exclude_mark))
    if counter is not None:
        counter.add(evaluated)
    if pos < 0:
        raise NoCandidateError("every item is excluded")
    return int(tree.ids[pos]), math.sqrt(d2)


def all_nearest_neighbors(points: Union[PointSet, np.ndarray],
                          leaf_capacity: int = DEFAULT_LEAF_CAPACITY,
                          executor: Optional[ParallelExecutor] = None,
                          counter: Optional[AtomicCounter] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Nearest other point of every point, by a dual-tree traversal.

    Args:
        points: Input points (n >= 2)
        leaf_capacity: kd-tree leaf capacity
        executor: Optional executor; disjoint query subtrees run concurrently
        counter: Optional point-distance counter

    Returns:
        ``(neighbor ids, distances)``, ties broken by the smaller id

    Raises:
        InvalidInputError: If fewer than two points are given
    """
    coords = points.points if isinstance(points, PointSet) else np.asarray(points, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[0] < 2:
        raise InvalidInputError("all-nearest-neighbors needs at least two points")
    tree = build_tree(coords, leaf_capacity)
    best_d2 = np.full(len(tree), np.inf)
    best_id = np.full(len(tree), np.iinfo(np.int64).max, dtype=np.int64)
    bound = np.full(tree.node_count, np.inf)

    # Query subtrees handed to workers: expand the frontier until there is
    # enough work for every thread.
    workers = executor.threads if executor is not None else 1
    frontier = [0]
    while len(frontier) < workers * 4:
        expandable = [q for q in frontier if tree.left[q] >= 0]
        if not expandable:
            break
        q = max(expandable, key=tree.size)
        frontier.remove(q)
        frontier.extend([int(tree.left[q]), int(tree.right[q])])

    def run_subtree(q: int) -> None:
        evaluated = kernels.all_nearest_subtree(tree.coords, tree.ids, tree.start, tree.end, tree.left,
                                                tree.right, tree.parent, tree.lower, tree.upper,
                                                tree.max_depth, q, best_d2, best_id, bound)
        if counter is not None:
            counter.add(evaluated)

    if executor is not None:
        executor.for_each(run_subtree, sorted(frontier))
    else:
        for q in sorted(frontier):
            run_subtree(q)

    neighbors = np.empty(len(tree), dtype=np.int64)
    distances = np.empty(len(tree))
    neighbors[tree.ids] = best_id
    distances[tree.ids] = np.sqrt(best_d2)
    return neighbors, distances


def _split_pair(tree_a: SpatialTree, a: int, tree_b: SpatialTree, b: int) -> List[Tuple[int, int]]:
    """Child node pairs of ``(a, b)``; the larger internal node is split."""
    a_leaf, b_leaf = tree_a.left[a] < 0, tree_b.left[b] < 0
    if a_leaf or (not b_leaf and tree_b.size(b) > tree_a.size(a)):
        return [(a, int(tree_b.left[b])), (a, int(tree_b.right[b]))]
    return [(int(tree_a.left[a]), b), (int(tree_a.right[a]), b)]


def farthest_pair_distance(tree_a: SpatialTree,
                           tree_b: SpatialTree,
                           counter: Optional[AtomicCounter] = None,
                           executor: Optional[ParallelExecutor] = None) -> float:
    """Largest Euclidean distance between an item of ``tree_a`` and one of ``tree_b``.

    Node pairs whose largest box-to-box distance cannot beat the best pair
    found so far are pruned. With an executor, the top node pairs are
    searched concurrently; each task starts from the best value published so
    far and publishes its own through a write-max cell.

    Raises:
        InvalidInputError: If either tree is empty
    """
    if tree_a is None or tree_b is None or len(tree_a) == 0 or len(tree_b) == 0:
        raise InvalidInputError("farthest pair needs two non-empty trees")
    best = WriteMax(kernels.point_dist_sq(tree_a.coords, 0, tree_b.coords, 0))
    max_depth = tree_a.max_depth + tree_b.max_depth

    def descend(start: Tuple[int, int]) -> None:
        value, evaluated = kernels.farthest_pair_subtree(
            tree_a.coords, tree_a.start, tree_a.end, tree_a.left, tree_a.right, tree_a.lower, tree_a.upper,
            tree_b.coords, tree_b.start, tree_b.end, tree_b.left, tree_b.right, tree_b.lower, tree_b.upper,
            max_depth, start[0], start[1], best.value)
        best.write(value)
        if counter is not None:
            counter.add(evaluated)

    if executor is None or executor.threads == 1:
        descend((0, 0))
        return math.sqrt(best.value)

    frontier = [(0, 0)]
    while len(frontier) < 4 * executor.threads:
        splittable = [p for p in frontier if tree_a.left[p[0]] >= 0 or tree_b.left[p[1]] >= 0]
        if not splittable:
            break
        widest = max(splittable, key=lambda p: tree_a.size(p[0]) * tree_b.size(p[1]))
        frontier.remove(widest)
        frontier.extend(_split_pair(tree_a, widest[0], tree_b, widest[1]))
    executor.for_each(descend, frontier)
    return math.sqrt(best.value)


def mark_uniform_clusters(tree: SpatialTree, uf: UnionFind) -> None:
    """Mark every node with the common cluster id of its points, or NO_MARK.

    The tree must index point ids covered by ``uf``. Item labels are
    refreshed to the current cluster ids, then marks are recomputed
    bottom-up: leaves from their points, internal nodes one depth level at a
    time from their children, each level as one vectorized step.
    """
    labels = uf.find_many(tree.ids)
    tree.labels = labels
    starts = tree.start[tree.leaves]
    lows = np.minimum.reduceat(labels, starts)
    highs = np.maximum.reduceat(labels, starts)
    tree.mark[tree.leaves] = np.where(lows == highs, lows, NO_MARK)
    for nodes in reversed(tree.internal_by_depth):
        if len(nodes) == 0:
            continue
        left_mark = tree.mark[tree.left[nodes]]
        right_mark = tree.mark[tree.right[nodes]]
        tree.mark[nodes] = np.where(left_mark == right_mark, left_mark, NO_MARK)
