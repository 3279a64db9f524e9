"""
Linkage criteria for the HAC engine.
Provides cluster distances for complete, Ward's and average linkage
(Euclidean and squared Euclidean), the size/centroid/variance statistics,
Lance-Williams updates and the search-ball radius of each criterion.
"""
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from core import kernels
from core.errors import InvalidInputError
from core.parallel import AtomicCounter
from core.spatial import DEFAULT_LEAF_CAPACITY, PointSet, SpatialTree, build_tree, farthest_pair_distance

# Complete-linkage pairs with more point pairs than this use the dual-tree traversal
DUAL_TREE_MIN_PAIRS = 4096


class LinkageKind(str, Enum):
    """The supported linkage criteria."""

    COMP = "comp"
    WARD = "ward"
    AVG1 = "avg1"
    AVG2 = "avg2"

    @classmethod
    def parse(cls, value) -> "LinkageKind":
        """Parse a linkage name such as ``"ward"`` or ``"avg-1"``.

        Raises:
            InvalidInputError: If the name is unknown
        """
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        for kind in cls:
            if kind.value == key:
                return kind
        raise InvalidInputError(f"unknown linkage '{value}' (expected comp, ward, avg1 or avg2)")

    @property
    def squared(self) -> bool:
        """Distances live in squared-Euclidean space."""
        return self is LinkageKind.AVG2

    @property
    def constant_time(self) -> bool:
        """Distance is computed from cluster statistics alone."""
        return self in (LinkageKind.WARD, LinkageKind.AVG2)

    @property
    def default_cache_size(self) -> int:
        """Per-table cache capacity used when none is configured."""
        return 64 if self is LinkageKind.AVG1 else 0


@dataclass
class ClusterStats:
    """Sufficient statistics of a cluster.

    ``variance`` is the sum of squared deviations from the centroid, not a mean.
    """

    size: int
    centroid: np.ndarray
    variance: float = 0.0

    @classmethod
    def singleton(cls, point: np.ndarray) -> "ClusterStats":
        return cls(1, np.array(point, dtype=np.float64), 0.0)

    @classmethod
    def from_points(cls, coords: np.ndarray) -> "ClusterStats":
        """Recompute the statistics directly from member coordinates."""
        coords = np.asarray(coords, dtype=np.float64)
        centroid = coords.mean(axis=0)
        variance = float(np.sum((coords - centroid) ** 2))
        return cls(len(coords), centroid, variance)


@dataclass
class Cluster:
    """A cluster: its id (smallest member index), sorted members and statistics."""

    cid: int
    members: np.ndarray
    stats: ClusterStats
    _tree: Optional[SpatialTree] = field(default=None, repr=False, compare=False)

    @classmethod
    def singleton(cls, index: int, points: PointSet) -> "Cluster":
        return cls(index, np.array([index], dtype=np.int64), ClusterStats.singleton(points.points[index]))

    @classmethod
    def from_members(cls, members, points: PointSet) -> "Cluster":
        members = np.sort(np.asarray(members, dtype=np.int64))
        if len(members) == 0:
            raise InvalidInputError("a cluster needs at least one member")
        return cls(int(members[0]), members, ClusterStats.from_points(points.points[members]))

    @property
    def size(self) -> int:
        return self.stats.size

    def point_tree(self, points: PointSet, leaf_capacity: int = DEFAULT_LEAF_CAPACITY) -> SpatialTree:
        """kd-tree over the member points, built on first use."""
        if self._tree is None:
            self._tree = build_tree(points.points[self.members], leaf_capacity, ids=self.members)
        return self._tree


@dataclass(frozen=True)
class LWCoefficients:
    """Lance-Williams coefficients for one (A, B, C) size triple."""

    a1: float
    a2: float
    b: float
    c: float

    @classmethod
    def for_kind(cls, kind: LinkageKind, size_a: int, size_b: int, size_c: int) -> "LWCoefficients":
        if kind is LinkageKind.COMP:
            return cls(0.5, 0.5, 0.0, 0.5)
        if kind is LinkageKind.WARD:
            total = size_a + size_b + size_c
            return cls((size_a + size_c) / total, (size_b + size_c) / total, -size_c / total, 0.0)
        total = size_a + size_b
        return cls(size_a / total, size_b / total, 0.0, 0.0)


def _sq_dist(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sum((a - b) ** 2))


def merge_stats(a: ClusterStats, b: ClusterStats) -> ClusterStats:
    """Statistics of the union of two disjoint clusters.

    The variance is the exact decomposition
    ``Var(A) + Var(B) + |A| |x_A - x_AB|^2 + |B| |x_B - x_AB|^2``.
    """
    size = a.size + b.size
    centroid = (a.size * a.centroid + b.size * b.centroid) / size
    variance = (a.variance + b.variance
                + a.size * _sq_dist(a.centroid, centroid)
                + b.size * _sq_dist(b.centroid, centroid))
    return ClusterStats(size, centroid, variance)


def merge_clusters(a: Cluster, b: Cluster) -> Cluster:
    """Merge two clusters; the result takes the smaller id."""
    members = np.sort(np.concatenate([a.members, b.members]), kind="stable")
    return Cluster(min(a.cid, b.cid), members, merge_stats(a.stats, b.stats))


def ward_from_stats(a: ClusterStats, b: ClusterStats) -> float:
    """Ward distance in centroid form."""
    return math.sqrt(2.0 * a.size * b.size / (a.size + b.size) * _sq_dist(a.centroid, b.centroid))


def ward_from_variance(a: ClusterStats, b: ClusterStats) -> float:
    """Ward distance as twice the variance increase of the merge."""
    increase = merge_stats(a, b).variance - a.variance - b.variance
    return math.sqrt(max(0.0, 2.0 * increase))


def avg2_from_stats(a: ClusterStats, b: ClusterStats) -> float:
    """Mean squared point distance, from centroids and variances."""
    return _sq_dist(a.centroid, b.centroid) + (a.variance / a.size + b.variance / b.size)


def cluster_distance(kind: LinkageKind,
                     a: Cluster,
                     b: Cluster,
                     points: PointSet,
                     counter: Optional[AtomicCounter] = None,
                     check: bool = True) -> float:
    """Distance between two clusters under ``kind``.

    Ward and avg-2 come from the statistics in constant time; complete and
    avg-1 iterate member pairs in ascending point-index order (complete switches
    to a dual-tree farthest-pair search for large pairs).

    Args:
        kind: Linkage criterion
        a: First cluster
        b: Second cluster
        points: The point set both clusters index into
        counter: Optional point-distance counter
        check: Verify that the clusters are disjoint

    Returns:
        The linkage distance (squared space for avg-2)

    Raises:
        InvalidInputError: If the clusters overlap
    """
    if check and np.intersect1d(a.members, b.members, assume_unique=True).size:
        raise InvalidInputError(f"clusters {a.cid} and {b.cid} overlap")
    if kind is LinkageKind.WARD:
        if counter is not None:
            counter.add(1)
        return ward_from_stats(a.stats, b.stats)
    if kind is LinkageKind.AVG2:
        if counter is not None:
            counter.add(1)
        return avg2_from_stats(a.stats, b.stats)

    pairs = a.size * b.size
    if counter is not None and not (kind is LinkageKind.COMP and pairs > DUAL_TREE_MIN_PAIRS):
        counter.add(pairs)
    if kind is LinkageKind.AVG1:
        return kernels.pair_distance_sum(points.points[a.members], points.points[b.members]) / pairs
    if pairs > DUAL_TREE_MIN_PAIRS:
        return farthest_pair_distance(a.point_tree(points), b.point_tree(points), counter)
    return math.sqrt(kernels.pair_max_dist_sq(points.points[a.members], points.points[b.members]))


def lance_williams(kind: LinkageKind,
                   d_ac: float,
                   d_bc: float,
                   d_ab: float,
                   sizes: Tuple[int, int, int]) -> float:
    """Distance from ``A ∪ B`` to ``C`` from the three pairwise distances.

    Ward's coefficients act on squared distances: inputs are squared, combined
    and the square root is returned.
    """
    size_a, size_b, size_c = sizes
    coef = LWCoefficients.for_kind(kind, size_a, size_b, size_c)
    if kind is LinkageKind.COMP:
        # The coefficients reduce to the max; take it exactly.
        return max(d_ac, d_bc)
    if kind is LinkageKind.WARD:
        combined = coef.a1 * d_ac * d_ac + coef.a2 * d_bc * d_bc + coef.b * d_ab * d_ab
        return math.sqrt(max(0.0, combined))
    return coef.a1 * d_ac + coef.a2 * d_bc + coef.b * d_ab + coef.c * abs(d_ac - d_bc)


def search_radius(kind: LinkageKind, beta: float, cluster_size: int, n_min: int) -> float:
    """Radius of the centroid ball that must contain the nearest neighbor.

    Args:
        kind: Linkage criterion
        beta: Distance from the query cluster to some other active cluster
        cluster_size: Size of the query cluster
        n_min: Size of the smallest active cluster

    Returns:
        The ball radius around the query centroid
    """
    if kind is LinkageKind.AVG2:
        return math.sqrt(beta)
    if kind is LinkageKind.WARD:
        return beta * math.sqrt((cluster_size + n_min) / (2.0 * n_min * cluster_size))
    return beta


def reducibility_holds(kind: LinkageKind, a: Cluster, b: Cluster, c: Cluster, points: PointSet) -> bool:
    """Check reducibility on one triple of disjoint clusters.

    If A and B are closer to each other than either is to C, the merged
    cluster must be farther from C than A and B were from each other.
    """
    d_ab = cluster_distance(kind, a, b, points)
    d_ac = cluster_distance(kind, a, c, points)
    d_bc = cluster_distance(kind, b, c, points)
    if not (d_ab < d_ac and d_ab < d_bc):
        return True
    return d_ab < cluster_distance(kind, merge_clusters(a, b), c, points)
