"""
Brute-force reference HAC and dendrogram comparison.
naive_hac always merges the globally closest pair, with cluster distances
recomputed from their definitions after every merge.
"""
from typing import Dict, Optional, Tuple, Union

import numpy as np

from core.dendrogram import Dendrogram, leaf_members
from core.errors import InvalidInputError
from core.linkage import Cluster, LinkageKind, cluster_distance, merge_clusters
from core.spatial import PointSet


def naive_hac(points, kind) -> Dendrogram:
    """Generic O(n^3) HAC.

    Ties between equal distances go to the lexicographically smallest
    ``(i, j)`` cluster-id pair.
    """
    points = points if isinstance(points, PointSet) else PointSet(points)
    kind = LinkageKind.parse(kind)
    n = points.n
    dendrogram = Dendrogram(n)
    clusters: Dict[int, Cluster] = {i: Cluster.singleton(i, points) for i in range(n)}
    node_of = list(range(n))

    # Upper triangle holds live distances; everything else is inf.
    dist = np.full((n, n), np.inf)
    for i in range(n):
        for j in range(i + 1, n):
            dist[i, j] = cluster_distance(kind, clusters[i], clusters[j], points, check=False)

    for _ in range(n - 1):
        flat = int(np.argmin(dist))
        i, j = divmod(flat, n)
        height = float(dist[i, j])
        merged = merge_clusters(clusters[i], clusters[j])
        node_of[i] = dendrogram.add_merge(node_of[i], node_of[j], height)
        del clusters[j]
        clusters[i] = merged
        dist[j, :] = np.inf
        dist[:, j] = np.inf
        for other, cluster in clusters.items():
            if other == i:
                continue
            d = cluster_distance(kind, merged, cluster, points, check=False)
            if other < i:
                dist[other, i] = d
            else:
                dist[i, other] = d
    return dendrogram


def cophenetic(dendrogram: Dendrogram) -> np.ndarray:
    """Height at which every pair of points first joins (zero diagonal)."""
    n = dendrogram.n
    members = leaf_members(dendrogram)
    matrix = np.zeros((n, n), dtype=np.float64)
    for merge in dendrogram.merges:
        left, right = members[merge.left], members[merge.right]
        matrix[np.ix_(left, right)] = merge.height
        matrix[np.ix_(right, left)] = merge.height
    return matrix


def compare_cophenetic(a: Union[Dendrogram, np.ndarray],
                       b: Union[Dendrogram, np.ndarray],
                       rtol: float = 1e-9) -> Tuple[float, Optional[Tuple[int, int]]]:
    """Compare two dendrograms through their cophenetic matrices.

    Returns:
        ``(max relative deviation, first pair (p, q), p < q, exceeding rtol or None)``

    Raises:
        InvalidInputError: If the two cover different numbers of points
    """
    ca = cophenetic(a) if isinstance(a, Dendrogram) else np.asarray(a, dtype=np.float64)
    cb = cophenetic(b) if isinstance(b, Dendrogram) else np.asarray(b, dtype=np.float64)
    if ca.shape != cb.shape:
        raise InvalidInputError(f"cophenetic shapes differ: {ca.shape} vs {cb.shape}")
    if ca.size == 0:
        return 0.0, None
    scale = np.maximum(np.abs(ca), np.abs(cb))
    diff = np.abs(ca - cb)
    rel = np.divide(diff, scale, out=np.zeros_like(diff), where=scale > 0)
    bad = np.argwhere(np.triu(rel > rtol, 1))
    first = (int(bad[0][0]), int(bad[0][1])) if len(bad) else None
    return float(rel.max()), first
