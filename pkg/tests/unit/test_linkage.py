import math

import numpy as np
import pytest

from core.errors import InvalidInputError
from core.linkage import (DUAL_TREE_MIN_PAIRS, Cluster, ClusterStats, LinkageKind, avg2_from_stats,
                          cluster_distance, lance_williams, merge_clusters, merge_stats, reducibility_holds,
                          search_radius, ward_from_stats, ward_from_variance)
from core.parallel import AtomicCounter
from core.spatial import PointSet

ALL_KINDS = list(LinkageKind)


def brute_force(kind, xa, xb):
    d = np.linalg.norm(xa[:, None, :] - xb[None, :, :], axis=2)
    if kind is LinkageKind.COMP:
        return float(d.max())
    if kind is LinkageKind.AVG1:
        return float(d.mean())
    if kind is LinkageKind.AVG2:
        return float((d ** 2).mean())
    both = np.vstack([xa, xb])
    increase = (ClusterStats.from_points(both).variance
                - ClusterStats.from_points(xa).variance - ClusterStats.from_points(xb).variance)
    return math.sqrt(2.0 * increase)


def random_clusters(rng, count, d=2, max_size=6):
    sizes = rng.integers(1, max_size + 1, size=count)
    points = PointSet(rng.normal(0.0, 3.0, size=(int(sizes.sum()), d)))
    clusters, start = [], 0
    for size in sizes:
        clusters.append(Cluster.from_members(np.arange(start, start + size), points))
        start += size
    return points, clusters


class TestLinkageKind:
    @pytest.mark.parametrize("name,kind", [("ward", LinkageKind.WARD), ("AVG-1", LinkageKind.AVG1),
                                           ("avg_2", LinkageKind.AVG2), (" comp ", LinkageKind.COMP)])
    def test_parse(self, name, kind):
        assert LinkageKind.parse(name) is kind

    def test_parse_unknown(self):
        with pytest.raises(InvalidInputError):
            LinkageKind.parse("single")

    def test_default_cache_sizes(self):
        assert [k.default_cache_size for k in ALL_KINDS] == [0, 0, 64, 0]


class TestClusterDistance:
    def test_singletons(self):
        points = PointSet(np.array([[0.0, 0.0], [3.0, 4.0]]))
        a, b = Cluster.singleton(0, points), Cluster.singleton(1, points)
        for kind in (LinkageKind.COMP, LinkageKind.AVG1, LinkageKind.WARD):
            assert math.isclose(cluster_distance(kind, a, b, points), 5.0)
        assert math.isclose(cluster_distance(LinkageKind.AVG2, a, b, points), 25.0)

    def test_small_line_instance(self):
        points = PointSet(np.array([[0.0, 0.0], [2.0, 0.0], [5.0, 0.0]]))
        a = Cluster.from_members([0, 1], points)
        b = Cluster.singleton(2, points)
        assert cluster_distance(LinkageKind.COMP, a, b, points) == 5.0
        assert cluster_distance(LinkageKind.AVG1, a, b, points) == 4.0
        assert math.isclose(cluster_distance(LinkageKind.AVG2, a, b, points), 17.0)
        assert math.isclose(cluster_distance(LinkageKind.WARD, a, b, points), math.sqrt(64.0 / 3.0))

    def test_avg2_stats_identity(self):
        points = PointSet(np.array([[0.0, 0.0], [2.0, 0.0], [5.0, 0.0]]))
        a = Cluster.from_members([0, 1], points)
        b = Cluster.singleton(2, points)
        assert math.isclose(avg2_from_stats(a.stats, b.stats), 16.0 + 1.0 + 0.0)

    def test_overlapping_clusters_rejected(self):
        points = PointSet(np.array([[0.0], [1.0], [2.0]]))
        a = Cluster.from_members([0, 1], points)
        b = Cluster.from_members([1, 2], points)
        with pytest.raises(InvalidInputError):
            cluster_distance(LinkageKind.AVG1, a, b, points)

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_matches_brute_force(self, kind, rng):
        points, clusters = random_clusters(rng, 40)
        for a, b in zip(clusters[::2], clusters[1::2]):
            expected = brute_force(kind, points.points[a.members], points.points[b.members])
            assert math.isclose(cluster_distance(kind, a, b, points), expected, rel_tol=1e-9)

    def test_complete_dual_tree_path(self, rng):
        side = int(math.sqrt(DUAL_TREE_MIN_PAIRS)) + 8
        points = PointSet(np.vstack([rng.normal(0, 1, size=(side, 3)), rng.normal(4, 1, size=(side, 3))]))
        a = Cluster.from_members(np.arange(side), points)
        b = Cluster.from_members(np.arange(side, 2 * side), points)
        counter = AtomicCounter()
        got = cluster_distance(LinkageKind.COMP, a, b, points, counter)
        expected = brute_force(LinkageKind.COMP, points.points[a.members], points.points[b.members])
        assert math.isclose(got, expected, rel_tol=1e-12)
        assert counter.value > 0

    def test_counter_counts_point_pairs(self):
        points = PointSet(np.array([[0.0], [1.0], [5.0], [7.0], [9.0]]))
        a = Cluster.from_members([0, 1], points)
        b = Cluster.from_members([2, 3, 4], points)
        counter = AtomicCounter()
        cluster_distance(LinkageKind.AVG1, a, b, points, counter)
        assert counter.value == 6
        cluster_distance(LinkageKind.WARD, a, b, points, counter)
        assert counter.value == 7


class TestStatistics:
    def test_merge_singletons(self):
        merged = merge_stats(ClusterStats.singleton(np.array([0.0, 0.0])), ClusterStats.singleton(np.array([2.0, 0.0])))
        assert merged.size == 2
        np.testing.assert_allclose(merged.centroid, [1.0, 0.0])
        assert math.isclose(merged.variance, 2.0)

    def test_merge_pair_with_singleton(self):
        a = ClusterStats.from_points(np.array([[0.0, 0.0], [2.0, 0.0]]))
        merged = merge_stats(a, ClusterStats.singleton(np.array([4.0, 0.0])))
        np.testing.assert_allclose(merged.centroid, [2.0, 0.0])
        assert math.isclose(merged.variance, 8.0)

    def test_coincident_centroid_keeps_variance(self):
        a = ClusterStats.from_points(np.array([[0.0, 0.0], [2.0, 0.0]]))
        merged = merge_stats(a, ClusterStats.singleton(np.array([1.0, 0.0])))
        assert math.isclose(merged.variance, a.variance)

    def test_merge_matches_recomputation(self, rng):
        for _ in range(200):
            xa = rng.normal(0, 2, size=(int(rng.integers(1, 8)), 3))
            xb = rng.normal(1, 2, size=(int(rng.integers(1, 8)), 3))
            merged = merge_stats(ClusterStats.from_points(xa), ClusterStats.from_points(xb))
            direct = ClusterStats.from_points(np.vstack([xa, xb]))
            np.testing.assert_allclose(merged.centroid, direct.centroid, rtol=1e-9, atol=1e-12)
            assert math.isclose(merged.variance, direct.variance, rel_tol=1e-9, abs_tol=1e-12)

    def test_ward_dual_forms_agree(self, rng):
        for _ in range(200):
            a = ClusterStats.from_points(rng.normal(0, 2, size=(int(rng.integers(1, 8)), 2)))
            b = ClusterStats.from_points(rng.normal(3, 2, size=(int(rng.integers(1, 8)), 2)))
            assert math.isclose(ward_from_stats(a, b), ward_from_variance(a, b), rel_tol=1e-9)

    def test_avg2_symmetric(self, rng):
        a = ClusterStats.from_points(rng.normal(size=(5, 2)))
        b = ClusterStats.from_points(rng.normal(size=(3, 2)))
        assert avg2_from_stats(a, b) == avg2_from_stats(b, a)

    def test_merge_clusters_takes_smaller_id(self):
        points = PointSet(np.array([[0.0], [1.0], [2.0]]))
        merged = merge_clusters(Cluster.singleton(2, points), Cluster.singleton(0, points))
        assert merged.cid == 0
        assert merged.members.tolist() == [0, 2]


class TestLanceWilliams:
    def test_complete_is_max(self):
        assert lance_williams(LinkageKind.COMP, 5.0, 3.0, 2.0, (1, 1, 1)) == 5.0

    def test_avg1_line(self):
        assert lance_williams(LinkageKind.AVG1, 5.0, 3.0, 2.0, (1, 1, 1)) == 4.0

    def test_ward_line(self):
        got = lance_williams(LinkageKind.WARD, 5.0, 3.0, 2.0, (1, 1, 1))
        assert math.isclose(got, math.sqrt(64.0 / 3.0))

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_matches_direct_distance(self, kind, rng):
        for _ in range(100):
            points, (a, b, c) = random_clusters(rng, 3)
            d_ac = cluster_distance(kind, a, c, points)
            d_bc = cluster_distance(kind, b, c, points)
            d_ab = cluster_distance(kind, a, b, points)
            got = lance_williams(kind, d_ac, d_bc, d_ab, (a.size, b.size, c.size))
            expected = cluster_distance(kind, merge_clusters(a, b), c, points)
            assert math.isclose(got, expected, rel_tol=1e-9)


class TestSearchRadius:
    def test_avg2_is_square_root(self):
        assert search_radius(LinkageKind.AVG2, 9.0, 1, 1) == 3.0

    def test_ward(self):
        assert math.isclose(search_radius(LinkageKind.WARD, 3.0, 4, 2), 3.0 * math.sqrt(6.0 / 16.0))

    def test_ward_singletons(self):
        assert search_radius(LinkageKind.WARD, 2.5, 1, 1) == 2.5

    @pytest.mark.parametrize("kind", [LinkageKind.COMP, LinkageKind.AVG1])
    def test_identity(self, kind):
        assert search_radius(kind, 7.0, 5, 2) == 7.0

    @pytest.mark.slow
    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_nearest_neighbor_inside_ball(self, kind, rng):
        """The true nearest cluster lies in the ball built from any beta."""
        for _ in range(10_000):
            points, clusters = random_clusters(rng, 6, max_size=4)
            query, others = clusters[0], clusters[1:]
            dists = [cluster_distance(kind, query, other, points) for other in others]
            nearest = others[int(np.argmin(dists))]
            beta = dists[int(rng.integers(0, len(others)))]
            n_min = min(c.size for c in clusters)
            radius = search_radius(kind, beta, query.size, n_min) * (1 + 1e-9)
            if kind is LinkageKind.COMP:
                coords = points.points[nearest.members]
                assert np.all(np.linalg.norm(coords - query.stats.centroid, axis=1) <= radius)
            else:
                assert np.linalg.norm(nearest.stats.centroid - query.stats.centroid) <= radius


class TestReducibility:
    points = PointSet(np.array([[0.0], [1.0], [5.0], [5.0], [9.0]]))

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_line_triple(self, kind):
        a, b, c = (Cluster.singleton(i, self.points) for i in (0, 1, 2))
        assert reducibility_holds(kind, a, b, c, self.points)

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_coincident_pair(self, kind):
        a, b, c = (Cluster.singleton(i, self.points) for i in (2, 3, 4))
        assert reducibility_holds(kind, a, b, c, self.points)

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_random_triples(self, kind, rng):
        for _ in range(2_000):
            points, (a, b, c) = random_clusters(rng, 3, max_size=4)
            assert reducibility_holds(kind, a, b, c, points)
