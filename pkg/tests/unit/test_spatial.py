import math

import numpy as np
import pytest

from core.errors import InvalidInputError, NoCandidateError
from core.parallel import AtomicCounter, ParallelExecutor
from core.spatial import (NO_MARK, Ball, BoundingBox, PointSet, all_nearest_neighbors, ball_overlaps_box,
                          build_tree, farthest_pair_distance, mark_uniform_clusters, nearest_point,
                          range_search, range_visit)
from core.union_find import UnionFind


class TestPointSet:
    def test_one_dimensional_input_becomes_column(self):
        points = PointSet(np.array([0.0, 1.0, 4.0]))
        assert (points.n, points.d) == (3, 1)

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidInputError):
            PointSet(np.array([[0.0, np.nan]]))

    def test_rejects_empty(self):
        with pytest.raises(InvalidInputError):
            PointSet(np.zeros((0, 2)))

    def test_is_read_only(self):
        points = PointSet(np.zeros((2, 2)))
        with pytest.raises(ValueError):
            points.points[0, 0] = 1.0


class TestBuildTree:
    def test_single_point(self):
        tree = build_tree(np.array([[1.0, 2.0]]))
        assert tree.node_count == 1
        assert tree.is_leaf(0)
        assert tree.size(0) == 1

    def test_boxes_contain_their_points(self, line):
        points = PointSet(np.array([[0.0, 0.0], [1.0, 0.0], [4.0, 0.0], [6.0, 0.0]]))
        tree = build_tree(points, leaf_capacity=1)
        assert len(tree.leaves) == 4
        for node in range(tree.node_count):
            box = tree.box(node)
            for p in tree.node_ids(node):
                assert box.contains(points.points[p])

    def test_leaf_order_is_permutation(self, generic_points):
        points = generic_points(200, d=3)
        tree = build_tree(points, leaf_capacity=5)
        assert sorted(tree.leaf_order_ids().tolist()) == list(range(200))

    def test_custom_ids(self):
        tree = build_tree(np.array([[0.0], [1.0]]), ids=np.array([7, 9]))
        assert sorted(tree.ids.tolist()) == [7, 9]

    def test_rejects_bad_capacity(self):
        with pytest.raises(InvalidInputError):
            build_tree(np.array([[0.0]]), leaf_capacity=0)


class TestBallOverlapsBox:
    box = BoundingBox(np.array([0.0, 0.0]), np.array([1.0, 1.0]))

    def test_center_inside(self):
        assert ball_overlaps_box(Ball(np.array([0.5, 0.5]), 0.0), self.box)

    def test_far_away(self):
        assert not ball_overlaps_box(Ball(np.array([5.0, 0.0]), 1.0), self.box)

    def test_touching_boundary_counts(self):
        assert ball_overlaps_box(Ball(np.array([2.0, 0.0]), 1.0), self.box)

    def test_negative_radius_rejected(self):
        with pytest.raises(InvalidInputError):
            Ball(np.array([0.0]), -1.0)


class TestRangeQueries:
    def test_line_ball(self, line):
        tree = build_tree(line(0, 1, 4, 6), leaf_capacity=1)
        assert sorted(range_search(tree, Ball(np.array([0.0]), 2.0)).tolist()) == [0, 1]

    def test_full_cover(self, generic_points):
        tree = build_tree(generic_points(50), leaf_capacity=4)
        seen = []
        range_visit(tree, Ball(np.array([5.0, 5.0]), 100.0), seen.append)
        assert sorted(seen) == list(range(50))

    def test_zero_radius_at_point(self, generic_points):
        points = generic_points(40)
        tree = build_tree(points, leaf_capacity=4)
        assert range_search(tree, Ball(points.points[17], 0.0)).tolist() == [17]

    def test_matches_brute_force(self, generic_points, rng):
        points = generic_points(300, d=3)
        tree = build_tree(points, leaf_capacity=8)
        for _ in range(20):
            center = rng.uniform(0, 10, size=3)
            radius = float(rng.uniform(0.5, 4.0))
            expected = np.flatnonzero(np.linalg.norm(points.points - center, axis=1) <= radius)
            got = np.sort(range_search(tree, Ball(center, radius)))
            np.testing.assert_array_equal(got, expected)


class TestNearestPoint:
    def test_excluding_the_query_item(self, generic_points):
        points = generic_points(100)
        tree = build_tree(points, leaf_capacity=4)
        q = 13
        counter = AtomicCounter()
        got, dist = nearest_point(tree, points.points[q], exclude_label=q, counter=counter)
        d = np.linalg.norm(points.points - points.points[q], axis=1)
        d[q] = np.inf
        assert got == int(np.argmin(d))
        assert math.isclose(dist, float(d.min()))
        assert 0 < counter.value < 100

    def test_single_admissible_item(self, line):
        tree = build_tree(line(0, 1, 2))
        uf = UnionFind(3)
        uf.union(0, 1)
        mark_uniform_clusters(tree, uf)
        assert nearest_point(tree, np.array([0.0]), exclude_label=0)[0] == 2

    def test_tie_goes_to_smaller_id(self):
        coords = np.zeros((8, 1))
        coords[3] = [1.0]
        coords[7] = [-1.0]
        coords[[0, 1, 2, 4, 5, 6]] = [[10.0]]
        tree = build_tree(coords, leaf_capacity=2)
        assert nearest_point(tree, np.array([0.0]))[0] == 3

    def test_everything_excluded(self, line):
        tree = build_tree(line(0, 1))
        uf = UnionFind(2)
        uf.union(0, 1)
        mark_uniform_clusters(tree, uf)
        with pytest.raises(NoCandidateError):
            nearest_point(tree, np.array([0.0]), exclude_label=0)

    def test_excluded_mark_skips_subtree(self, line):
        points = line(0, 1, 5, 6)
        tree = build_tree(points, leaf_capacity=1)
        uf = UnionFind(4)
        uf.union(0, 1)
        mark_uniform_clusters(tree, uf)
        got, dist = nearest_point(tree, np.array([0.5]), exclude_label=0, exclude_mark=0)
        assert (got, dist) == (2, 4.5)

    def test_matches_brute_force_with_cluster_labels(self, generic_points, rng):
        points = generic_points(300, d=3)
        tree = build_tree(points, leaf_capacity=6)
        uf = UnionFind(300)
        for a, b in rng.integers(0, 300, size=(200, 2)):
            uf.union(int(a), int(b))
        uf.compress()
        mark_uniform_clusters(tree, uf)
        roots = uf.roots()
        for own in np.unique(roots)[:15].tolist():
            query = points.points[own]
            d = np.linalg.norm(points.points - query, axis=1)
            d[roots == own] = np.inf
            if np.isinf(d).all():
                continue
            got, dist = nearest_point(tree, query, exclude_label=own, exclude_mark=own)
            assert got == int(np.argmin(d))
            assert math.isclose(dist, float(d.min()))


class TestAllNearestNeighbors:
    def test_line(self, line):
        neighbors, distances = all_nearest_neighbors(line(0, 1, 3))
        assert neighbors.tolist() == [1, 0, 1]
        np.testing.assert_allclose(distances, [1.0, 1.0, 2.0])

    def test_two_points(self, line):
        neighbors, _ = all_nearest_neighbors(line(0, 5))
        assert neighbors.tolist() == [1, 0]

    def test_duplicates(self):
        neighbors, distances = all_nearest_neighbors(np.array([[1.0], [1.0], [1.0], [9.0]]))
        assert neighbors.tolist()[:3] == [1, 0, 0]
        assert distances[:3].tolist() == [0.0, 0.0, 0.0]

    @pytest.mark.parametrize("threads", [1, 4])
    def test_matches_brute_force(self, generic_points, threads):
        points = generic_points(400, d=2)
        counter = AtomicCounter()
        with ParallelExecutor(threads) as executor:
            neighbors, distances = all_nearest_neighbors(points, 6, executor, counter)
        full = np.linalg.norm(points.points[:, None, :] - points.points[None, :, :], axis=2)
        np.fill_diagonal(full, np.inf)
        np.testing.assert_array_equal(neighbors, full.argmin(axis=1))
        np.testing.assert_allclose(distances, full.min(axis=1))
        assert 0 < counter.value < 400 * 400

    def test_needs_two_points(self, line):
        with pytest.raises(InvalidInputError):
            all_nearest_neighbors(line(1))


class TestFarthestPair:
    def test_line(self, line):
        assert farthest_pair_distance(build_tree(line(0, 1)), build_tree(line(5, 6))) == 6.0

    def test_singletons(self):
        a = build_tree(np.array([[0.0, 0.0]]))
        b = build_tree(np.array([[3.0, 4.0]]))
        assert farthest_pair_distance(a, b) == 5.0

    def test_same_set_is_diameter(self, generic_points):
        points = generic_points(150, d=3)
        tree = build_tree(points, leaf_capacity=4)
        full = np.linalg.norm(points.points[:, None, :] - points.points[None, :, :], axis=2)
        assert math.isclose(farthest_pair_distance(tree, tree), float(full.max()))

    def test_matches_brute_force(self, rng):
        xa = rng.normal(0, 1, size=(120, 2))
        xb = rng.normal(3, 1, size=(90, 2))
        full = np.linalg.norm(xa[:, None, :] - xb[None, :, :], axis=2)
        got = farthest_pair_distance(build_tree(xa, 4), build_tree(xb, 4))
        assert math.isclose(got, float(full.max()))

    @pytest.mark.parametrize("threads", [2, 4])
    def test_parallel_matches_sequential(self, rng, threads):
        tree_a = build_tree(rng.uniform(0, 10, size=(300, 2)), 4)
        tree_b = build_tree(rng.uniform(5, 15, size=(200, 2)), 4)
        counter = AtomicCounter()
        with ParallelExecutor(threads) as executor:
            got = farthest_pair_distance(tree_a, tree_b, counter, executor)
        assert got == farthest_pair_distance(tree_a, tree_b)
        assert 0 < counter.value <= 300 * 200

    def test_parallel_single_leaf_pair(self, line):
        with ParallelExecutor(4) as executor:
            assert farthest_pair_distance(build_tree(line(0, 1)), build_tree(line(5, 6)), executor=executor) == 6.0


class TestMarkUniformClusters:
    def test_one_cluster(self, line):
        tree = build_tree(line(0, 1, 2, 3), leaf_capacity=1)
        uf = UnionFind(4)
        for p in range(1, 4):
            uf.union(0, p)
        mark_uniform_clusters(tree, uf)
        assert tree.mark[0] == 0

    def test_all_singletons(self, line):
        tree = build_tree(line(0, 1, 2, 3), leaf_capacity=1)
        mark_uniform_clusters(tree, UnionFind(4))
        assert sorted(tree.mark[tree.leaves].tolist()) == [0, 1, 2, 3]
        assert np.all(tree.mark[tree.left >= 0] == NO_MARK)

    def test_two_clusters_split_at_root(self, line):
        tree = build_tree(line(0, 1, 10, 11), leaf_capacity=1)
        uf = UnionFind(4)
        uf.union(0, 1)
        uf.union(2, 3)
        mark_uniform_clusters(tree, uf)
        assert tree.mark[0] == NO_MARK
        assert sorted(tree.mark[[tree.left[0], tree.right[0]]].tolist()) == [0, 2]
        for node in range(tree.node_count):
            labels = set(uf.find(p) for p in tree.node_ids(node))
            expected = labels.pop() if len(labels) == 1 else NO_MARK
            assert tree.mark[node] == expected

    def test_random_partitions(self, rng):
        """Marks equal the brute-force common label, including partitions re-marked on the same tree."""
        for trial in range(100):
            n = int(rng.integers(2, 120))
            points = PointSet(rng.uniform(0, 10, size=(n, int(rng.integers(1, 4)))))
            tree = build_tree(points, leaf_capacity=int(rng.integers(1, 8)))
            uf = UnionFind(n)
            if trial % 2:
                groups = rng.integers(0, int(rng.integers(1, n + 1)), size=n)
            else:
                # Contiguous runs along the first axis, so whole subtrees share a cluster.
                order = np.argsort(points.points[:, 0])
                cuts = np.sort(rng.choice(np.arange(1, n), size=min(n - 1, int(rng.integers(0, 6))), replace=False))
                groups = np.empty(n, dtype=np.int64)
                for g, run in enumerate(np.split(order, cuts)):
                    groups[run] = g
            mark_uniform_clusters(tree, uf)
            for g in np.unique(groups).tolist():
                members = np.flatnonzero(groups == g).tolist()
                for p in members[1:]:
                    uf.union(members[0], p)
            uf.compress()
            mark_uniform_clusters(tree, uf)
            roots = uf.roots()
            np.testing.assert_array_equal(tree.labels, roots[tree.ids])
            for node in range(tree.node_count):
                labels = np.unique(roots[tree.node_ids(node)])
                expected = int(labels[0]) if len(labels) == 1 else NO_MARK
                assert tree.mark[node] == expected, (trial, node)
