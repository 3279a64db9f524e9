import math

import numpy as np
import pytest

from core import kernels
from core.kernels import NO_EXCLUSION, NO_MARK
from core.spatial import build_tree, mark_uniform_clusters
from core.union_find import UnionFind


def box_arrays(tree):
    return tree.start, tree.end, tree.left, tree.right, tree.lower, tree.upper


class TestBallPositions:
    def test_matches_brute_force(self, generic_points, rng):
        points = generic_points(400, d=3)
        tree = build_tree(points, leaf_capacity=5)
        for _ in range(50):
            center = rng.uniform(0, 10, size=3)
            r = float(rng.uniform(0, 4))
            positions = kernels.ball_positions(tree.coords, *box_arrays(tree), tree.max_depth, center, r * r)
            assert np.all(np.diff(positions) > 0)
            expected = np.flatnonzero(np.sum((points.points - center) ** 2, axis=1) <= r * r)
            np.testing.assert_array_equal(np.sort(tree.ids[positions]), expected)

    def test_empty_ball(self, line):
        tree = build_tree(line(0, 1, 2))
        positions = kernels.ball_positions(tree.coords, *box_arrays(tree), tree.max_depth, np.array([10.0]), 1.0)
        assert len(positions) == 0


class TestNearestPosition:
    def test_counts_every_scanned_point(self, line):
        tree = build_tree(line(0, 1, 2, 3), leaf_capacity=4)
        pos, d2, evaluated = kernels.nearest_position(
            tree.coords, tree.ids, tree.labels, *box_arrays(tree), tree.mark, tree.max_depth,
            np.array([2.2]), NO_EXCLUSION, NO_EXCLUSION)
        assert tree.ids[pos] == 2
        assert d2 == pytest.approx(0.04)
        assert evaluated == 4

    def test_nothing_left(self, line):
        tree = build_tree(line(5))
        pos, d2, _ = kernels.nearest_position(
            tree.coords, tree.ids, tree.labels, *box_arrays(tree), tree.mark, tree.max_depth,
            np.array([0.0]), 0, NO_EXCLUSION)
        assert pos == -1
        assert math.isinf(d2)


class TestCompleteLinkageCounts:
    def test_totals_match_brute_force(self, generic_points, rng):
        n = 300
        points = generic_points(n)
        tree = build_tree(points, leaf_capacity=4)
        uf = UnionFind(n)
        order = np.argsort(points.points[:, 0])
        for run in np.array_split(order, 40):
            for p in run[1:].tolist():
                uf.union(int(run[0]), p)
        uf.compress()
        mark_uniform_clusters(tree, uf)
        roots = uf.roots()
        for _ in range(30):
            own = int(roots[int(rng.integers(0, n))])
            center = rng.uniform(0, 10, size=2)
            r = float(rng.uniform(0.5, 5))
            labels, counts, evaluated = kernels.complete_linkage_counts(
                tree.coords, tree.labels, *box_arrays(tree), tree.mark, tree.max_depth, center, r * r, own)
            assert own not in labels.tolist()
            assert evaluated <= n
            got = {}
            for label, count in zip(labels.tolist(), counts.tolist()):
                got[label] = got.get(label, 0) + count
            inside = np.sum((points.points - center) ** 2, axis=1) <= r * r
            expected = {}
            for p in np.flatnonzero(inside & (roots != own)).tolist():
                expected[int(roots[p])] = expected.get(int(roots[p]), 0) + 1
            assert got == expected

    def test_whole_marked_subtree_costs_nothing(self, line):
        tree = build_tree(line(0, 1, 2, 3), leaf_capacity=1)
        uf = UnionFind(4)
        for p in range(1, 4):
            uf.union(0, p)
        mark_uniform_clusters(tree, uf)
        labels, counts, evaluated = kernels.complete_linkage_counts(
            tree.coords, tree.labels, *box_arrays(tree), tree.mark, tree.max_depth, np.array([1.5]), 9.0, -5)
        assert (labels.tolist(), counts.tolist(), evaluated) == ([0], [4], 0)
        assert tree.mark[0] != NO_MARK


class TestPairReductions:
    def test_distance_sum(self, rng):
        xa, xb = rng.normal(size=(7, 3)), rng.normal(size=(5, 3))
        expected = np.linalg.norm(xa[:, None, :] - xb[None, :, :], axis=2).sum()
        assert kernels.pair_distance_sum(xa, xb) == pytest.approx(expected, rel=1e-12)

    def test_max_dist_sq(self, rng):
        xa, xb = rng.normal(size=(6, 2)), rng.normal(size=(9, 2))
        expected = (np.linalg.norm(xa[:, None, :] - xb[None, :, :], axis=2) ** 2).max()
        assert kernels.pair_max_dist_sq(xa, xb) == pytest.approx(expected, rel=1e-12)


class TestStatisticsSearch:
    @staticmethod
    def exhaustive(ward, i, alive, sizes, centroids, variances):
        others = np.flatnonzero(alive)
        others = others[others != i]
        d2 = np.sum((centroids[others] - centroids[i]) ** 2, axis=1)
        if ward:
            dist = np.sqrt(2.0 * sizes[i] * sizes[others] / (sizes[i] + sizes[others]) * d2)
        else:
            dist = d2 + variances[i] / sizes[i] + variances[others] / sizes[others]
        best = int(np.lexsort((others, dist))[0])
        return int(others[best]), float(dist[best])

    @pytest.mark.parametrize("ward", [True, False])
    def test_matches_exhaustive_scan(self, ward, rng):
        n = 250
        centroids = rng.uniform(0, 10, size=(n, 2))
        sizes = rng.integers(1, 6, size=n).astype(np.int64)
        variances = rng.uniform(0, 2, size=n) * (sizes > 1)
        alive = rng.uniform(size=n) < 0.8
        active = np.flatnonzero(alive)
        tree = build_tree(centroids[active], leaf_capacity=4, ids=active)
        pred_id = np.full(n, -1, dtype=np.int64)
        pred_dist = np.full(n, np.inf)
        # Some terminals keep a predecessor link; links to dead clusters carry a bogus bound.
        for i in active[::3].tolist():
            j = int(rng.integers(0, n))
            if j != i:
                pred_id[i] = j
                pred_dist[i] = kernels.stat_distance(ward, i, j, sizes, centroids, variances) if alive[j] else 0.0
        terminals = active[::2]
        out_id, out_dist, evals, work = kernels.statistics_search(
            terminals, pred_id, pred_dist, alive, sizes, centroids, variances,
            tree.coords, tree.ids, *box_arrays(tree), tree.mark, tree.max_depth,
            ward, int(sizes[alive].min()), 1.0 + 1e-9)
        for t, i in enumerate(terminals.tolist()):
            expected_id, expected_dist = self.exhaustive(ward, i, alive, sizes, centroids, variances)
            assert out_id[t] == expected_id
            assert math.isclose(out_dist[t], expected_dist, rel_tol=1e-12)
        assert np.all(evals >= 1)
        assert np.all(work >= evals)
        assert evals.sum() < len(terminals) * (len(active) - 1)
