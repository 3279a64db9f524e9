import math

import numpy as np
import pytest

from core.dendrogram import Dendrogram
from core.errors import InvalidInputError
from core.oracle import compare_cophenetic, cophenetic, naive_hac


class TestNaiveHac:
    def test_line_complete(self, line):
        dendrogram = naive_hac(line(0, 1, 4, 6), "comp")
        assert sorted(dendrogram.heights().tolist()) == [1.0, 2.0, 6.0]

    def test_line_ward(self, line):
        heights = sorted(naive_hac(line(0, 1, 4, 6), "ward").heights().tolist())
        np.testing.assert_allclose(heights, [1.0, 2.0, math.sqrt(40.5)])

    def test_two_points(self):
        dendrogram = naive_hac(np.array([[0.0, 0.0], [3.0, 4.0]]), "avg2")
        assert dendrogram.linkage_matrix().tolist() == [[0, 1, 25.0, 2]]

    def test_single_point(self, line):
        assert len(naive_hac(line(3.0), "avg1")) == 0

    def test_ties_take_smallest_pair(self, line):
        dendrogram = naive_hac(line(0, 1, 2), "comp")
        first = dendrogram.merges[0]
        assert (first.left, first.right) == (0, 1)

    @pytest.mark.parametrize("kind", ["comp", "ward", "avg1", "avg2"])
    def test_monotone_heights(self, kind, generic_points):
        naive_hac(generic_points(40, d=3), kind).validate(monotone=True)


class TestCophenetic:
    def test_line_complete(self, line):
        matrix = cophenetic(naive_hac(line(0, 1, 4, 6), "comp"))
        assert matrix[0, 1] == 1.0
        assert matrix[2, 3] == 2.0
        assert {matrix[p, q] for p in (0, 1) for q in (2, 3)} == {6.0}
        np.testing.assert_array_equal(matrix, matrix.T)

    def test_two_points(self):
        dendrogram = Dendrogram.from_linkage_matrix([[0, 1, 7.5, 2]])
        np.testing.assert_array_equal(cophenetic(dendrogram), [[0.0, 7.5], [7.5, 0.0]])

    def test_permutation_invariance(self, generic_points, rng):
        points = generic_points(25)
        perm = rng.permutation(25)
        base = cophenetic(naive_hac(points, "avg1"))
        permuted = cophenetic(naive_hac(points.points[perm], "avg1"))
        np.testing.assert_allclose(permuted, base[np.ix_(perm, perm)], rtol=1e-12)


class TestCompare:
    def test_identical(self, line):
        dendrogram = naive_hac(line(0, 1, 4, 6), "comp")
        assert compare_cophenetic(dendrogram, dendrogram) == (0.0, None)

    def test_first_differing_pair(self):
        a = Dendrogram.from_linkage_matrix([[0, 1, 1.0, 2], [2, 3, 5.0, 3]])
        b = Dendrogram.from_linkage_matrix([[0, 1, 1.0, 2], [2, 3, 5.5, 3]])
        deviation, first = compare_cophenetic(a, b)
        assert first == (0, 2)
        assert math.isclose(deviation, 0.5 / 5.5)

    def test_within_tolerance(self):
        a = Dendrogram.from_linkage_matrix([[0, 1, 1.0, 2]])
        b = Dendrogram.from_linkage_matrix([[0, 1, 1.0 + 1e-12, 2]])
        assert compare_cophenetic(a, b)[1] is None

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            compare_cophenetic(Dendrogram(2), Dendrogram(3))
