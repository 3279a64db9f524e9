"""
Synthetic point sets for experiments and tests.
UniformFill draws points uniformly in a hypergrid of side sqrt(n).
GaussianDisc places 90% of the points in five Gaussian blobs whose means lie
in a hypergrid of side 5 sqrt(n). Each blob has diameter about sqrt(n), taken
as six standard deviations, so roughly 99% of its mass lies inside. The
remaining points are uniform over the same grid.
"""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from core.errors import InvalidInputError
from core.spatial import PointSet

GAUSSIAN_BLOBS = 5
GAUSSIAN_MIN_POINTS = 10

# Label of GaussianDisc background points
BACKGROUND = -1


@dataclass
class GaussianDiscSample:
    points: PointSet
    labels: np.ndarray
    centers: np.ndarray


def _check_shape(n: int, d: int) -> None:
    if n < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    if d < 1:
        raise InvalidInputError(f"d must be >= 1, got {d}")


def gen_uniform(n: int, d: int, seed: Optional[int] = None) -> PointSet:
    """n points i.i.d. uniform in ``[0, sqrt(n)]^d``; deterministic per seed."""
    _check_shape(n, d)
    rng = np.random.default_rng(seed)
    return PointSet(rng.uniform(0.0, math.sqrt(n), size=(n, d)))


def sample_gaussian_disc(n: int, d: int, seed: Optional[int] = None) -> GaussianDiscSample:
    """GaussianDisc points together with blob labels and blob centers.

    Raises:
        InvalidInputError: If ``n < 10``
    """
    _check_shape(n, d)
    if n < GAUSSIAN_MIN_POINTS:
        raise InvalidInputError(f"GaussianDisc needs n >= {GAUSSIAN_MIN_POINTS}, got {n}")
    rng = np.random.default_rng(seed)
    side = 5.0 * math.sqrt(n)
    sigma = math.sqrt(n) / 6.0

    clustered = n * 9 // 10
    counts = np.full(GAUSSIAN_BLOBS, clustered // GAUSSIAN_BLOBS)
    counts[: clustered % GAUSSIAN_BLOBS] += 1

    centers = rng.uniform(0.0, side, size=(GAUSSIAN_BLOBS, d))
    labels = np.concatenate([np.full(c, b) for b, c in enumerate(counts)] + [np.full(n - clustered, BACKGROUND)])
    coords = np.empty((n, d))
    blob_mask = labels >= 0
    coords[blob_mask] = centers[labels[blob_mask]] + rng.normal(0.0, sigma, size=(clustered, d))
    coords[~blob_mask] = rng.uniform(0.0, side, size=(n - clustered, d))
    return GaussianDiscSample(PointSet(coords), labels.astype(np.int64), centers)


def gen_gaussian_disc(n: int, d: int, seed: Optional[int] = None) -> PointSet:
    """GaussianDisc points only; see :func:`sample_gaussian_disc`."""
    return sample_gaussian_disc(n, d, seed).points


GENERATORS = {
    "uniform": gen_uniform,
    "gaussian": gen_gaussian_disc,
}


def generate(kind: str, n: int, d: int, seed: Optional[int] = None) -> PointSet:
    """Dispatch on a generator name (``uniform`` or ``gaussian``)."""
    try:
        generator = GENERATORS[kind]
    except KeyError:
        raise InvalidInputError(f"unknown dataset kind '{kind}' (expected uniform or gaussian)") from None
    return generator(n, d, seed)
