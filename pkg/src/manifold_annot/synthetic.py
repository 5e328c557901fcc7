"""Benchmark manifolds with known intrinsic coordinates.

A rolled-up plane and a non-uniformly sampled punctured sphere, plus a
neighbourhood-preservation score that turns "the embedding looks right"
into a number in [0, 1].
"""

from dataclasses import dataclass

import numpy as np

from .diffusion_maps import Embedding
from .numerics import as_data_matrix, pairwise_sq_dists, seeded_rng

# Parameter rectangle of the rolled plane: spiral arc s and height h.
SWISS_ROLL_S_RANGE = (1.5 * np.pi, 4.5 * np.pi)
SWISS_ROLL_H_RANGE = (0.0, 21.0)

# Sphere sampling: polar angle theta runs from the rim (pi/4, so the top
# quarter of the polar range is punctured away) down to the south pole at
# pi. Density is sin(theta) * (pi - theta) / (pi - pi/4): surface-uniform
# in theta times a linear ramp that is 1 at the rim and 0 at the pole.
SPHERE_THETA_MIN = np.pi / 4.0


@dataclass(frozen=True, eq=False)
class SyntheticSample:
    """3-D point cloud plus the 2-D manifold coordinates that generated it."""

    points: np.ndarray
    intrinsic: np.ndarray
    name: str
    seed: int

    @property
    def n(self):
        return self.points.shape[0]


def swiss_roll(n, seed):
    """Randomly sampled plane rolled into a spiral.

    Draws (s, h) uniformly from the standard parameter rectangle and maps
    each pair to (s cos s, h, s sin s); intrinsic coordinates are (s, h).
    """
    if n < 10:
        raise ValueError(f"n must be at least 10, got {n}")
    rng = seeded_rng(seed)
    s = rng.uniform(*SWISS_ROLL_S_RANGE, size=n)
    h = rng.uniform(*SWISS_ROLL_H_RANGE, size=n)
    points = np.column_stack([s * np.cos(s), h, s * np.sin(s)])
    intrinsic = np.column_stack([s, h])
    return SyntheticSample(points=points, intrinsic=intrinsic, name="swiss_roll", seed=int(seed))


def _sample_polar(rng, n):
    # Rejection sampling of theta ~ sin(theta) * ramp(theta) on
    # [SPHERE_THETA_MIN, pi]; the density is bounded by 1, so uniform
    # proposals with acceptance probability f(theta) suffice. Draw order is
    # fixed, so a given seed always yields the same sample.
    lo = SPHERE_THETA_MIN
    span = np.pi - lo
    out = np.empty(0)
    while out.size < n:
        proposal = rng.uniform(lo, np.pi, size=2 * n)
        accept = rng.uniform(0.0, 1.0, size=2 * n)
        density = np.sin(proposal) * (np.pi - proposal) / span
        out = np.concatenate([out, proposal[accept < density]])
    return out[:n]


def punctured_sphere(n, height_scale, seed):
    """Bottom three quarters of a sphere, sampled densest along the rim.

    Points satisfy x^2 + y^2 + (z / height_scale)^2 = 1; the polar density
    falls off linearly from the rim to the south pole (see module
    constants). Intrinsic coordinates are (azimuth, polar angle).
    """
    if n < 10:
        raise ValueError(f"n must be at least 10, got {n}")
    if not height_scale > 0:
        raise ValueError(f"height_scale must be positive, got {height_scale}")
    rng = seeded_rng(seed)
    theta = _sample_polar(rng, n)
    phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
    points = np.column_stack(
        [
            np.sin(theta) * np.cos(phi),
            np.sin(theta) * np.sin(phi),
            height_scale * np.cos(theta),
        ]
    )
    intrinsic = np.column_stack([phi, theta])
    return SyntheticSample(
        points=points, intrinsic=intrinsic, name="punctured_sphere", seed=int(seed)
    )


def _knn_sets(coords, k):
    sq = pairwise_sq_dists(coords)
    np.fill_diagonal(sq, np.inf)
    return np.argsort(sq, axis=1, kind="stable")[:, :k]


def embedding_quality(embedding, intrinsic, k_eval):
    """Neighbourhood preservation of an embedding against ground truth.

    The mean fraction, over points, of each point's k_eval nearest
    neighbours in embedding space that are also among its k_eval nearest
    neighbours in intrinsic space. 1.0 for any rank-preserving transform of
    the intrinsic coordinates; about k_eval / (n - 1) for an unrelated
    embedding.
    """
    coords = embedding.coords if isinstance(embedding, Embedding) else embedding
    coords = as_data_matrix(coords, name="embedding")
    truth = as_data_matrix(intrinsic, name="intrinsic")
    n = coords.shape[0]
    if truth.shape[0] != n:
        raise ValueError(f"row counts differ: embedding {n}, intrinsic {truth.shape[0]}")
    if not 1 <= k_eval < n:
        raise ValueError(f"k_eval must be in [1, n - 1] = [1, {n - 1}], got {k_eval}")
    got = _knn_sets(coords, k_eval)
    want = _knn_sets(truth, k_eval)
    shared = 0
    for i in range(n):
        shared += len(np.intersect1d(got[i], want[i], assume_unique=True))
    return shared / (n * k_eval)
