"""Diffusion-map embedding of a Gaussian-kernel random walk.

Pipeline: Gaussian kernel matrix W -> row-stochastic transition matrix P
-> spectral decomposition of P through its symmetric conjugate ->
low-dimensional coordinates scaled by eigenvalue powers, so that Euclidean
distances in the full embedding equal the random walk's time-t diffusion
distances.
"""

from dataclasses import dataclass, field

import numpy as np

from .numerics import as_data_matrix, cross_sq_dists, pairwise_sq_dists, top_eigenpairs


@dataclass(frozen=True)
class DmConfig:
    """Kernel width, walk length, and target dimension for an embedding."""

    sigma: float
    d: int
    t: int = 1

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.t < 1:
            raise ValueError(f"t must be a positive integer, got {self.t}")
        if self.d < 1:
            raise ValueError(f"d must be at least 1, got {self.d}")


@dataclass(frozen=True, eq=False)
class MarkovOperator:
    """Gaussian kernel graph and its one-step random walk.

    ``W`` is the symmetric kernel matrix with unit diagonal, ``P`` its
    row-normalized Markov matrix, ``degrees`` the kernel row sums (node
    degrees, not P row sums, which are identically 1).
    """

    W: np.ndarray
    P: np.ndarray
    degrees: np.ndarray
    sigma: float
    t: int = 1

    @property
    def n(self):
        return self.W.shape[0]


@dataclass(frozen=True, eq=False)
class Embedding:
    """Reduced coordinates plus the spectrum that produced them.

    Row i of ``coords`` is the image of input row i. ``eigenvalues`` holds
    the retained spectrum (for diffusion maps: the values below the trivial
    unit eigenvalue, descending). ``config`` echoes every parameter needed
    to reproduce or extend the embedding.
    """

    coords: np.ndarray
    eigenvalues: np.ndarray
    method: str
    config: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.coords.shape[0]

    @property
    def d(self):
        return self.coords.shape[1]


def build_kernel(data, sigma, t=1):
    """Gaussian kernel graph W[i,j] = exp(-|x_i - x_j|^2 / (2 sigma^2)).

    Returns the kernel together with its row-normalized Markov matrix and
    degree vector. Duplicate points are fine (their kernel entry is 1);
    sigma must be positive and at least two points are required.
    """
    X = as_data_matrix(data)
    if X.shape[0] < 2:
        raise ValueError("kernel needs at least 2 points")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if t < 1:
        raise ValueError(f"t must be a positive integer, got {t}")
    sq = pairwise_sq_dists(X)
    W = np.exp(sq / (-2.0 * sigma * sigma))
    degrees = W.sum(axis=1)
    P = W / degrees[:, None]
    return MarkovOperator(W=W, P=P, degrees=degrees, sigma=float(sigma), t=int(t))


def transition_power(op, t):
    """t-step transition matrix P^t (t = 1 returns P itself)."""
    if t < 1:
        raise ValueError(f"t must be a positive integer, got {t}")
    if t == 1:
        return op.P
    return np.linalg.matrix_power(op.P, int(t))


def stationary_weights(op):
    """Density weights phi0: node degree over total degree, one per point."""
    return op.degrees / op.degrees.sum()


def diffusion_distance(op, t, i, j):
    """Time-t diffusion distance between points i and j.

    The density-weighted L2 distance between rows i and j of P^t: pairs
    with high forward transition overlap come out close. Computed on
    demand; no n x n distance matrix is ever materialized.
    """
    n = op.n
    if not (0 <= i < n and 0 <= j < n):
        raise ValueError(f"indices must be in [0, {n}), got ({i}, {j})")
    Pt = transition_power(op, t)
    phi0 = stationary_weights(op)
    delta = Pt[i] - Pt[j]
    return float(np.sqrt(np.sum(delta * delta / phi0)))


def conjugate_spectrum(op, count):
    """Eigenpairs of P via its symmetric conjugate S = D^1/2 P D^-1/2.

    Returns (eigenvalues, psi) where psi columns are right eigenvectors of
    P normalized against the degree measure (sum_k phi0_k psi_k^2 = 1), the
    scaling under which embedding distances reproduce diffusion distances.
    The first column is the trivial constant eigenvector of eigenvalue 1;
    with count = n the remaining columns realize the time-t diffusion
    distances exactly as Euclidean distances of lambda^t-scaled rows.
    """
    inv_sqrt = 1.0 / np.sqrt(op.degrees)
    S = op.W * inv_sqrt[:, None] * inv_sqrt[None, :]
    S = 0.5 * (S + S.T)
    dec = top_eigenpairs(S, count)
    total = np.sqrt(op.degrees.sum())
    psi = dec.eigenvectors * (total * inv_sqrt)[:, None]
    # The sign convention on the conjugate leaves the trivial eigenvector
    # positive, hence constant +1 rather than -1.
    return dec.eigenvalues, psi


def embed(data, config):
    """Diffusion-map coordinates for every row of ``data``.

    Solves the random-walk eigenproblem, drops the trivial unit eigenvalue
    (its eigenvector is constant and carries no geometry), and returns
    coordinates lambda_j^t * psi_j for the next ``d`` eigenpairs. With all
    n - 1 nontrivial pairs retained, Euclidean distances between rows equal
    the time-t diffusion distances.
    """
    X = as_data_matrix(data)
    n = X.shape[0]
    if config.d >= n - 1:
        raise ValueError(
            f"d must be at most n - 2 (need d + 2 = {config.d + 2} points, have {n})"
        )
    op = build_kernel(X, config.sigma, t=config.t)
    eigvals, psi = conjugate_spectrum(op, config.d + 1)
    retained = eigvals[1:]
    coords = psi[:, 1:] * (retained**config.t)[None, :]
    return Embedding(
        coords=coords,
        eigenvalues=retained,
        method="DM",
        config={"method": "DM", "sigma": config.sigma, "t": config.t, "d": config.d},
    )


def nystrom_extend(train_embedding, train_data, new_points):
    """Out-of-sample coordinates for points unseen by ``embed``.

    Kernel interpolation: each new point's row-normalized kernel weights
    against the training points average the training coordinates, divided
    by the corresponding eigenvalue. Extending with an exact training point
    reproduces that point's coordinates.
    """
    if "sigma" not in train_embedding.config:
        raise ValueError("train embedding lacks a kernel width; not a diffusion map")
    Xtr = as_data_matrix(train_data, name="train_data")
    Xnew = as_data_matrix(new_points, name="new_points")
    if Xtr.shape[1] != Xnew.shape[1]:
        raise ValueError(
            f"ambient dimensions differ: train {Xtr.shape[1]}, new {Xnew.shape[1]}"
        )
    if Xtr.shape[0] != train_embedding.n:
        raise ValueError(
            f"train data has {Xtr.shape[0]} rows but embedding has {train_embedding.n}"
        )
    sigma = float(train_embedding.config["sigma"])
    sq = cross_sq_dists(Xnew, Xtr)
    K = np.exp(sq / (-2.0 * sigma * sigma))
    rowsum = K.sum(axis=1)
    if (rowsum <= 0.0).any():
        row = int(np.nonzero(rowsum <= 0.0)[0][0])
        raise ValueError(f"new point {row} has zero kernel mass against training set")
    P_new = K / rowsum[:, None]
    coords = (P_new @ train_embedding.coords) / train_embedding.eigenvalues[None, :]
    return Embedding(
        coords=coords,
        eigenvalues=train_embedding.eigenvalues.copy(),
        method=train_embedding.method,
        config={**train_embedding.config, "extension": "nystrom"},
    )
