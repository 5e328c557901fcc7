"""Comparison reducers: PCA, locally linear embedding, Laplacian eigenmaps.

All three share the Embedding return type of the diffusion-map module and
route every eigenproblem through ``numerics.top_eigenpairs``; bottom
eigenvectors are obtained by shifting the spectrum (c*I - A).
"""

from dataclasses import dataclass

import numpy as np

from .diffusion_maps import Embedding
from .numerics import as_data_matrix, pairwise_sq_dists, top_eigenpairs

DEFAULT_K_NN = 12
DEFAULT_LLE_REG = 1e-3


@dataclass(frozen=True)
class BaselineConfig:
    """Parameters for the neighbourhood-graph reducers.

    ``lem_sigma`` defaults to the mean k-NN edge distance of the dataset
    when left as None; ``lle_reg`` scales the trace of each local Gram
    matrix before inverting it.
    """

    method: str
    d: int
    k_nn: int = DEFAULT_K_NN
    lle_reg: float = DEFAULT_LLE_REG
    lem_sigma: float | None = None

    def __post_init__(self):
        if self.method not in ("pca", "lle", "lem"):
            raise ValueError(f"unknown baseline method {self.method!r}")
        if self.d < 1:
            raise ValueError(f"d must be at least 1, got {self.d}")
        if self.k_nn < 1:
            raise ValueError(f"k_nn must be at least 1, got {self.k_nn}")
        if self.lle_reg < 0:
            raise ValueError(f"lle_reg must be non-negative, got {self.lle_reg}")
        if self.lem_sigma is not None and not self.lem_sigma > 0:
            raise ValueError(f"lem_sigma must be positive, got {self.lem_sigma}")


def pca_fit(data, d):
    """Mean, orthonormal principal directions, and component variances.

    Directions are the top-d eigenvectors of the covariance of the
    mean-centered data (divisor n - 1).
    """
    X = as_data_matrix(data)
    n, dim = X.shape
    if n < 2:
        raise ValueError("PCA needs at least 2 points")
    if not 1 <= d <= min(n - 1, dim):
        raise ValueError(
            f"d must be in [1, min(n - 1, D)] = [1, {min(n - 1, dim)}], got {d}"
        )
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = (Xc.T @ Xc) / (n - 1)
    dec = top_eigenpairs(0.5 * (cov + cov.T), d)
    return mean, dec.eigenvectors, dec.eigenvalues


def embed_pca(data, d):
    """Project mean-centered data onto its top-d principal directions."""
    X = as_data_matrix(data)
    mean, components, variances = pca_fit(X, d)
    return Embedding(
        coords=(X - mean) @ components,
        eigenvalues=variances,
        method="PCA",
        config={"method": "PCA", "d": d},
    )


def knn_indices(data, k_nn):
    """Indices of each row's k nearest Euclidean neighbours (self excluded).

    Distance ties resolve to the lower row index, so the result is
    deterministic and permutation-equivariant on generic data.
    """
    X = as_data_matrix(data)
    n = X.shape[0]
    if not 1 <= k_nn < n:
        raise ValueError(f"k_nn must be in [1, n - 1] = [1, {n - 1}], got {k_nn}")
    sq = pairwise_sq_dists(X)
    np.fill_diagonal(sq, np.inf)
    return np.argsort(sq, axis=1, kind="stable")[:, :k_nn]


def _lle_weights(X, neighbors, reg):
    """Per-point affine reconstruction weights over the given neighbours."""
    n, k = neighbors.shape
    W = np.zeros((n, n), dtype=np.float64)
    ones = np.ones(k)
    for i in range(n):
        Z = X[neighbors[i]] - X[i]
        G = Z @ Z.T
        trace = np.trace(G)
        G = G + (reg * trace if trace > 0 else reg) * np.eye(k)
        w = np.linalg.solve(G, ones)
        W[i, neighbors[i]] = w / w.sum()
    return W


def embed_lle(data, config):
    """Locally linear embedding.

    Reconstruction weights are solved per point over its k_nn neighbours
    with rows summing to 1; coordinates are the bottom d + 1 eigenvectors
    of (I - W)^T (I - W) with the constant one dropped.
    """
    X = as_data_matrix(data)
    n = X.shape[0]
    if config.k_nn >= n:
        raise ValueError(f"k_nn must be below n = {n}, got {config.k_nn}")
    if config.k_nn < config.d + 1:
        raise ValueError(
            f"LLE needs k_nn >= d + 1, got k_nn = {config.k_nn}, d = {config.d}"
        )
    neighbors = knn_indices(X, config.k_nn)
    W = _lle_weights(X, neighbors, config.lle_reg)
    E = np.eye(n) - W
    M = E.T @ E
    M = 0.5 * (M + M.T)
    # Gershgorin upper bound on M's spectrum; shifting flips smallest to top.
    shift = float(np.abs(M).sum(axis=1).max())
    dec = top_eigenpairs(shift * np.eye(n) - M, config.d + 1)
    bottom_vals = shift - dec.eigenvalues  # ascending, starting at ~0
    return Embedding(
        coords=dec.eigenvectors[:, 1:],
        eigenvalues=bottom_vals[1:],
        method="LLE",
        config={
            "method": "LLE",
            "d": config.d,
            "k_nn": config.k_nn,
            "lle_reg": config.lle_reg,
        },
    )


def knn_graph(data, k_nn, sigma=None):
    """Symmetric heat-kernel weight matrix on the union k-NN graph.

    An edge exists when either endpoint selects the other; edge weight is
    exp(-dist^2 / (2 sigma^2)) with sigma defaulting to the mean k-NN edge
    distance. Returns (weights, sigma).
    """
    X = as_data_matrix(data)
    n = X.shape[0]
    neighbors = knn_indices(X, k_nn)
    sq = pairwise_sq_dists(X)
    adjacency = np.zeros((n, n), dtype=bool)
    rows = np.repeat(np.arange(n), k_nn)
    adjacency[rows, neighbors.ravel()] = True
    adjacency |= adjacency.T
    if sigma is None:
        sigma = float(np.sqrt(sq[np.arange(n)[:, None], neighbors]).mean())
    weights = np.where(adjacency, np.exp(sq / (-2.0 * sigma * sigma)), 0.0)
    return weights, sigma


def count_components(adjacency):
    """Number of connected components of a boolean adjacency matrix."""
    n = adjacency.shape[0]
    seen = np.zeros(n, dtype=bool)
    components = 0
    for start in range(n):
        if seen[start]:
            continue
        components += 1
        stack = [start]
        seen[start] = True
        while stack:
            node = stack.pop()
            for nbr in np.nonzero(adjacency[node])[0]:
                if not seen[nbr]:
                    seen[nbr] = True
                    stack.append(nbr)
    return components


def embed_lem(data, config):
    """Laplacian eigenmaps on a symmetrized k-NN heat-kernel graph.

    Solves the generalized problem L v = lambda * Diag(degree) v and keeps
    the d eigenvectors of smallest nonzero eigenvalue; the zero eigenvalue's
    constant eigenvector is dropped. A disconnected graph is rejected with
    its component count.
    """
    X = as_data_matrix(data)
    n = X.shape[0]
    if config.k_nn >= n:
        raise ValueError(f"k_nn must be below n = {n}, got {config.k_nn}")
    if config.d >= n - 1:
        raise ValueError(f"d must be at most n - 2 = {n - 2}, got {config.d}")
    weights, sigma = knn_graph(X, config.k_nn, config.lem_sigma)
    components = count_components(weights > 0)
    if components > 1:
        raise ValueError(
            f"k-NN graph is disconnected ({components} components); "
            f"increase k_nn"
        )
    degree = weights.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(degree)
    # Normalized Laplacian shares eigenvalues with the generalized problem;
    # v = D^-1/2 u recovers the generalized eigenvectors.
    L_sym = np.eye(n) - weights * inv_sqrt[:, None] * inv_sqrt[None, :]
    L_sym = 0.5 * (L_sym + L_sym.T)
    dec = top_eigenpairs(2.0 * np.eye(n) - L_sym, config.d + 1)
    gen_vals = 2.0 - dec.eigenvalues  # ascending, gen_vals[0] ~ 0
    coords = dec.eigenvectors[:, 1:] * inv_sqrt[:, None]
    return Embedding(
        coords=coords,
        eigenvalues=gen_vals[1:],
        method="LEM",
        config={
            "method": "LEM",
            "d": config.d,
            "k_nn": config.k_nn,
            "lem_sigma": sigma,
        },
    )
