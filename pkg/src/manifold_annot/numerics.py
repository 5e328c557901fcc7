"""Shared dense numerical kernels.

Pairwise squared distances, deterministic symmetric eigendecomposition,
and seeded random streams. Everything runs in float64 on dense matrices;
the problem sizes this package targets (a few thousand points) never
justify a sparse path.
"""

from dataclasses import dataclass

import numpy as np

# Rows processed per block in pairwise_sq_dists. The per-entry reduction
# runs over the feature axis only, so the block size never changes results.
_BLOCK_ROWS = 128


def as_data_matrix(values, name="data"):
    """Validate and return an n x D float64 matrix of row feature vectors.

    Row order is the canonical point identity; every derived matrix indexes
    points the same way. Rejects empty or non-finite input, naming the first
    offending row.
    """
    X = np.asarray(values, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(
            f"{name} must be a 2-D (points x features) matrix, got shape {X.shape}"
        )
    n, dim = X.shape
    if n < 1 or dim < 1:
        raise ValueError(
            f"{name} needs at least one row and one column, got shape {X.shape}"
        )
    bad = ~np.isfinite(X)
    if bad.any():
        row = int(np.nonzero(bad.any(axis=1))[0][0])
        raise ValueError(f"{name} has a non-finite entry in row {row}")
    return X


def pairwise_sq_dists(data):
    """Full matrix of squared Euclidean distances between rows of ``data``.

    Entry (i, j) is sum_c (x_ic - x_jc)^2, accumulated in a fixed order so
    the result is exactly symmetric with an exactly zero diagonal, and
    identical however the row blocks are scheduled.
    """
    X = as_data_matrix(data)
    n = X.shape[0]
    out = np.empty((n, n), dtype=np.float64)
    for start in range(0, n, _BLOCK_ROWS):
        stop = min(start + _BLOCK_ROWS, n)
        diff = X[start:stop, None, :] - X[None, :, :]
        np.einsum("ijc,ijc->ij", diff, diff, out=out[start:stop])
    return out


def cross_sq_dists(a, b):
    """Squared Euclidean distances between rows of ``a`` and rows of ``b``.

    Same accumulation scheme as :func:`pairwise_sq_dists`; both inputs must
    share the feature dimension.
    """
    A = as_data_matrix(a, name="a")
    B = as_data_matrix(b, name="b")
    if A.shape[1] != B.shape[1]:
        raise ValueError(
            f"feature dimensions differ: {A.shape[1]} vs {B.shape[1]}"
        )
    out = np.empty((A.shape[0], B.shape[0]), dtype=np.float64)
    for start in range(0, A.shape[0], _BLOCK_ROWS):
        stop = min(start + _BLOCK_ROWS, A.shape[0])
        diff = A[start:stop, None, :] - B[None, :, :]
        np.einsum("ijc,ijc->ij", diff, diff, out=out[start:stop])
    return out


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Eigenpairs of a symmetric matrix, largest eigenvalue first.

    Column j of ``eigenvectors`` pairs with ``eigenvalues[j]``. Columns are
    unit norm with the deterministic sign convention of
    :func:`top_eigenpairs`.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _fix_signs(vectors):
    # In each column the entry of largest magnitude is made non-negative;
    # ties go to the lowest row index (np.argmax picks the first maximum).
    cols = np.arange(vectors.shape[1])
    lead = np.argmax(np.abs(vectors), axis=0)
    signs = np.where(vectors[lead, cols] < 0.0, -1.0, 1.0)
    return vectors * signs


def top_eigenpairs(A, count):
    """The ``count`` algebraically largest eigenpairs of a symmetric matrix.

    Eigenvalues come back sorted descending; equal eigenvalues keep the
    solver's original ascending order (stable sort), so repeated runs are
    identical. Eigenvectors are unit columns with the largest-magnitude
    entry non-negative.

    Raises ValueError for non-square, non-finite, or asymmetric input
    (tolerance 1e-10 relative to the largest entry), or for count outside
    [1, n].
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got shape {A.shape}")
    if not np.isfinite(A).all():
        raise ValueError("matrix has non-finite entries")
    n = A.shape[0]
    scale = max(1.0, float(np.abs(A).max()))
    skew = float(np.abs(A - A.T).max())
    if skew > 1e-10 * scale:
        raise ValueError(
            f"matrix is not symmetric: max |A - A^T| = {skew:.3e} "
            f"exceeds 1e-10 relative tolerance"
        )
    if not 1 <= count <= n:
        raise ValueError(f"count must be in [1, {n}], got {count}")

    # Dense LAPACK path (tridiagonalization + implicit QR); ascending output.
    eigvals, eigvecs = np.linalg.eigh(A)
    order = np.argsort(-eigvals, kind="stable")[:count]
    return SpectralDecomposition(
        eigenvalues=eigvals[order],
        eigenvectors=_fix_signs(eigvecs[:, order]),
    )


def seeded_rng(seed):
    """Deterministic random generator for a 64-bit seed.

    Backed by PCG64, whose streams are identical across platforms and
    independent of thread counts; the same seed always reproduces the same
    uniform/normal sequence.
    """
    return np.random.Generator(np.random.PCG64(int(seed)))
