"""Chebyshev polynomial operators for the comparison baseline.

Builds T_m of the rescaled random-walk Laplacian as dense matrices so the
baseline can share the operator-convolution layer machinery. Test fixture for
the resolution ordering experiment, not a supported product surface.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import eigsh

from .errors import DataError, NumericalError

_DENSE_LIMIT = 320


def spectral_max(laplacian, areas) -> float:
    """Largest generalized eigenvalue of (L, diag(areas)).

    The Chebyshev rescaling needs the top of the full spectrum; a truncated
    basis only knows lambda_k, and values above it push the recursion outside
    [-1, 1] where T_m grows exponentially.
    """
    areas = np.asarray(areas, dtype=np.float64)
    inv_sqrt = 1.0 / np.sqrt(areas)
    sym = sparse.csr_matrix(laplacian).multiply(inv_sqrt[:, None]).multiply(
        inv_sqrt[None, :])
    n = areas.shape[0]
    if n <= _DENSE_LIMIT:
        top = float(np.linalg.eigvalsh(sym.toarray())[-1])
    else:
        try:
            top = float(eigsh(sym.tocsc(), k=1, which="LA",
                              return_eigenvectors=False)[0])
        except Exception as exc:
            raise NumericalError(f"spectral max estimation failed: {exc}")
    if not np.isfinite(top) or top <= 0:
        raise NumericalError("spectral max came out non-positive")
    return top


def chebyshev_operators(laplacian, areas, lambda_max: float, order: int) -> dict:
    """Dense {m: T_m(rescaled A^-1 L)} for m = 0..order-1.

    The operator is rescaled to 2*(A^-1 L)/lambda_max - I so its spectrum
    lies in [-1, 1] where the recursion is stable.
    """
    if order < 1:
        raise DataError("polynomial order must be at least 1")
    if lambda_max <= 0:
        raise DataError("lambda_max must be positive")
    areas = np.asarray(areas, dtype=np.float64)
    n = areas.shape[0]
    lap = sparse.csr_matrix(laplacian)
    walk = lap.multiply(1.0 / areas[:, None]).toarray()
    base = (2.0 / lambda_max) * walk - np.eye(n)
    ops = {0: np.eye(n)}
    if order > 1:
        ops[1] = base
    for m in range(2, order):
        ops[m] = 2.0 * (base @ ops[m - 1]) - ops[m - 2]
    return ops
