"""Spectral graph wavelets: explicit atoms, analysis, and synthesis.

A wavelet at scale index m centered on vertex v is the filtered delta
psi[x] = a(v) * sum_j g_m(lambda_j) phi_j(v) phi_j(x); index 0 is the
scaling-function atom.  Analysis coefficients use the A-inner product,
so with the full basis and an exact frame, synthesis inverts analysis.
"""

from __future__ import annotations

import numpy as np

from .filters import filter_responses
from .spectral import project


def wavelet_matrix(basis, bank, m, sparsity_threshold=None):
    """Dense (n, n) matrix whose column v is the atom at vertex v.

    sparsity_threshold (default off; 1e-4 is a sensible value) zeroes
    entries with magnitude below the threshold to make the columns
    compactly supported.
    """
    from .filters import g_of

    g = g_of(bank, m, basis.eigenvalues)
    atoms = (basis.eigenvectors * g[None, :]) @ basis.eigenvectors.T
    atoms *= basis.areas[None, :]
    if sparsity_threshold is not None:
        atoms[np.abs(atoms) < sparsity_threshold] = 0.0
    return atoms


def wavelet_coeffs(basis, bank, signal):
    """Analysis table (n_filters, n): row m holds <f, psi_{m, v}>_A."""
    sigma = project(basis, np.asarray(signal, dtype=np.float64))
    responses = filter_responses(bank, basis.eigenvalues)
    # W[m, v] = a(v) * sum_j g_m(lambda_j) sigma_j phi_j(v)
    return (responses * sigma[None, :]) @ basis.eigenvectors.T * basis.areas[None, :]


def reconstruct(basis, bank, coeffs):
    """Synthesis: f_hat = sum_m sum_v a(v)^-1 W[m, v] psi_{m, v}.

    Expanded in the basis this is sum_m Phi (g_m * (Phi' W_m)), which is
    what gets evaluated; the explicit-atom route is kept as a test oracle.
    """
    coeffs = np.asarray(coeffs, dtype=np.float64)
    responses = filter_responses(bank, basis.eigenvalues)
    spectral_sums = basis.eigenvectors.T @ coeffs.T  # (k, n_filters)
    return basis.eigenvectors @ (responses.T * spectral_sums).sum(axis=1)
