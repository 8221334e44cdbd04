"""Training losses with analytic gradients: softmax cross-entropy and the
hardest-in-batch triplet margin loss over corresponding descriptor pairs."""

from __future__ import annotations

import numpy as np

from .errors import DataError

# distances below this are treated as zero-length for gradient purposes
_DIST_FLOOR = 1e-12


def cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean softmax cross-entropy over rows; returns (loss, dlogits)."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, d = logits.shape
    if labels.shape != (n,):
        raise DataError("one label per logit row required")
    if labels.size and (labels.min() < 0 or labels.max() >= d):
        raise DataError(f"label out of range for {d} classes")
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    total = exp.sum(axis=1)
    log_softmax = shifted - np.log(total)[:, None]
    rows = np.arange(n)
    loss = -log_softmax[rows, labels].mean()
    dlogits = exp / total[:, None]
    dlogits[rows, labels] -= 1.0
    dlogits /= n
    return float(loss), dlogits


def _pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a_sq = np.einsum("ij,ij->i", a, a)
    b_sq = np.einsum("ij,ij->i", b, b)
    sq = a_sq[:, None] + b_sq[None, :] - 2.0 * (a @ b.T)
    return np.sqrt(np.maximum(sq, 0.0))


def hardnet_loss(desc_a: np.ndarray, desc_b: np.ndarray, margin: float = 1.0):
    """Hardest-negative triplet margin loss; rows i of A and B correspond.

    For each anchor i the negative is the closest non-matching row in either
    direction: min over j != i of min(D_ij, D_ji). Returns (loss, dA, dB).
    """
    a = np.asarray(desc_a, dtype=np.float64)
    b = np.asarray(desc_b, dtype=np.float64)
    if a.shape != b.shape:
        raise DataError("corresponding descriptor blocks must have equal shape")
    m = a.shape[0]
    if m < 2:
        raise DataError("hardnet loss needs at least 2 pairs")
    dist = _pairwise_distances(a, b)
    sym = np.minimum(dist, dist.T)
    np.fill_diagonal(sym, np.inf)
    neg_idx = np.argmin(sym, axis=1)
    rows = np.arange(m)
    hardest = sym[rows, neg_idx]
    pos = dist[rows, rows]
    per_anchor = margin + pos - hardest
    active = per_anchor > 0
    loss = float(np.maximum(per_anchor, 0.0).mean())

    # route each active anchor's negative gradient through whichever of
    # D_ij / D_ji won the min (ties take the row direction)
    da = np.zeros_like(a)
    db = np.zeros_like(b)
    inv = 1.0 / m

    def add_dist_grad(i, j, coef):
        # d/d a_i, d/d b_j of dist[i, j]
        d = max(dist[i, j], _DIST_FLOOR)
        g = coef * (a[i] - b[j]) / d
        da[i] += g
        db[j] -= g

    for i in np.nonzero(active)[0]:
        add_dist_grad(i, i, inv)
        j = neg_idx[i]
        if dist[i, j] <= dist[j, i]:
            add_dist_grad(i, j, -inv)
        else:
            add_dist_grad(j, i, -inv)
    return loss, da, db
