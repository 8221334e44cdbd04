"""Network layers: multiscale operator convolution, ELU, minmax Norm, affine.

Everything is float64 and comes in forward/backward pairs returning exact
analytic gradients; the test suite drives every op through central finite
differences.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError


def normalize_wavelet_columns(psi: np.ndarray) -> np.ndarray:
    """L1-normalize each column so its absolute sum is 1."""
    psi = np.asarray(psi, dtype=np.float64)
    sums = np.abs(psi).sum(axis=0)
    if np.any(sums == 0.0):
        bad = int(np.argmax(sums == 0.0))
        raise DataError(f"wavelet column {bad} is identically zero")
    return psi / sums[None, :]


def elu(s: np.ndarray) -> np.ndarray:
    return np.where(s > 0, s, np.expm1(s))


def elu_grad(s: np.ndarray) -> np.ndarray:
    return np.where(s > 0, 1.0, np.exp(s))


def minmax_forward(e: np.ndarray):
    """Per-column minmax to [0,1]; constant columns map to 0.5.

    Returns (z, mn, span); span carries 0 for constant columns so the
    backward pass can zero their gradient, and (mn, span) are the
    statistics the backward pass treats as constants.
    """
    mn = e.min(axis=0)
    span = e.max(axis=0) - mn
    return minmax_apply(e, mn, span), mn, span


def minmax_apply(e: np.ndarray, mn: np.ndarray, span: np.ndarray) -> np.ndarray:
    """Minmax with externally fixed statistics (the frozen map whose exact
    derivative the backward pass computes)."""
    z = np.empty_like(e)
    const = span == 0.0
    np.divide(e - mn[None, :], span[None, :], out=z, where=~const[None, :])
    z[:, const] = 0.5
    return z


def minmax_backward(dz: np.ndarray, span: np.ndarray) -> np.ndarray:
    # min/max references are constants of the backward pass; constant
    # columns carry no gradient
    de = np.zeros_like(dz)
    live = span != 0.0
    de[:, live] = dz[:, live] / span[None, live]
    return de


def conv_forward(x: np.ndarray, weights: list, ops: list):
    """Z = Norm(ELU(sum_s P_s X W_s)) over the layer's operator set."""
    if len(weights) != len(ops):
        raise DataError("one weight matrix per operator required")
    if x.shape[1] != weights[0].shape[0]:
        raise DataError(
            f"input dim {x.shape[1]} does not match weights {weights[0].shape[0]}"
        )
    s = ops[0] @ (x @ weights[0])
    for w, p in zip(weights[1:], ops[1:]):
        s += p @ (x @ w)
    e = elu(s)
    z, mn, span = minmax_forward(e)
    return z, (x, s, mn, span)


def conv_backward(cache, dz: np.ndarray, weights: list, ops: list):
    x, s, mn, span = cache
    de = minmax_backward(dz, span)
    ds = de * elu_grad(s)
    dx = np.zeros_like(x)
    dws = []
    for w, p in zip(weights, ops):
        u = p.T @ ds
        dx += u @ w.T
        dws.append(x.T @ u)
    return dx, dws


def affine_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    if x.shape[1] != w.shape[0]:
        raise DataError(f"input dim {x.shape[1]} does not match weights {w.shape[0]}")
    return x @ w + b[None, :], x


def affine_backward(cache, dz: np.ndarray, w: np.ndarray):
    x = cache
    return dz @ w.T, x.T @ dz, dz.sum(axis=0)
