"""Mexican-hat filter bank forming a near-Parseval frame on [0, lambda_max].

The bank holds one low-pass scaling filter h and K band-pass wavelet
filters g(t_m *), with log-spaced scales t_m chosen so the coarsest
wavelet peaks near the bottom of the spectrum and the finest beyond the
top.  The squared responses sum to 1 within a checked tolerance; the
stock constants achieve 0.0093 regardless of lambda_max (responses
depend on lambda / lambda_max only).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError, NumericalError

DEFAULT_AMPLITUDE = 0.443  # peak value of each wavelet filter
DEFAULT_SCALING_AMPLITUDE = 1.004  # h(0)
DEFAULT_SCALING_DECAY = 38.462  # cubic-exponential decay rate of h
DEFAULT_SPAN_COARSE = 46.0  # t_1 * lambda_max
DEFAULT_SPAN_FINE = 0.2  # t_K * lambda_max
DEFAULT_NUM_SCALES = 31
FRAME_TOL = 0.01
_RESIDUAL_GRID = 256


@dataclass(frozen=True)
class FilterBank:
    """Scaling filter plus K wavelet scales over (0, lambda_max]."""

    lambda_max: float
    scales: np.ndarray  # t_m, descending, shape (K,)
    amplitude: float
    scaling_amplitude: float
    scaling_decay: float
    span_coarse: float
    span_fine: float
    residual: float = float("nan")  # achieved max |G - 1| at build time

    @property
    def n_scales(self):
        return len(self.scales)

    @property
    def n_filters(self):
        return len(self.scales) + 1


def wavelet_response(bank, scale, lam):
    """Band-pass response g(t * lambda) = amp * x^2 exp(1 - x^2)."""
    x = scale * np.asarray(lam, dtype=np.float64)
    return bank.amplitude * x * x * np.exp(1.0 - x * x)


def scaling_response(bank, lam):
    """Low-pass response h(lambda) = B exp(-(C lambda / lambda_max)^3)."""
    x = bank.scaling_decay * np.asarray(lam, dtype=np.float64) / bank.lambda_max
    return bank.scaling_amplitude * np.exp(-(x ** 3))


def g_of(bank, m, lam):
    """Filter m evaluated at lam; m = 0 is the scaling filter."""
    if not 0 <= m <= bank.n_scales:
        raise ValueError(f"filter index {m} out of range 0..{bank.n_scales}")
    if m == 0:
        return scaling_response(bank, lam)
    return wavelet_response(bank, bank.scales[m - 1], lam)


def filter_responses(bank, lam):
    """All filters stacked: row 0 the scaling filter, rows 1..K wavelets."""
    lam = np.atleast_1d(np.asarray(lam, dtype=np.float64))
    out = np.empty((bank.n_filters, len(lam)))
    out[0] = scaling_response(bank, lam)
    for m, t in enumerate(bank.scales, start=1):
        out[m] = wavelet_response(bank, t, lam)
    return out


def _residual_grid(lambda_max, eigenvalues=None):
    grid = np.linspace(0.0, lambda_max, _RESIDUAL_GRID + 1)[1:]
    if eigenvalues is not None:
        grid = np.concatenate([np.asarray(eigenvalues, dtype=np.float64), grid])
    return grid


def frame_residual(bank, eigenvalues=None):
    """(max |G(lambda) - 1|, offending lambda) over the evaluation grid."""
    grid = _residual_grid(bank.lambda_max, eigenvalues)
    energy = (filter_responses(bank, grid) ** 2).sum(axis=0)
    dev = np.abs(energy - 1.0)
    worst = int(np.argmax(dev))
    return float(dev[worst]), float(grid[worst])


def _make_scales(lambda_max, n_scales, span_coarse, span_fine):
    return np.exp(
        np.linspace(
            np.log(span_coarse / lambda_max), np.log(span_fine / lambda_max), n_scales
        )
    )


def build_filter_bank(
    lambda_max,
    n_scales=DEFAULT_NUM_SCALES,
    amplitude=DEFAULT_AMPLITUDE,
    scaling_amplitude=DEFAULT_SCALING_AMPLITUDE,
    scaling_decay=DEFAULT_SCALING_DECAY,
    span_coarse=DEFAULT_SPAN_COARSE,
    span_fine=DEFAULT_SPAN_FINE,
    eigenvalues=None,
    tol=FRAME_TOL,
    refit=False,
):
    """Construct and validate a bank; raises if the frame misses `tol`.

    With refit=True, a least-squares adjustment of the three response
    constants (scale span fixed) is attempted before giving up.
    """
    if lambda_max <= 0:
        raise DataError(f"lambda_max must be positive, got {lambda_max}")
    if n_scales < 1:
        raise DataError("need at least one wavelet scale")
    bank = FilterBank(
        lambda_max=float(lambda_max),
        scales=_make_scales(lambda_max, n_scales, span_coarse, span_fine),
        amplitude=amplitude,
        scaling_amplitude=scaling_amplitude,
        scaling_decay=scaling_decay,
        span_coarse=span_coarse,
        span_fine=span_fine,
    )
    dev, where = frame_residual(bank, eigenvalues)
    if dev > tol and refit:
        bank = refit_constants(bank, eigenvalues)
        dev, where = frame_residual(bank, eigenvalues)
    if dev > tol:
        raise NumericalError(
            f"filter bank is not a tight enough frame: |G-1| = {dev:.4f} > {tol}"
            f" at lambda = {where:.6g}"
        )
    return replace(bank, residual=dev)


def refit_constants(bank, eigenvalues=None):
    """Least-squares refit of the three response constants.

    The scale ladder (span endpoints and count) stays fixed; only the
    wavelet amplitude and the scaling filter's amplitude and decay move.
    """
    from scipy.optimize import least_squares

    grid = _residual_grid(bank.lambda_max, eigenvalues)

    def residuals(params):
        trial = replace(
            bank,
            amplitude=params[0],
            scaling_amplitude=params[1],
            scaling_decay=params[2],
        )
        return (filter_responses(trial, grid) ** 2).sum(axis=0) - 1.0

    start = np.array([bank.amplitude, bank.scaling_amplitude, bank.scaling_decay])
    fit = least_squares(residuals, start, method="lm", max_nfev=2000)
    refit = replace(
        bank,
        amplitude=float(fit.x[0]),
        scaling_amplitude=float(fit.x[1]),
        scaling_decay=float(fit.x[2]),
    )
    # keep the stored residual in sync with the new constants
    return replace(refit, residual=frame_residual(refit, eigenvalues)[0])


def select_scales(n_dims):
    """Wavelet scale indices for an n_dims-dimensional cascade.

    Interior floor(linspace) samples of the scale range; the endpoints
    (the out-of-range coarse slot and the finest wavelet) are dropped.
    At least three scales are used below 96 dims; duplicates that the
    floor produces at high dim counts are kept so 32 * len == n_dims.
    """
    if n_dims < 1:
        raise DataError("descriptor dimension must be positive")
    n_pts = int(np.ceil(max(n_dims, 96) / 32.0)) + 2
    pts = np.floor(np.linspace(32.0, 1.0, n_pts)).astype(np.int64)
    return pts[1:-1]


_SERIAL_FIELDS = (
    "lambda_max",
    "n_scales",
    "amplitude",
    "scaling_amplitude",
    "scaling_decay",
    "span_coarse",
    "span_fine",
)


def serialize_bank(bank):
    """Key-value text block capturing everything needed to rebuild."""
    values = {
        "lambda_max": bank.lambda_max,
        "n_scales": bank.n_scales,
        "amplitude": bank.amplitude,
        "scaling_amplitude": bank.scaling_amplitude,
        "scaling_decay": bank.scaling_decay,
        "span_coarse": bank.span_coarse,
        "span_fine": bank.span_fine,
    }
    lines = [f"{key} = {values[key]:.17g}" for key in _SERIAL_FIELDS]
    return "\n".join(lines) + "\n"


def parse_bank(text):
    """Inverse of serialize_bank; the residual is re-validated on build."""
    values = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"malformed filter-bank line {line!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    unknown = set(values) - set(_SERIAL_FIELDS)
    if unknown:
        raise DataError(f"unknown filter-bank keys: {sorted(unknown)}")
    missing = set(_SERIAL_FIELDS) - set(values)
    if missing:
        raise DataError(f"missing filter-bank keys: {sorted(missing)}")
    return build_filter_bank(
        lambda_max=float(values["lambda_max"]),
        n_scales=int(values["n_scales"]),
        amplitude=float(values["amplitude"]),
        scaling_amplitude=float(values["scaling_amplitude"]),
        scaling_decay=float(values["scaling_decay"]),
        span_coarse=float(values["span_coarse"]),
        span_fine=float(values["span_fine"]),
    )


def bank_hash(bank):
    return hashlib.sha256(serialize_bank(bank).encode()).hexdigest()
