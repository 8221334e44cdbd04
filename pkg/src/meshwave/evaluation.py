"""Correspondence metrics: nearest-neighbor matching, geodesic error, CGE, CMC.

All geodesic quantities are normalized by the square root of the target
surface area, which makes every metric invariant to rigid motion and uniform
scaling of the target mesh. Scaled (x1e3) values are emitted alongside for
reporting.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DataError
from .geodesics import geodesic_multi
from .mesh import TriMesh, lumped_areas

_CHUNK = 512  # rows of the source block held against the full target table


@dataclass(frozen=True)
class CorrespondenceMap:
    indices: np.ndarray  # per-source-vertex target index
    source_hash: str = ""
    target_hash: str = ""

    def __post_init__(self):
        idx = np.ascontiguousarray(self.indices, dtype=np.int64)
        if idx.ndim != 1:
            raise DataError("correspondence map must be a 1-D index array")
        object.__setattr__(self, "indices", idx)

    @property
    def n_source(self) -> int:
        return self.indices.shape[0]


@dataclass(frozen=True)
class GroundTruth:
    direct: np.ndarray
    symmetric: Optional[np.ndarray] = None

    def __post_init__(self):
        d = np.ascontiguousarray(self.direct, dtype=np.int64)
        if d.ndim != 1:
            raise DataError("ground truth must be a 1-D index array")
        object.__setattr__(self, "direct", d)
        if self.symmetric is not None:
            s = np.ascontiguousarray(self.symmetric, dtype=np.int64)
            if s.shape != d.shape:
                raise DataError("symmetric map length differs from direct map")
            object.__setattr__(self, "symmetric", s)


@dataclass(frozen=True)
class EvalReport:
    age_direct: float
    age_symmetric: Optional[float]
    cge_radii: np.ndarray
    cge_fractions: np.ndarray
    n_source: int
    n_target: int
    # rank curve is present only when descriptors (not just a map) were given
    cmc_ranks: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    cmc_fractions: np.ndarray = field(default_factory=lambda: np.empty(0))
    extra: dict = field(default_factory=dict)


def read_correspondence(path, n_target: Optional[int] = None) -> np.ndarray:
    """One 0-based target index per line; '#' lines are comments."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                val = int(line)
            except ValueError:
                raise DataError(f"{path}:{ln}: not an integer: {line!r}") from None
            out.append(val)
    idx = np.asarray(out, dtype=np.int64)
    if idx.size == 0:
        raise DataError(f"{path}: no indices found")
    if idx.min() < 0:
        raise DataError(f"{path}: negative index {idx.min()}")
    if n_target is not None and idx.max() >= n_target:
        raise DataError(
            f"{path}: index {idx.max()} out of range for {n_target} target vertices"
        )
    return idx


def write_correspondence(path, indices, comment: Optional[str] = None):
    indices = np.asarray(indices, dtype=np.int64)
    with open(path, "w", encoding="utf-8") as fh:
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        for v in indices:
            fh.write(f"{v}\n")


def nn_match(desc_a: np.ndarray, desc_b: np.ndarray) -> CorrespondenceMap:
    """For each row of A, the index of the L2-nearest row of B.

    Ties resolve to the lowest index (argmin keeps the first minimum).
    """
    desc_a = np.asarray(desc_a, dtype=np.float64)
    desc_b = np.asarray(desc_b, dtype=np.float64)
    if desc_a.ndim != 2 or desc_b.ndim != 2:
        raise DataError("descriptor fields must be 2-D (vertices x dims)")
    if desc_a.shape[1] != desc_b.shape[1]:
        raise DataError(
            f"descriptor dimension mismatch: {desc_a.shape[1]} vs {desc_b.shape[1]}"
        )
    out = np.empty(desc_a.shape[0], dtype=np.int64)
    for lo in range(0, desc_a.shape[0], _CHUNK):
        # direct (a-b)^2 sums, no GEMM cancellation: exact ties stay exact
        d = cdist(desc_a[lo : lo + _CHUNK], desc_b, "sqeuclidean")
        out[lo : lo + _CHUNK] = np.argmin(d, axis=1)
    return CorrespondenceMap(out)


def _check_against_target(indices: np.ndarray, n_target: int, what: str):
    if indices.size and (indices.min() < 0 or indices.max() >= n_target):
        raise DataError(f"{what} references vertices outside the target mesh")


def normalized_errors(
    map_: CorrespondenceMap, gt: GroundTruth, target_mesh: TriMesh
) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """Per-source geodesic error on the target, divided by sqrt(target area).

    Returns (direct, symmetric); symmetric is None when the ground truth has
    no symmetric map.
    """
    pred = map_.indices
    if pred.shape != gt.direct.shape:
        raise DataError("map and ground truth cover different source sizes")
    n_t = target_mesh.n_vertices
    _check_against_target(pred, n_t, "correspondence map")
    _check_against_target(gt.direct, n_t, "ground truth")
    sources = [gt.direct]
    if gt.symmetric is not None:
        _check_against_target(gt.symmetric, n_t, "symmetric ground truth")
        sources.append(gt.symmetric)
    uniq = np.unique(np.concatenate(sources))
    dist = geodesic_multi(target_mesh, uniq)
    row_of = np.full(n_t, -1, dtype=np.int64)
    row_of[uniq] = np.arange(uniq.size)
    scale = 1.0 / np.sqrt(lumped_areas(target_mesh).sum())
    direct = dist[row_of[gt.direct], pred] * scale
    symmetric = None
    if gt.symmetric is not None:
        symmetric = np.minimum(direct, dist[row_of[gt.symmetric], pred] * scale)
    return direct, symmetric


def average_geodesic_error(
    map_: CorrespondenceMap, gt: GroundTruth, target_mesh: TriMesh
) -> tuple[float, Optional[float]]:
    direct, symmetric = normalized_errors(map_, gt, target_mesh)
    return float(direct.mean()), None if symmetric is None else float(symmetric.mean())


def cge_curve(
    map_: CorrespondenceMap,
    gt: GroundTruth,
    target_mesh: TriMesh,
    radii: np.ndarray,
    symmetric: bool = False,
) -> np.ndarray:
    """Fraction of source vertices with normalized geodesic error <= r."""
    radii = np.asarray(radii, dtype=np.float64)
    direct, sym = normalized_errors(map_, gt, target_mesh)
    if symmetric:
        if sym is None:
            raise DataError("symmetric curve requested but no symmetric map given")
        err = sym
    else:
        err = direct
    return (err[None, :] <= radii[:, None]).mean(axis=1)


def match_ranks(
    desc_a: np.ndarray, desc_b: np.ndarray, gt_direct: np.ndarray
) -> np.ndarray:
    """1-based rank of each source's true target among its sorted neighbors.

    Ordering is by squared distance with index as the tie-breaker, so the
    rank of a tied true target counts only tied rows with a lower index.
    """
    desc_a = np.asarray(desc_a, dtype=np.float64)
    desc_b = np.asarray(desc_b, dtype=np.float64)
    if desc_a.shape[1] != desc_b.shape[1]:
        raise DataError("descriptor dimension mismatch")
    gt_direct = np.asarray(gt_direct, dtype=np.int64)
    if gt_direct.shape[0] != desc_a.shape[0]:
        raise DataError("ground truth length differs from source descriptor count")
    _check_against_target(gt_direct, desc_b.shape[0], "ground truth")
    ranks = np.empty(desc_a.shape[0], dtype=np.int64)
    for lo in range(0, desc_a.shape[0], _CHUNK):
        d = cdist(desc_a[lo : lo + _CHUNK], desc_b, "sqeuclidean")
        g = gt_direct[lo : lo + _CHUNK]
        d_true = d[np.arange(g.size), g]
        closer = (d < d_true[:, None]).sum(axis=1)
        tied_before = ((d == d_true[:, None]) & (np.arange(d.shape[1])[None, :] < g[:, None])).sum(axis=1)
        ranks[lo : lo + _CHUNK] = closer + tied_before + 1
    return ranks


def cmc_curve(
    desc_a: np.ndarray,
    desc_b: np.ndarray,
    gt_direct: np.ndarray,
    kmax: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Fraction of sources whose true target is within the k nearest rows."""
    n_target = np.asarray(desc_b).shape[0]
    if not 1 <= kmax <= n_target:
        raise DataError(f"kmax must be in [1, {n_target}], got {kmax}")
    ranks = match_ranks(desc_a, desc_b, gt_direct)
    ks = np.arange(1, kmax + 1, dtype=np.int64)
    fractions = (ranks[None, :] <= ks[:, None]).mean(axis=1)
    return ks, fractions


def evaluate(
    desc_a: np.ndarray,
    desc_b: np.ndarray,
    gt: GroundTruth,
    target_mesh: TriMesh,
    radii: Optional[np.ndarray] = None,
    kmax: Optional[int] = None,
) -> EvalReport:
    """Run the full matching benchmark for one descriptor pair."""
    if radii is None:
        radii = np.linspace(0.0, 0.25, 51)
    if kmax is None:
        kmax = min(100, np.asarray(desc_b).shape[0])
    map_ = nn_match(desc_a, desc_b)
    direct, symmetric = normalized_errors(map_, gt, target_mesh)
    fractions = (direct[None, :] <= np.asarray(radii)[:, None]).mean(axis=1)
    ks, cmc = cmc_curve(desc_a, desc_b, gt.direct, kmax)
    exact = float((map_.indices == gt.direct).mean())
    return EvalReport(
        age_direct=float(direct.mean()),
        age_symmetric=None if symmetric is None else float(symmetric.mean()),
        cge_radii=np.asarray(radii, dtype=np.float64),
        cge_fractions=fractions,
        n_source=int(np.asarray(desc_a).shape[0]),
        n_target=int(np.asarray(desc_b).shape[0]),
        cmc_ranks=ks,
        cmc_fractions=cmc,
        extra={"exact_match_rate": exact},
    )


def evaluate_map(
    map_: CorrespondenceMap,
    gt: GroundTruth,
    target_mesh: TriMesh,
    radii: Optional[np.ndarray] = None,
) -> EvalReport:
    """Benchmark from a precomputed correspondence (no rank curve)."""
    if radii is None:
        radii = np.linspace(0.0, 0.25, 51)
    direct, symmetric = normalized_errors(map_, gt, target_mesh)
    fractions = (direct[None, :] <= np.asarray(radii)[:, None]).mean(axis=1)
    exact = float((map_.indices == gt.direct).mean())
    return EvalReport(
        age_direct=float(direct.mean()),
        age_symmetric=None if symmetric is None else float(symmetric.mean()),
        cge_radii=np.asarray(radii, dtype=np.float64),
        cge_fractions=fractions,
        n_source=int(map_.n_source),
        n_target=int(target_mesh.n_vertices),
        extra={"exact_match_rate": exact},
    )


def report_summary_text(report: EvalReport) -> str:
    lines = [
        f"n_source = {report.n_source}",
        f"n_target = {report.n_target}",
        f"age_direct = {report.age_direct:.17g}",
        f"age_direct_x1e3 = {report.age_direct * 1e3:.17g}",
    ]
    if report.age_symmetric is not None:
        lines.append(f"age_symmetric = {report.age_symmetric:.17g}")
        lines.append(f"age_symmetric_x1e3 = {report.age_symmetric * 1e3:.17g}")
    for key in sorted(report.extra):
        lines.append(f"{key} = {report.extra[key]:.17g}")
    return "\n".join(lines) + "\n"


def report_csv_text(report: EvalReport) -> str:
    rows = ["curve,x,fraction"]
    for r, f in zip(report.cge_radii, report.cge_fractions):
        rows.append(f"cge,{r:.17g},{f:.17g}")
    for k, f in zip(report.cmc_ranks, report.cmc_fractions):
        rows.append(f"cmc,{k},{f:.17g}")
    return "\n".join(rows) + "\n"
