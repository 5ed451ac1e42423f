"""Bandwidth selection by leave-one-out cross-validation.

The robust criterion sums a bounded score of standardized leave-one-out
prediction residuals; with the identity score and classical configurations
it reduces to the usual sum of squared prediction errors.  Candidate
bandwidths where a leave-one-out window is empty (or a downstream solver
fails) are marked infeasible rather than raising.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    ConvergenceError,
    DegenerateScaleError,
    EmptyWindowError,
    InfeasibleGridError,
    SingularDesignError,
)
from .manifold import injectivity_radius, pairwise_distances
from .plm import PLMDataset
from .robust_linear import GMConfig, WeightFunction, gm_estimate
from .smoother import (
    KernelSpec,
    LocalFitConfig,
    MAD_CONSISTENCY,
    ScoreFunction,
    check_bandwidth,
    smooth_columns,
)

_FAILURE_KINDS = (EmptyWindowError, ConvergenceError, DegenerateScaleError,
                  SingularDesignError)


@dataclass
class GridPointDiagnostic:
    h: float
    score: float
    feasible: bool
    reason: str | None = None


@dataclass
class BandwidthGrid:
    """Ascending candidate bandwidths plus per-candidate diagnostics."""

    values: np.ndarray
    diagnostics: list[GridPointDiagnostic] | None = field(default=None)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if values.size == 0:
            raise ValueError("bandwidth grid must be nonempty")
        if np.any(values <= 0) or not np.all(np.isfinite(values)):
            raise ValueError("bandwidth candidates must be positive and finite")
        self.values = np.sort(values)


def default_grid(dataset: PLMDataset, size: int = 8) -> BandwidthGrid:
    """Log-spaced grid from the 10th percentile of pairwise distances up to
    0.9 x injectivity radius (0.9 x the largest pairwise distance on
    unbounded domains)."""
    d = pairwise_distances(dataset.manifold, dataset.t)
    off = d[np.triu_indices(dataset.n, k=1)]
    off = off[off > 0]
    if off.size == 0:
        raise ValueError("all manifold covariates coincide; no usable grid")
    lo = float(np.quantile(off, 0.10))
    inj = injectivity_radius(dataset.manifold)
    hi = 0.9 * (inj if np.isfinite(inj) else float(off.max()))
    if lo >= hi:
        lo = hi / 4.0
    return BandwidthGrid(np.geomspace(lo, hi, size))


def _loo_prediction_residuals(dataset: PLMDataset, h: float, kernel: KernelSpec,
                              smoother: LocalFitConfig, gm: GMConfig,
                              distances: np.ndarray) -> np.ndarray:
    cfg = replace(smoother, bandwidth=h)
    columns = np.column_stack([dataset.y, dataset.x]) if dataset.p else dataset.y[:, None]
    est, fl = smooth_columns(dataset.manifold, kernel, cfg, dataset.t, columns,
                             leave_one_out=True, distances=distances)
    stuck = np.flatnonzero((fl == 2).any(axis=1))
    if stuck.size:
        raise ConvergenceError(
            f"leave-one-out smoothing did not converge at indices {stuck.tolist()}",
            indices=stuck.tolist(),
        )
    r = dataset.y - est[:, 0]
    eta = dataset.x - est[:, 1:]
    if dataset.p == 0:
        return r
    reg = gm_estimate(r, eta, gm)
    return r - eta @ reg.beta


def _robust_spread(residuals: np.ndarray) -> float:
    med = np.median(residuals)
    return MAD_CONSISTENCY * float(np.median(np.abs(residuals - med)))


def _criterion(residuals: np.ndarray, cv_score: ScoreFunction,
               scale: float | None = None) -> float:
    if cv_score.code == 0:
        return float(np.sum(residuals ** 2))
    s = _robust_spread(residuals) if scale is None else float(scale)
    if s <= 0.0:
        s = 1.0  # all residuals (near) identical; scoring the raw values
    return float(np.sum(cv_score.psi(residuals / s) ** 2))


def _resolve_configs(mode: str, kernel, smoother, gm, cv_score):
    kernel = kernel or KernelSpec.quadratic()
    smoother = smoother or LocalFitConfig()
    gm = gm or GMConfig()
    if mode == "classical":
        smoother = replace(smoother, score=ScoreFunction.identity())
        gm = GMConfig(score=ScoreFunction.identity(), w1=WeightFunction.one())
        cv_score = ScoreFunction.identity()
    else:
        cv_score = cv_score or ScoreFunction.huber()
    return kernel, smoother, gm, cv_score


def rcv_score(dataset: PLMDataset, h: float, kernel: KernelSpec | None = None,
              smoother: LocalFitConfig | None = None, gm: GMConfig | None = None,
              cv_score: ScoreFunction | None = None,
              scale: float | None = None) -> float:
    """Cross-validation criterion at bandwidth h.

    Bounded scores are applied to standardized residuals; ``scale`` fixes
    the standardization (the selector shares one pilot scale across the
    grid), otherwise the residuals' own robust spread is used.  Returns
    +inf when h is infeasible (an empty leave-one-out window or a solver
    failure); never raises for feasibility problems.
    """
    kernel, smoother, gm, cv_score = _resolve_configs("robust", kernel, smoother,
                                                      gm, cv_score)
    check_bandwidth(dataset.manifold, h)
    distances = pairwise_distances(dataset.manifold, dataset.t)
    try:
        res = _loo_prediction_residuals(dataset, h, kernel, smoother, gm, distances)
    except _FAILURE_KINDS:
        return float("inf")
    return _criterion(res, cv_score, scale)


def select_bandwidth(dataset: PLMDataset, grid, mode: str = "robust",
                     kernel: KernelSpec | None = None,
                     smoother: LocalFitConfig | None = None,
                     gm: GMConfig | None = None,
                     cv_score: ScoreFunction | None = None):
    """Feasible argmin of the cross-validation criterion over the grid.

    For bounded scores every candidate is scored against one pilot scale,
    the robust spread of the leave-one-out residuals at the smallest
    feasible bandwidth; a per-candidate scale would make the criterion
    nearly scale-free and blind to oversmoothing.  Ties break toward the
    smallest bandwidth.  Returns (h_star, diagnostics); raises
    InfeasibleGridError with per-candidate reasons when nothing on the grid
    works.
    """
    if mode not in ("robust", "classical"):
        raise ValueError(f"mode must be 'robust' or 'classical', got {mode!r}")
    if not isinstance(grid, BandwidthGrid):
        grid = BandwidthGrid(np.asarray(grid, dtype=float))
    inj = injectivity_radius(dataset.manifold)
    for h in grid.values:
        if not h < inj:
            raise ValueError(
                f"grid bandwidth {h} is not below the injectivity radius {inj}"
            )
    kernel, smoother, gm, cv_score = _resolve_configs(mode, kernel, smoother,
                                                      gm, cv_score)
    distances = pairwise_distances(dataset.manifold, dataset.t)

    diagnostics: list[GridPointDiagnostic] = []
    pilot_scale = None
    for h in grid.values:
        try:
            res = _loo_prediction_residuals(dataset, float(h), kernel, smoother,
                                            gm, distances)
            if pilot_scale is None:
                pilot_scale = _robust_spread(res)
            diagnostics.append(GridPointDiagnostic(
                float(h), _criterion(res, cv_score, pilot_scale), True))
        except _FAILURE_KINDS as err:
            diagnostics.append(GridPointDiagnostic(
                float(h), float("inf"), False, f"{type(err).__name__}: {err}"))

    best = None
    for diag in diagnostics:
        if diag.feasible and (best is None or diag.score < best.score):
            best = diag
    if best is None:
        raise InfeasibleGridError(
            "no feasible bandwidth in the grid",
            reasons={d.h: d.reason for d in diagnostics},
        )
    grid.diagnostics = diagnostics
    return best.h, diagnostics
