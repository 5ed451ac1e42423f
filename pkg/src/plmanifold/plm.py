"""Three-step partially linear estimation, robust and classical.

Step 1 smooths the response and every linear covariate over the manifold
covariate; Step 2 regresses the smoothed response residuals on the smoothed
covariate residuals (robust M/GM or least squares); Step 3 assembles the
nonparametric component g(t) = phi0(t) - beta' phi(t).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    ConvergenceError,
    DegenerateScaleError,
    InsufficientDataError,
    SingularDesignError,
)
from .manifold import Manifold, as_coords, validate_coords
from .robust_linear import (
    GMConfig,
    RegressionResult,
    gm_estimate,
    ols_estimate,
    residual_scale,
)
from .smoother import (
    KernelSpec,
    LocalFitConfig,
    ScoreFunction,
    check_bandwidth,
    smooth_columns,
)

MODES = ("robust", "classical")


@dataclass
class PLMDataset:
    """Aligned response, Euclidean covariates and manifold covariates.

    ``x`` may have zero columns for a purely nonparametric fit.  Every row of
    ``t`` must satisfy the manifold's point invariants.
    """

    y: np.ndarray
    x: np.ndarray
    t: np.ndarray
    manifold: Manifold
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).ravel()
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        self.x = x
        self.t = validate_coords(self.manifold, self.t, name="t")
        n = self.y.size
        if self.x.shape[0] != n or self.t.shape[0] != n:
            raise ValueError(
                f"misaligned dataset: {n} responses, {self.x.shape[0]} covariate "
                f"rows, {self.t.shape[0]} manifold points"
            )
        if n <= self.p + 1:
            raise InsufficientDataError(
                f"need n > p + 1 observations (n={n}, p={self.p})"
            )

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def p(self) -> int:
        return self.x.shape[1]


@dataclass
class PLMFit:
    """Fitted three-step model, immutable smoother state included.

    ``g_hat``, ``phi0_hat`` and ``phi_hat`` are evaluated at the sample
    points; predictions at new points re-run the local smoother against the
    stored training data.
    """

    beta: np.ndarray
    phi0_hat: np.ndarray
    phi_hat: np.ndarray
    g_hat: np.ndarray
    residuals: np.ndarray
    scale: float
    bandwidth: float
    mode: str
    flags: dict
    regression: RegressionResult
    dataset: PLMDataset
    kernel: KernelSpec
    smoother_config: LocalFitConfig
    gm_config: GMConfig | None

    def predict_g(self, t):
        return predict_g(self, t)

    def predict_y(self, x, t):
        return predict_y(self, x, t)


def _smoothing_config(mode: str, smoother: LocalFitConfig, bandwidth: float) -> LocalFitConfig:
    score = ScoreFunction.identity() if mode == "classical" else smoother.score
    return replace(smoother, bandwidth=bandwidth, score=score)


def fit(dataset: PLMDataset, bandwidth: float, mode: str = "robust",
        kernel: KernelSpec | None = None,
        smoother: LocalFitConfig | None = None,
        gm: GMConfig | None = None) -> PLMFit:
    """Fit the partially linear model at a fixed bandwidth.

    Classical mode uses identity-score smoothing and least squares
    throughout; robust mode uses the configured score both locally and in
    the regression step.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    kernel = kernel or KernelSpec.quadratic()
    smoother = smoother or LocalFitConfig()
    gm = gm or GMConfig()
    h = check_bandwidth(dataset.manifold, bandwidth)
    cfg = _smoothing_config(mode, smoother, h)

    columns = np.column_stack([dataset.y, dataset.x]) if dataset.p else dataset.y[:, None]
    est, fl = smooth_columns(dataset.manifold, kernel, cfg, dataset.t, columns)
    stuck = np.flatnonzero((fl == 2).any(axis=1))
    if stuck.size:
        raise ConvergenceError(
            f"local smoothing did not converge at sample indices {stuck.tolist()}",
            indices=stuck.tolist(),
        )
    phi0 = est[:, 0]
    phi = est[:, 1:]

    r = dataset.y - phi0
    eta = dataset.x - phi
    if dataset.p:
        col_scale = np.maximum(1.0, np.linalg.norm(dataset.x, axis=0))
        dead = np.linalg.norm(eta, axis=0) <= 1e-10 * col_scale
        if np.any(dead):
            raise SingularDesignError(
                "smoothing annihilated covariate column(s) "
                f"{np.flatnonzero(dead).tolist()}; the bandwidth is too small "
                "to identify the regression coefficients"
            )
        reg = ols_estimate(r, eta) if mode == "classical" else gm_estimate(r, eta, gm)
    else:
        reg = _null_regression(r)

    beta = reg.beta
    g_hat = phi0 - phi @ beta
    residuals = reg.residuals
    degenerate = sorted(set(np.flatnonzero((fl == 1).any(axis=1)).tolist()))
    flags = {
        "degenerate_windows": degenerate,
        "regression_converged": reg.converged,
        "regression_iterations": reg.iterations,
    }
    return PLMFit(
        beta=beta,
        phi0_hat=phi0,
        phi_hat=phi,
        g_hat=g_hat,
        residuals=residuals,
        scale=reg.scale,
        bandwidth=h,
        mode=mode,
        flags=flags,
        regression=reg,
        dataset=dataset,
        kernel=kernel,
        smoother_config=cfg,
        gm_config=None if mode == "classical" else gm,
    )


def _null_regression(r: np.ndarray) -> RegressionResult:
    # p = 0: nothing to regress, the smoothed residuals are the errors
    try:
        scale = residual_scale(r) if r.size >= 2 else 0.0
    except DegenerateScaleError:
        scale = 0.0
    return RegressionResult(np.zeros(0), scale, r.copy(), True, 0, None, "none")


def predict_g(fit_result: PLMFit, t):
    """Evaluate the fitted nonparametric component at new manifold points.

    Accepts a single point (returns a float) or a batch (returns a vector).
    Raises EmptyWindowError with the nearest-training-point distance when a
    query falls outside every kernel window.
    """
    ds = fit_result.dataset
    coords = as_coords(t)
    single = coords.ndim == 1
    queries = validate_coords(ds.manifold, coords, name="query")
    columns = np.column_stack([ds.y, ds.x]) if ds.p else ds.y[:, None]
    est, fl = smooth_columns(ds.manifold, fit_result.kernel,
                             fit_result.smoother_config, ds.t, columns,
                             queries=queries)
    bad = np.flatnonzero((fl == 2).any(axis=1))
    if bad.size:
        raise ConvergenceError(
            f"local smoothing did not converge at query indices {bad.tolist()}",
            indices=bad.tolist(),
        )
    g = est[:, 0] - est[:, 1:] @ fit_result.beta
    return float(g[0]) if single else g


def predict_y(fit_result: PLMFit, x, t):
    """Predicted response x' beta + g(t)."""
    x = np.asarray(x, dtype=float)
    p = fit_result.dataset.p
    single = x.ndim <= 1 and as_coords(t).ndim == 1
    xmat = x.reshape(-1, p) if p else np.zeros((np.atleast_2d(as_coords(t)).shape[0], 0))
    g = predict_g(fit_result, t)
    out = xmat @ fit_result.beta + np.atleast_1d(g)
    return float(out[0]) if single else out
