"""Kernel-weighted local statistics and robust local M-smoothers.

The local fit at a query point composes three pieces: normalized kernel
weights built from geodesic distances and the volume density, a weighted
median / weighted MAD pair giving the robust local scale, and a score
equation solved by bisection (monotone scores) or reweighting (redescending
scores).  With the identity score and no scale step the smoother reduces to
the classical kernel-weighted mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import _kernels
from .errors import ConvergenceError, EmptyWindowError
from .manifold import (
    Manifold,
    as_coords,
    cross_distances,
    injectivity_radius,
    pairwise_distances,
    validate_coords,
    volume_density_from_distance,
)

_MEDIAN_EPS = 1e-12

HUBER_DEFAULT_C = 1.345
BISQUARE_DEFAULT_C = 4.685
MAD_CONSISTENCY = 1.4826


@dataclass(frozen=True)
class KernelSpec:
    """Nonnegative kernel with compact support [0, 1].

    The quadratic family is built in; other families plug in through
    ``evaluator``, a vectorized map u >= 0 -> K(u) with K(u) = 0 for u >= 1.
    """

    family: str = "quadratic"
    evaluator: Callable | None = None

    @classmethod
    def quadratic(cls) -> "KernelSpec":
        return cls("quadratic")

    def evaluate(self, u):
        u = np.asarray(u, dtype=float)
        if self.family == "quadratic":
            out = np.zeros_like(u)
            inside = np.abs(u) < 1.0
            t = 1.0 - u[inside] ** 2
            out[inside] = 0.9375 * t * t
            return out
        if self.evaluator is None:
            raise ValueError(f"kernel family {self.family!r} has no evaluator")
        return np.asarray(self.evaluator(u), dtype=float)

    def validate(self, n_grid: int = 201) -> None:
        """Spot-check compact support, nonnegativity and boundedness."""
        u = np.linspace(0.0, 2.0, n_grid)
        k = self.evaluate(u)
        if np.any(k < 0):
            raise ValueError("kernel must be nonnegative")
        if np.any(k[u >= 1.0] != 0.0):
            raise ValueError("kernel must vanish outside [0, 1]")
        if not np.all(np.isfinite(k)):
            raise ValueError("kernel must be bounded")


def _huber_psi(c):
    def psi(u):
        return np.clip(u, -c, c)

    def psi_prime(u):
        return (np.abs(np.asarray(u, dtype=float)) < c).astype(float)

    return psi, psi_prime


def _bisquare_psi(c):
    def psi(u):
        u = np.asarray(u, dtype=float)
        z = u / c
        t = 1.0 - z * z
        return np.where(np.abs(u) < c, u * t * t, 0.0)

    def psi_prime(u):
        u = np.asarray(u, dtype=float)
        z2 = (u / c) ** 2
        return np.where(np.abs(u) < c, (1.0 - z2) * (1.0 - 5.0 * z2), 0.0)

    return psi, psi_prime


@dataclass(frozen=True)
class ScoreFunction:
    """Score psi with derivative, used in the local and regression M-equations.

    ``monotone`` selects the bisection solve path; redescending scores go
    through the reweighting fixed point instead.  Derivatives at the huber
    kinks |u| = c take the outer-branch value 0.
    """

    name: str
    c: float | None
    monotone: bool
    code: int  # dispatch for the batched kernels; -1 means a custom callable
    psi_fn: Callable
    psi_prime_fn: Callable

    @classmethod
    def identity(cls) -> "ScoreFunction":
        return cls("identity", None, True, 0, lambda u: np.asarray(u, dtype=float),
                   lambda u: np.ones_like(np.asarray(u, dtype=float)))

    @classmethod
    def huber(cls, c: float = HUBER_DEFAULT_C) -> "ScoreFunction":
        psi, psi_prime = _huber_psi(float(c))
        return cls("huber", float(c), True, 1, psi, psi_prime)

    @classmethod
    def bisquare(cls, c: float = BISQUARE_DEFAULT_C) -> "ScoreFunction":
        psi, psi_prime = _bisquare_psi(float(c))
        return cls("bisquare", float(c), False, 2, psi, psi_prime)

    @classmethod
    def custom(cls, name: str, psi: Callable, psi_prime: Callable,
               monotone: bool = False) -> "ScoreFunction":
        return cls(name, None, monotone, -1, psi, psi_prime)

    def psi(self, u):
        return self.psi_fn(np.asarray(u, dtype=float))

    def psi_prime(self, u):
        return self.psi_prime_fn(np.asarray(u, dtype=float))

    def validate(self) -> None:
        """Sampled checks of the score assumptions.

        Oddness to 1e-12; monotonicity for scores that claim it; the huber
        bound |psi| <= c; derivative against centered differences to 1e-6 on
        a grid that avoids the kink points.
        """
        ref = self.c if self.c else 2.0
        u = np.linspace(0.05, 4.0 * ref, 160)
        if np.max(np.abs(self.psi(-u) + self.psi(u))) > 1e-12:
            raise ValueError(f"score {self.name!r} is not odd")
        if self.monotone:
            grid = np.linspace(-4.0 * ref, 4.0 * ref, 321)
            if np.any(np.diff(self.psi(grid)) < -1e-12):
                raise ValueError(f"score {self.name!r} must be nondecreasing")
        if self.name == "huber":
            wide = np.linspace(-50.0, 50.0, 501)
            if np.max(np.abs(self.psi(wide))) > self.c + 1e-12:
                raise ValueError("huber score must be bounded by its constant")
        grid = np.linspace(-3.0 * ref, 3.0 * ref, 97)
        if self.c is not None:
            grid = grid[np.abs(np.abs(grid) - self.c) > 0.05]
        h = 1e-6
        fd = (self.psi(grid + h) - self.psi(grid - h)) / (2.0 * h)
        if np.max(np.abs(fd - self.psi_prime(grid))) > 1e-6:
            raise ValueError(
                f"score {self.name!r}: psi_prime disagrees with finite differences"
            )


@dataclass(frozen=True)
class LocalFitConfig:
    """Settings for the local robust fit.

    ``bandwidth`` may stay None here and be supplied by the caller (the
    model-level fit and the bandwidth selector vary it).
    """

    bandwidth: float | None = None
    score: ScoreFunction = field(default_factory=ScoreFunction.huber)
    mad_constant: float = MAD_CONSISTENCY
    tol: float = 1e-10
    max_iterations: int = 200

    def __post_init__(self):
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if not self.tol > 0:
            raise ValueError("solver tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.mad_constant > 0:
            raise ValueError("mad_constant must be positive")
        self.score.validate()


def check_bandwidth(manifold: Manifold, h: float) -> float:
    h = float(h)
    inj = injectivity_radius(manifold)
    if not 0.0 < h < inj:
        raise ValueError(
            f"bandwidth {h!r} must lie in (0, {inj}) for the {manifold.kind}"
        )
    return h


def _check_weight_pair(weights, values):
    w = np.asarray(weights, dtype=float).ravel()
    v = np.asarray(values, dtype=float).ravel()
    if w.size != v.size:
        raise ValueError(f"length mismatch: {w.size} weights vs {v.size} values")
    if w.size == 0:
        raise ValueError("need at least one observation")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    if abs(w.sum() - 1.0) > 1e-8:
        raise ValueError("weights must sum to 1")
    return w, v


def raw_weight_matrix(manifold: Manifold, kernel: KernelSpec, h: float,
                      distances: np.ndarray) -> np.ndarray:
    """Unnormalized kernel weights K(d/h) / volume density, elementwise."""
    k = kernel.evaluate(distances / h)
    if manifold.kind == "sphere":
        pos = k > 0
        theta = volume_density_from_distance(manifold, distances[pos])
        k[pos] = k[pos] / theta
    return k


def pelletier_weights(manifold: Manifold, kernel: KernelSpec, h: float,
                      t, sample) -> np.ndarray:
    """Normalized kernel weights of the sample points relative to t.

    Raises EmptyWindowError (carrying the nearest-neighbor distance) when no
    sample point falls within bandwidth h of t.
    """
    h = check_bandwidth(manifold, h)
    tq = validate_coords(manifold, as_coords(t), name="query")
    pts = validate_coords(manifold, sample, name="sample")
    d = cross_distances(manifold, tq, pts)[0]
    raw = raw_weight_matrix(manifold, kernel, h, d[None, :])[0]
    total = raw.sum()
    if total <= 0.0:
        nearest = float(d.min())
        raise EmptyWindowError(
            f"no sample point within bandwidth {h} of the query "
            f"(nearest at distance {nearest:.6g})",
            nearest_distance=nearest,
        )
    return raw / total


class ConditionalECDF:
    """Right-continuous weighted empirical distribution function."""

    def __init__(self, weights, values):
        w, v = _check_weight_pair(weights, values)
        order = np.argsort(v, kind="stable")
        self.support = v[order]
        self.cumulative = np.cumsum(w[order])

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        idx = np.searchsorted(self.support, y, side="right")
        padded = np.concatenate([[0.0], self.cumulative])
        out = padded[idx]
        return float(out) if out.ndim == 0 else out


def conditional_ecdf(weights, values) -> ConditionalECDF:
    """Weighted conditional ECDF as a callable step function."""
    return ConditionalECDF(weights, values)


def weighted_median(weights, values) -> float:
    """Smallest value whose cumulative weight reaches 1/2."""
    w, v = _check_weight_pair(weights, values)
    order = np.argsort(v, kind="stable")
    cum = np.cumsum(w[order])
    k = int(np.searchsorted(cum, 0.5 - _MEDIAN_EPS, side="left"))
    k = min(k, v.size - 1)
    return float(v[order][k])


def local_mad(weights, values, consistency_constant: float = MAD_CONSISTENCY) -> float:
    """Weighted median absolute deviation from the weighted median.

    Returns 0.0 when the window is locally degenerate; callers decide how to
    react (the smoother falls back to the weighted median and flags the
    query point).
    """
    w, v = _check_weight_pair(weights, values)
    med = weighted_median(w, v)
    return consistency_constant * weighted_median(w, np.abs(v - med))


def _solve_monotone(w, v, score: ScoreFunction, scale: float, tol: float,
                    maxiter: int) -> float:
    sup = w > 0
    lo = float(v[sup].min())
    hi = float(v[sup].max())
    if hi <= lo:
        return lo
    g = None
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        g = float(w @ score.psi((v - mid) / scale))
        if g > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            return 0.5 * (lo + hi)
    raise ConvergenceError(
        f"bisection did not reach tolerance {tol} in {maxiter} iterations",
        last_iterate=0.5 * (lo + hi),
        residual=g,
    )


def _solve_redescending(w, v, score: ScoreFunction, scale: float, tol: float,
                        maxiter: int) -> float:
    m = weighted_median(w, v)
    step = None
    for _ in range(maxiter):
        u = (v - m) / scale
        pw = np.empty_like(u)
        small = np.abs(u) <= 1e-10
        pw[small] = float(score.psi_prime(0.0))
        pw[~small] = score.psi(u[~small]) / u[~small]
        tw = w * pw
        den = tw.sum()
        if den <= 0.0:
            raise ConvergenceError(
                "all observations received zero local weight", last_iterate=m
            )
        m_new = float(tw @ v / den)
        step = abs(m_new - m)
        m = m_new
        if step <= tol:
            return m
    raise ConvergenceError(
        f"reweighting did not converge in {maxiter} iterations",
        last_iterate=m,
        residual=step,
    )


def local_m_estimate(weights, values, score: ScoreFunction, scale: float,
                     tol: float = 1e-10, max_iterations: int = 200) -> float:
    """Solve sum_i w_i psi((v_i - m) / scale) = 0 for the local location m.

    The identity score short-circuits to the weighted mean.  Monotone scores
    are bracketed by [min v, max v] and solved by bisection; redescending
    scores iterate a reweighting fixed point started from the weighted
    median.
    """
    w, v = _check_weight_pair(weights, values)
    if score.code == 0:
        return float(w @ v)
    if not scale > 0:
        raise ValueError("scale must be positive")
    if score.monotone:
        return _solve_monotone(w, v, score, float(scale), tol, max_iterations)
    return _solve_redescending(w, v, score, float(scale), tol, max_iterations)


def smooth_columns(manifold: Manifold, kernel: KernelSpec, config: LocalFitConfig,
                   sample: np.ndarray, columns: np.ndarray,
                   queries: np.ndarray | None = None,
                   leave_one_out: bool = False,
                   distances: np.ndarray | None = None):
    """Smooth several value columns at once, sharing the weight matrix.

    ``sample`` are validated training coordinates, ``columns`` an (n, k)
    value matrix, ``queries`` validated query coordinates (defaults to the
    sample itself).  ``leave_one_out`` zeroes the diagonal weight, which
    requires queries == sample.  Returns (estimates, flags), both of shape
    (n_queries, k); flag 1 marks a degenerate local MAD (weighted-median
    fallback), flag 2 a solver that ran out of iterations.

    Raises EmptyWindowError listing every query index whose window is empty
    together with the smallest bandwidth that would cover them all.
    """
    h = check_bandwidth(manifold, config.bandwidth)
    columns = np.asarray(columns, dtype=float)
    if columns.ndim == 1:
        columns = columns[:, None]
    if queries is None:
        queries = sample
    if distances is None:
        if queries is sample:
            distances = pairwise_distances(manifold, sample)
        else:
            distances = cross_distances(manifold, queries, sample)

    W = raw_weight_matrix(manifold, kernel, h, distances)
    if leave_one_out:
        W = W.copy()
        np.fill_diagonal(W, 0.0)
    totals = W.sum(axis=1)
    empty = np.flatnonzero(totals <= 0.0)
    if empty.size:
        d = distances
        if leave_one_out:
            d = distances.copy()
            np.fill_diagonal(d, np.inf)
        nearest = d[empty].min(axis=1)
        h_min = float(nearest.max())
        raise EmptyWindowError(
            f"empty kernel window at query indices {empty.tolist()}; "
            f"the bandwidth must exceed {h_min:.6g}",
            nearest_distance=h_min,
            indices=empty.tolist(),
        )

    nq, k = W.shape[0], columns.shape[1]
    estimates = np.empty((nq, k))
    flags = np.zeros((nq, k), dtype=np.int8)
    score = config.score
    for j in range(k):
        v = columns[:, j]
        if score.code == 0:
            estimates[:, j] = (W @ v) / totals
            continue
        if score.code > 0:
            order = np.argsort(v)
            est, fl = _kernels.local_m_rows(
                W, v, order, score.code, score.c, config.mad_constant,
                config.tol, config.max_iterations,
            )
            estimates[:, j] = est
            flags[:, j] = fl
            continue
        # custom score: per-row python path
        Wn = W / totals[:, None]
        for q in range(nq):
            w = Wn[q]
            med = weighted_median(w, v)
            mad = local_mad(w, v, config.mad_constant)
            if mad <= 0.0:
                estimates[q, j] = med
                flags[q, j] = 1
                continue
            try:
                if score.monotone:
                    estimates[q, j] = _solve_monotone(
                        w, v, score, mad, config.tol, config.max_iterations)
                else:
                    estimates[q, j] = _solve_redescending(
                        w, v, score, mad, config.tol, config.max_iterations)
            except ConvergenceError as err:
                estimates[q, j] = err.last_iterate if err.last_iterate is not None else med
                flags[q, j] = 2
    return estimates, flags


def fit_smoother(manifold: Manifold, kernel: KernelSpec, config: LocalFitConfig,
                 sample, values, queries, return_flags: bool = False):
    """Robust local fit of one value column at the given query points.

    With the identity score this is exactly the classical kernel-weighted
    mean (no scale step).  Degenerate windows fall back to the weighted
    median and are flagged; solver non-convergence raises ConvergenceError
    tagged with the query indices.
    """
    sample = validate_coords(manifold, sample, name="sample")
    queries = validate_coords(manifold, queries, name="query")
    values = np.asarray(values, dtype=float).ravel()
    if values.size != sample.shape[0]:
        raise ValueError(
            f"length mismatch: {sample.shape[0]} sample points vs {values.size} values"
        )
    est, flags = smooth_columns(manifold, kernel, config, sample, values,
                                queries=queries)
    bad = np.flatnonzero(flags[:, 0] == 2)
    if bad.size:
        raise ConvergenceError(
            f"local M-estimation did not converge at query indices {bad.tolist()}",
            indices=bad.tolist(),
        )
    if return_flags:
        return est[:, 0], flags[:, 0]
    return est[:, 0]


def classical_config(config: LocalFitConfig) -> LocalFitConfig:
    """The identity-score version of a local fit configuration."""
    return replace(config, score=ScoreFunction.identity())
