"""Sandwich covariance, confidence intervals and Wald tests for the linear part.

The asymptotic covariance of the regression coefficients has the sandwich
form s^2 A^{-1} Sigma A^{-1} / n with

    A     = (1/n) sum_i psi'(e_i/s) w1(||eta_i||) eta_i eta_i'
    Sigma = [(1/n) sum_i psi(e_i/s)^2] (1/n) sum_i w1(||eta_i||)^2 eta_i eta_i'

estimated by plugging in fitted residuals and smoothed covariate residuals.
With the identity score and unit weights this collapses to the classical
least-squares covariance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2, norm

from .errors import DegenerateScaleError, DegenerateTestError, SingularMatrixError
from .plm import PLMFit
from .robust_linear import GMConfig, WeightFunction
from .smoother import ScoreFunction

_COND_LIMIT = 1e12


@dataclass
class AsymptoticCovariance:
    """Plug-in sandwich covariance with its ingredients.

    ``V_hat`` equals scale^2 A_hat^{-1} Sigma_hat A_hat^{-1} / n_obs and
    ``se`` is the square root of its diagonal.
    """

    A_hat: np.ndarray
    Sigma_hat: np.ndarray
    V_hat: np.ndarray
    se: np.ndarray
    scale: float
    n_obs: int


def _sym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def estimate_covariance(fit: PLMFit, gm: GMConfig | None = None) -> AsymptoticCovariance:
    """Sandwich covariance of the fitted regression coefficients.

    Classical fits use the identity-score reduction regardless of ``gm``.
    Raises SingularMatrixError when the A matrix is numerically singular.
    """
    ds = fit.dataset
    if ds.p == 0:
        raise ValueError("the fit has no linear coefficients")
    eta = ds.x - fit.phi_hat
    eps = fit.residuals
    n = ds.n

    classical = fit.mode == "classical"
    gm = gm or fit.gm_config or GMConfig()
    score = ScoreFunction.identity() if classical else gm.score
    w1 = WeightFunction.one() if classical else gm.w1

    if score.code == 0:
        s = float(np.sqrt(np.mean(eps ** 2)))
    else:
        s = float(fit.scale)
    if s <= 0.0:
        if np.max(np.abs(eps), initial=0.0) > 1e-10:
            raise DegenerateScaleError(
                "fit scale is zero but residuals are not; covariance undefined"
            )
        u = np.zeros_like(eps)
    else:
        u = eps / s

    norms = np.linalg.norm(eta, axis=1)
    w = w1.weights(norms)
    A = _sym((eta * (score.psi_prime(u) * w)[:, None]).T @ eta / n)
    M = _sym((eta * (w ** 2)[:, None]).T @ eta / n)
    Sigma = float(np.mean(score.psi(u) ** 2)) * M

    if not np.all(np.isfinite(A)) or np.linalg.cond(A) > _COND_LIMIT:
        raise SingularMatrixError(
            "the A matrix of the sandwich is numerically singular "
            f"(condition number above {_COND_LIMIT:g})"
        )
    Ainv = np.linalg.solve(A, np.eye(ds.p))
    V = _sym(s ** 2 * Ainv @ Sigma @ Ainv / n)
    se = np.sqrt(np.clip(np.diag(V), 0.0, None))
    return AsymptoticCovariance(A, Sigma, V, se, s, n)


def confidence_interval(beta, cov: AsymptoticCovariance, level: float = 0.95) -> np.ndarray:
    """Wald intervals beta_j +/- z_{(1+level)/2} se_j, one row per coefficient."""
    if not 0.0 < level < 1.0:
        raise ValueError("confidence level must be in (0, 1)")
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    z = norm.ppf(0.5 + level / 2.0)
    return np.column_stack([beta - z * cov.se, beta + z * cov.se])


def wald_test(beta, cov: AsymptoticCovariance, null) -> tuple[float, float]:
    """Two-sided Wald test of beta = null.

    Scalar coefficients give a normal z test; several coefficients give the
    quadratic-form chi-squared test.  Rejection at level alpha is exactly
    dual to the (1 - alpha) confidence interval.
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    null = np.broadcast_to(np.atleast_1d(np.asarray(null, dtype=float)), beta.shape)
    p = beta.size
    if p == 1:
        se = float(cov.se[0])
        if se <= 0.0:
            raise DegenerateTestError("standard error is zero; the z test is undefined")
        z = (float(beta[0]) - float(null[0])) / se
        return z, float(2.0 * norm.sf(abs(z)))
    if not np.all(np.isfinite(cov.V_hat)) or np.linalg.cond(cov.V_hat) > _COND_LIMIT:
        raise SingularMatrixError("covariance matrix is numerically singular")
    d = beta - null
    stat = float(d @ np.linalg.solve(cov.V_hat, d))
    return stat, float(chi2.sf(stat, p))
