"""Kinship-adjusted association estimation.

``lmm_fit`` maximizes the likelihood of a single-variance-component model
y = mu + x*b + g + e with cov(g) = sigma_g^2 * phi2 and cov(e) =
sigma_e^2 * I.  The relationship matrix is eigendecomposed once; on the
rotated data the covariance is diagonal, so (mu, b, sigma_e^2) profile out
analytically and only the variance ratio lambda = sigma_g^2 / sigma_e^2
needs a 1-D search (golden section over log-lambda after a coarse grid
bracket).  Estimation is ML, not REML.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import expit

from pedmr.dataset import MRDataset, SummaryStats

LOG_LAMBDA_RANGE = (-10.0, 10.0)
GOLDEN_TOL = 1e-6
IRLS_MAX_ITER = 100
IRLS_TOL = 1e-10


class SeparationError(RuntimeError):
    """Logistic fit failed to converge (quasi-separation)."""


@dataclass(frozen=True)
class LMMResult:
    beta: float
    se: float
    sigma_g2: float
    sigma_e2: float
    p_value: float
    intercept: float
    log_lambda: float
    loglik: float


def _eigen_decompose(phi2: np.ndarray):
    """Eigendecomposition of a relationship matrix, validating PSD-ness."""
    phi2 = np.asarray(phi2, dtype=float)
    if phi2.ndim != 2 or phi2.shape[0] != phi2.shape[1]:
        raise ValueError("phi2 must be square")
    if np.max(np.abs(phi2 - phi2.T)) > 1e-8:
        raise ValueError("phi2 must be symmetric")
    s, u = np.linalg.eigh((phi2 + phi2.T) / 2.0)
    if s[0] < -1e-8 * max(s[-1], 1.0):
        raise ValueError("phi2 is not positive semidefinite")
    return np.clip(s, 0.0, None), u


def _profile(log_lambda: float, s: np.ndarray, ty: np.ndarray, td: np.ndarray):
    """Profiled ML log-likelihood and GLS coefficients at a fixed ratio."""
    lam = np.exp(log_lambda)
    n = len(ty)
    w = 1.0 / (lam * s + 1.0)
    dw = td * w[:, None]
    xtwx = td.T @ dw
    xtwy = dw.T @ ty
    coef = np.linalg.solve(xtwx, xtwy)
    resid = ty - td @ coef
    rss_w = float(resid @ (w * resid))
    sigma_e2 = rss_w / n
    loglik = -0.5 * (n * np.log(2.0 * np.pi * sigma_e2)
                     + np.sum(np.log(lam * s + 1.0)) + n)
    return loglik, coef, sigma_e2, xtwx


def _maximize_profile(s: np.ndarray, ty: np.ndarray, td: np.ndarray) -> float:
    """Coarse grid bracket followed by golden-section on log-lambda."""
    lo, hi = LOG_LAMBDA_RANGE
    grid = np.linspace(lo, hi, 41)
    vals = [_profile(g, s, ty, td)[0] for g in grid]
    k = int(np.argmax(vals))
    a = grid[max(k - 1, 0)]
    b = grid[min(k + 1, len(grid) - 1)]
    inv_gold = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - inv_gold * (b - a)
    d = a + inv_gold * (b - a)
    fc = _profile(c, s, ty, td)[0]
    fd = _profile(d, s, ty, td)[0]
    while b - a > GOLDEN_TOL:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - inv_gold * (b - a)
            fc = _profile(c, s, ty, td)[0]
        else:
            a, c, fc = c, d, fd
            d = a + inv_gold * (b - a)
            fd = _profile(d, s, ty, td)[0]
    return (a + b) / 2.0


def _lmm_fit_rotated(s: np.ndarray, ty: np.ndarray, tx: np.ndarray, t1: np.ndarray) -> LMMResult:
    td = np.column_stack([t1, tx])
    log_lambda = _maximize_profile(s, ty, td)
    loglik, coef, sigma_e2, xtwx = _profile(log_lambda, s, ty, td)
    cov = sigma_e2 * np.linalg.inv(xtwx)
    se = float(np.sqrt(cov[1, 1]))
    beta = float(coef[1])
    lam = float(np.exp(log_lambda))
    p = 2.0 * stats.norm.sf(abs(beta) / se) if se > 0 else 0.0
    return LMMResult(beta=beta, se=se, sigma_g2=lam * sigma_e2, sigma_e2=sigma_e2,
                     p_value=float(p), intercept=float(coef[0]),
                     log_lambda=float(log_lambda), loglik=float(loglik))


def lmm_fit(y: np.ndarray, x: np.ndarray, phi2: np.ndarray) -> LMMResult:
    """ML fit of the one-covariate, single-variance-component mixed model.

    Returns the Wald estimate for the covariate effect with a two-sided
    normal p-value, plus the variance components at the optimum.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.ptp(x) == 0.0:
        raise ValueError("covariate x is constant")
    s, u = _eigen_decompose(phi2)
    if len(y) != len(x) or len(y) != len(s):
        raise ValueError("dimension mismatch between y, x, and phi2")
    return _lmm_fit_rotated(s, u.T @ y, u.T @ x, u.T @ np.ones(len(y)))


def logistic_fit(y: np.ndarray, x: np.ndarray):
    """Per-instrument logistic regression of y on [1, x] by IRLS.

    Convergence is declared on a deviance change below 1e-10 within 100
    iterations; failure (typically separation) raises
    :class:`SeparationError`.  Returns ``(beta, se, p_value)``.
    """
    y = np.asarray(y, dtype=float)
    design = np.column_stack([np.ones_like(x, dtype=float), x])
    coef = np.zeros(2)
    deviance = np.inf
    for _ in range(IRLS_MAX_ITER):
        eta = design @ coef
        mu = expit(eta)
        w = mu * (1.0 - mu)
        if np.max(np.abs(coef)) > 30.0 or w.max() < 1e-12:
            raise SeparationError("coefficients diverging")
        wd = design * w[:, None]
        try:
            coef = coef + np.linalg.solve(design.T @ wd, design.T @ (y - mu))
        except np.linalg.LinAlgError as exc:
            raise SeparationError("singular working Hessian") from exc
        with np.errstate(divide="ignore", invalid="ignore"):
            eta = design @ coef
            new_dev = 2.0 * float(np.sum(np.logaddexp(0.0, eta) - y * eta))
        if abs(deviance - new_dev) < IRLS_TOL:
            deviance = new_dev
            break
        deviance = new_dev
    else:
        raise SeparationError("IRLS did not converge in 100 iterations")
    mu = expit(design @ coef)
    w = mu * (1.0 - mu)
    cov = np.linalg.inv(design.T @ (design * w[:, None]))
    se = float(np.sqrt(cov[1, 1]))
    p = 2.0 * stats.norm.sf(abs(coef[1]) / se) if se > 0 else 0.0
    return float(coef[1]), se, float(p)


def _ols_fit(y: np.ndarray, x: np.ndarray):
    """Simple regression with intercept; t-test on the slope."""
    design = np.column_stack([np.ones_like(x), x])
    xtx_inv = np.linalg.inv(design.T @ design)
    coef = xtx_inv @ (design.T @ y)
    resid = y - design @ coef
    dof = len(y) - 2
    sigma2 = float(resid @ resid) / dof
    se = float(np.sqrt(sigma2 * xtx_inv[1, 1]))
    p = 2.0 * stats.t.sf(abs(coef[1]) / se, df=dof) if se > 0 else 0.0
    return float(coef[1]), se, float(p)


def assoc_scan(d: MRDataset, phi2: np.ndarray | None = None, use_lmm: bool = False,
               outcome_leg: str = "logistic") -> SummaryStats:
    """Per-instrument association scan over both MR legs.

    The exposure leg regresses observed X on each instrument, with the
    mixed model when ``use_lmm`` (requires ``phi2`` aligned with the
    dataset rows).  The outcome leg is per-instrument logistic regression
    of Y; ``outcome_leg="linear"`` instead fits the 0/1 outcome with the
    same machinery as the exposure leg (a linear approximation on the
    log-odds scale is then NOT applied; values stay on the risk scale).
    Instruments whose logistic fit separates are dropped with a warning.
    """
    if not d.standardized:
        raise ValueError("assoc_scan expects a standardized dataset")
    if outcome_leg not in ("logistic", "linear"):
        raise ValueError("outcome_leg must be 'logistic' or 'linear'")
    obs = d.obs_mask
    x_obs = d.X[obs]
    if use_lmm:
        if phi2 is None:
            raise ValueError("use_lmm requires phi2")
        phi2 = np.asarray(phi2, dtype=float)
        if phi2.shape != (d.n, d.n):
            raise ValueError("phi2 must align with dataset rows")
        s_x, u_x = _eigen_decompose(phi2[np.ix_(obs, obs)])
        ty = u_x.T @ x_obs
        t1 = u_x.T @ np.ones(obs.sum())
        if outcome_leg == "linear":
            s_y, u_y = _eigen_decompose(phi2)
            ty_full = u_y.T @ d.Y.astype(float)
            t1_full = u_y.T @ np.ones(d.n)

    keep: list[int] = []
    dropped: list[str] = []
    bx, sx, px = [], [], []
    by, sy, py = [], [], []
    for j in range(d.n_snps):
        z = d.Z[:, j]
        if use_lmm:
            res = _lmm_fit_rotated(s_x, ty, u_x.T @ z[obs], t1)
            bxj, sxj, pxj = res.beta, res.se, res.p_value
        else:
            bxj, sxj, pxj = _ols_fit(x_obs, z[obs])
        try:
            if outcome_leg == "logistic":
                byj, syj, pyj = logistic_fit(d.Y, z)
            elif use_lmm:
                res = _lmm_fit_rotated(s_y, ty_full, u_y.T @ z, t1_full)
                byj, syj, pyj = res.beta, res.se, res.p_value
            else:
                byj, syj, pyj = _ols_fit(d.Y.astype(float), z)
        except SeparationError:
            dropped.append(d.snp_ids[j])
            warnings.warn(f"instrument {d.snp_ids[j]} dropped: logistic fit separated",
                          stacklevel=2)
            continue
        keep.append(j)
        bx.append(bxj); sx.append(sxj); px.append(pxj)
        by.append(byj); sy.append(syj); py.append(pyj)

    return SummaryStats(
        snp_ids=tuple(d.snp_ids[j] for j in keep),
        beta_x=np.array(bx), se_x=np.array(sx),
        beta_y=np.array(by), se_y=np.array(sy),
        p_x=np.array(px), p_y=np.array(py),
        dropped=tuple(dropped),
    )
