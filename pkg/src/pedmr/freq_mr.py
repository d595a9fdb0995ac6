"""Summary-statistic MR estimators: median, IVW, and Egger families.

All eleven variants operate on per-instrument association summaries
(:class:`pedmr.dataset.SummaryStats`) and report on the log-odds-ratio
scale.  Conventions fixed here and surfaced as arguments:

* penalized weights multiply the base weight by min(1, q_j), where q_j is
  the upper-tail chi-square(1) probability of the instrument's
  heterogeneity contribution at the corresponding unpenalized estimate;
* robust fits use iteratively reweighted least squares with the Tukey
  biweight (tuning constant 4.685) and a sandwich standard error;
* median-family standard errors come from a seeded parametric bootstrap
  (2000 resamples), with the CI taken from bootstrap percentiles;
* Wald-type confidence intervals are estimate +/- 1.96 * se.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from pedmr.dataset import SummaryStats

METHODS = (
    "simple_median",
    "weighted_median",
    "penalized_weighted_median",
    "ivw",
    "penalized_ivw",
    "robust_ivw",
    "penalized_robust_ivw",
    "egger",
    "penalized_egger",
    "robust_egger",
    "penalized_robust_egger",
)

TUKEY_C = 4.685
ROBUST_MAX_ITER = 200
ROBUST_TOL = 1e-10
BOOTSTRAP_DEFAULT = 2000
Z95 = 1.96


@dataclass(frozen=True)
class FreqEstimate:
    """One estimator's output on the log-odds-ratio scale."""

    method: str
    estimate: float
    se: float
    ci_low: float
    ci_high: float
    p_value: float
    intercept: float | None = None
    intercept_se: float | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.se <= 0:
            raise ValueError(f"{self.method}: se must be positive")
        if not self.ci_low <= self.estimate <= self.ci_high:
            raise ValueError(f"{self.method}: CI does not bracket the estimate")


def ratio_estimates(s: SummaryStats):
    """Per-instrument Wald ratios and first-order standard errors."""
    zero = np.flatnonzero(s.beta_x == 0.0)
    if zero.size:
        bad = [s.snp_ids[j] for j in zero]
        raise ValueError(f"zero exposure association for instruments {bad}")
    ratio = s.beta_y / s.beta_x
    se = s.se_y / np.abs(s.beta_x)
    return ratio, se


def _wald(method, estimate, se, intercept=None, intercept_se=None) -> FreqEstimate:
    p = 2.0 * stats.norm.sf(abs(estimate) / se)
    return FreqEstimate(method=method, estimate=float(estimate), se=float(se),
                        ci_low=float(estimate - Z95 * se),
                        ci_high=float(estimate + Z95 * se), p_value=float(p),
                        intercept=intercept, intercept_se=intercept_se)


def _penalized_weights(w, resid):
    """Multiply weights by min(1, q), q the chi-square(1) tail of w * resid^2."""
    q = stats.chi2.sf(w * resid ** 2, df=1)
    return w * np.minimum(1.0, q)


def _tukey_weight(u):
    t = np.zeros_like(u)
    inside = np.abs(u) < TUKEY_C
    t[inside] = (1.0 - (u[inside] / TUKEY_C) ** 2) ** 2
    return t


def _tukey_psi(u):
    return np.where(np.abs(u) < TUKEY_C, u * (1.0 - (u / TUKEY_C) ** 2) ** 2, 0.0)


def _tukey_psi_prime(u):
    t = u / TUKEY_C
    return np.where(np.abs(u) < TUKEY_C, (1.0 - t ** 2) * (1.0 - 5.0 * t ** 2), 0.0)


def _mad_scale(resid):
    # centered at zero: residuals are model-centered already, and this keeps
    # the fit invariant under per-instrument sign flips
    scale = np.median(np.abs(resid)) / 0.6745
    if scale <= 0.0:
        scale = np.mean(np.abs(resid)) / 0.7979
    return max(scale, 1e-12)


def _wls(design, by, w):
    dw = design * w[:, None]
    xtwx = design.T @ dw
    coef = np.linalg.solve(xtwx, dw.T @ by)
    return coef, xtwx


def _robust_fit(design, by, w):
    """Tukey-biweight IRLS with base weights w; returns (coef, cov)."""
    coef, _ = _wls(design, by, w)
    for _ in range(ROBUST_MAX_ITER):
        resid = np.sqrt(w) * (by - design @ coef)
        scale = _mad_scale(resid)
        u = resid / scale
        new_coef, _ = _wls(design, by, w * _tukey_weight(u))
        if np.max(np.abs(new_coef - coef)) < ROBUST_TOL * max(1.0, np.max(np.abs(coef))):
            coef = new_coef
            break
        coef = new_coef
    else:
        raise RuntimeError("robust IRLS did not converge in 200 iterations")
    resid = np.sqrt(w) * (by - design @ coef)
    scale = _mad_scale(resid)
    u = resid / scale
    a = design.T @ (design * (w * _tukey_psi_prime(u))[:, None])
    b = design.T @ (design * (w * _tukey_psi(u) ** 2)[:, None]) * scale ** 2
    a_inv = np.linalg.inv(a)
    return coef, a_inv @ b @ a_inv.T


def ivw(s: SummaryStats, penalized: bool = False, robust: bool = False) -> FreqEstimate:
    """Inverse-variance weighted estimate: regression of the outcome
    associations on the exposure associations through the origin with
    weights 1/se_y^2.

    For J >= 2 the Wald SE carries a multiplicative overdispersion factor
    max(1, Q/(J-1)); a single instrument reduces exactly to its ratio
    estimate.
    """
    j = s.n_snps
    if j < 1:
        raise ValueError("IVW requires at least one instrument")
    bx, by, w = s.beta_x, s.beta_y, 1.0 / s.se_y ** 2
    base = float(np.sum(w * bx * by) / np.sum(w * bx * bx))
    if penalized:
        w = _penalized_weights(w, by - base * bx)
    name = ("penalized_" if penalized else "") + ("robust_" if robust else "") + "ivw"
    if robust:
        coef, cov = _robust_fit(bx[:, None], by, w)
        return _wald(name, coef[0], np.sqrt(cov[0, 0]))
    est = float(np.sum(w * bx * by) / np.sum(w * bx * bx))
    info = float(np.sum(w * bx * bx))
    if j >= 2:
        q = float(np.sum(w * (by - est * bx) ** 2))
        dispersion = max(1.0, q / (j - 1))
    else:
        dispersion = 1.0
    return _wald(name, est, np.sqrt(dispersion / info))


def egger(s: SummaryStats, penalized: bool = False, robust: bool = False) -> FreqEstimate:
    """MR-Egger: weighted regression with a free pleiotropy intercept.

    Orientation is fixed by sign-flipping both legs so every exposure
    association is non-negative.  The slope is the causal estimate; the
    intercept (reported with its SE) is the average-pleiotropy diagnostic.
    """
    j = s.n_snps
    if j < 3:
        raise ValueError("MR-Egger requires at least three instruments")
    flip = np.where(s.beta_x < 0, -1.0, 1.0)
    bx, by, w = flip * s.beta_x, flip * s.beta_y, 1.0 / s.se_y ** 2
    if np.ptp(bx) == 0.0:
        raise ValueError("degenerate design: no variation in |beta_x|")
    design = np.column_stack([np.ones(j), bx])
    coef, xtwx = _wls(design, by, w)
    if penalized:
        w = _penalized_weights(w, by - design @ coef)
    name = ("penalized_" if penalized else "") + ("robust_" if robust else "") + "egger"
    if robust:
        coef, cov = _robust_fit(design, by, w)
        return _wald(name, coef[1], np.sqrt(cov[1, 1]),
                     intercept=float(coef[0]), intercept_se=float(np.sqrt(cov[0, 0])))
    coef, xtwx = _wls(design, by, w)
    resid = by - design @ coef
    q = float(np.sum(w * resid ** 2))
    dispersion = max(1.0, q / (j - 2))
    cov = dispersion * np.linalg.inv(xtwx)
    return _wald(name, coef[1], np.sqrt(cov[1, 1]),
                 intercept=float(coef[0]), intercept_se=float(np.sqrt(cov[0, 0])))


def weighted_median_value(values, weights) -> float:
    """Weighted median with midpoint cumulative weights and linear
    interpolation at the 0.5 crossing."""
    order = np.argsort(values)
    v = np.asarray(values, dtype=float)[order]
    w = np.asarray(weights, dtype=float)[order]
    cum = (np.cumsum(w) - 0.5 * w) / np.sum(w)
    if 0.5 <= cum[0]:
        return float(v[0])
    if 0.5 >= cum[-1]:
        return float(v[-1])
    k = int(np.searchsorted(cum, 0.5, side="right")) - 1
    return float(v[k] + (v[k + 1] - v[k]) * (0.5 - cum[k]) / (cum[k + 1] - cum[k]))


def _median_point_estimate(bx, by, se_x, se_y, variant):
    ratio = by / bx
    if variant == "simple":
        return weighted_median_value(ratio, np.ones_like(ratio))
    w = (np.abs(bx) / se_y) ** 2  # 1 / se_ratio^2
    if variant == "penalized_weighted":
        est = weighted_median_value(ratio, w)
        w = _penalized_weights(w, ratio - est)
    return weighted_median_value(ratio, w)


def median_mr(s: SummaryStats, variant: str = "weighted",
              n_boot: int = BOOTSTRAP_DEFAULT, seed: int = 0) -> FreqEstimate:
    """Median-family estimators over the per-instrument ratio estimates.

    ``variant`` is one of ``simple``, ``weighted``, ``penalized_weighted``.
    The SE is the standard deviation of a parametric bootstrap that
    redraws both association legs; the 95% CI uses bootstrap percentiles.
    """
    if variant not in ("simple", "weighted", "penalized_weighted"):
        raise ValueError(f"unknown median variant {variant!r}")
    if s.n_snps < 3:
        warnings.warn("median estimators are unreliable with fewer than 3 instruments",
                      stacklevel=2)
    ratio_estimates(s)  # validates beta_x != 0
    # canonical orientation (beta_x >= 0) keeps the seeded bootstrap
    # invariant under per-instrument sign flips
    sgn = np.where(s.beta_x < 0, -1.0, 1.0)
    beta_x, beta_y = sgn * s.beta_x, sgn * s.beta_y
    est = _median_point_estimate(beta_x, beta_y, s.se_x, s.se_y, variant)

    rng = np.random.default_rng(seed)
    boot = np.empty(n_boot)
    for b in range(n_boot):
        bx = rng.normal(beta_x, s.se_x)
        by = rng.normal(beta_y, s.se_y)
        bx[bx == 0.0] = 1e-300
        boot[b] = _median_point_estimate(bx, by, s.se_x, s.se_y, variant)
    se = float(boot.std(ddof=1))
    ci_low, ci_high = np.percentile(boot, [2.5, 97.5])
    p = 2.0 * stats.norm.sf(abs(est) / se)
    name = "simple_median" if variant == "simple" else f"{variant}_median"
    return FreqEstimate(method=name, estimate=float(est), se=se,
                        ci_low=float(min(ci_low, est)), ci_high=float(max(ci_high, est)),
                        p_value=float(p))


def all_estimates(s: SummaryStats, n_boot: int = BOOTSTRAP_DEFAULT,
                  seed: int = 0) -> list[FreqEstimate]:
    """All eleven estimators in the conventional reporting order."""
    out = [
        median_mr(s, "simple", n_boot=n_boot, seed=seed),
        median_mr(s, "weighted", n_boot=n_boot, seed=seed),
        median_mr(s, "penalized_weighted", n_boot=n_boot, seed=seed),
    ]
    for penalized, robust in ((False, False), (True, False), (False, True), (True, True)):
        out.append(ivw(s, penalized=penalized, robust=robust))
    for penalized, robust in ((False, False), (True, False), (False, True), (True, True)):
        out.append(egger(s, penalized=penalized, robust=robust))
    return out
