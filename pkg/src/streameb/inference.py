"""Point estimates, asymptotic variance, and credible intervals.

The point estimate is the plug-in posterior mean in ratio form,
``(y+1) p_g(y+1) / p_g(y)``.  Its uncertainty after n observations is
asymptotically Gaussian with variance ``V(y) / b_n``, where ``V(y)`` is a
predictive-expectation functional of the current weights and ``b_n`` is the
inverse tail sum of squared step sizes.  Expectations over future counts are
truncated at ``grid.hi + 20 * sqrt(grid.hi)`` by default; the Poisson tail
beyond that point is far below any tolerance used here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .engine import LearningRate, NewtonState, Schedule
from .model import (
    DegenerateLikelihoodError,
    KernelMatrixCache,
    MixingWeights,
    log_mixture_pmf,
)

_TAIL_SUM_TERMS = 200_000
_COVARIANCE_MAX_D = 200


def default_y_max(grid) -> int:
    """Truncation point for sums over future counts: hi + 20*sqrt(hi)."""
    return int(math.ceil(grid.hi + 20.0 * math.sqrt(grid.hi)))


@dataclass(frozen=True)
class EstimateReport:
    """Per-count estimate with its interval and all intermediate quantities."""

    y: int
    theta_hat: float
    variance: float
    b_n: float
    ci_low: float
    ci_high: float
    level: float

    CSV_HEADER = "y,theta_hat,variance,b_n,ci_low,ci_high,level"

    def csv_row(self) -> str:
        return (
            f"{self.y},{self.theta_hat!r},{self.variance!r},{self.b_n!r},"
            f"{self.ci_low!r},{self.ci_high!r},{self.level!r}"
        )


def ratio_estimate(g: MixingWeights, y: int, cache: KernelMatrixCache | None = None) -> float:
    """(y+1) p_g(y+1) / p_g(y); identical to the posterior mean at y."""
    log_num = log_mixture_pmf(g, y + 1, cache)
    log_den = log_mixture_pmf(g, y, cache)
    if not np.isfinite(log_den):
        raise DegenerateLikelihoodError(y)
    return float((y + 1) * math.exp(log_num - log_den))


def clt_scale(rate: LearningRate, n: int) -> float:
    """b_n = 1 / sum_{k >= n} step(k)^2 for the power schedule.

    Computed from the definition: an explicit partial sum over the first
    2e5 terms plus a midpoint-rule remainder for the rest, which is accurate
    to ~1e-9 relative.  Strictly increasing in n.
    """
    if not isinstance(rate, LearningRate):
        raise TypeError("closed-form tail sums exist only for the power schedule")
    if n < 1:
        raise ValueError("n must be at least 1")
    two_g = 2.0 * rate.gamma
    ks = rate.alpha + np.arange(n, n + _TAIL_SUM_TERMS, dtype=float)
    partial = float(np.sum(ks**-two_g))
    edge = rate.alpha + n + _TAIL_SUM_TERMS - 0.5
    remainder = edge ** (1.0 - two_g) / (two_g - 1.0)
    return 1.0 / (partial + remainder)


def validate_clt_schedule(rate: Schedule, probe: int = 4096) -> None:
    """Check the interval-construction preconditions on a schedule.

    For the power schedule this is an analytic certificate: steps are
    non-increasing and ``sum_n (step_n^2 * b_n)^2`` converges because
    ``step_n^2 * b_n`` decays like 1/n.  Other schedules get a finite probe
    of monotonicity and range; a probe cannot certify the tail condition,
    so they are rejected.
    """
    if isinstance(rate, LearningRate):
        return  # gamma in (1/2, 1] was enforced at construction
    steps = np.array([rate(n) for n in range(1, probe + 1)])
    if np.any(steps <= 0) or np.any(steps >= 1) or np.any(np.diff(steps) > 0):
        raise ValueError("schedule must be non-increasing with steps in (0, 1)")
    raise ValueError(
        "cannot certify the squared-step tail condition for a custom schedule"
    )


def _posterior_table(g: MixingWeights, y_max: int, cache: KernelMatrixCache | None):
    """Rows y=0..y_max of (pmf p(y), posterior weights given y)."""
    if cache is None:
        cache = KernelMatrixCache(g.grid)
    kernel = np.exp(cache.log_table(y_max))
    p = kernel @ g.weights
    live = p > 0
    post = np.zeros_like(kernel)
    post[live] = kernel[live] * g.weights[None, :] / p[live][:, None]
    return p, post


def asymptotic_variance(
    g: MixingWeights, y: int, y_max: int | None = None, cache: KernelMatrixCache | None = None
) -> float:
    """Variance functional driving the interval width at count y.

    theta_hat(y)^2 times the predictive second moment of
    sum_j post_j(Z) * (k(y+1|theta_j)/p(y+1) - k(y|theta_j)/p(y)),
    with Z summed up to ``y_max``.  Zero exactly for a point mass.
    """
    if y_max is None:
        y_max = default_y_max(g.grid)
    if cache is None:
        cache = KernelMatrixCache(g.grid)
    theta_hat = ratio_estimate(g, y, cache)
    kernel = np.exp(cache.log_table(max(y_max, y + 1)))
    p_y = float(kernel[y] @ g.weights)
    p_y1 = float(kernel[y + 1] @ g.weights)
    if p_y <= 0 or p_y1 <= 0:
        raise DegenerateLikelihoodError(y)
    contrast = kernel[y + 1] / p_y1 - kernel[y] / p_y
    p, post = _posterior_table(g, y_max, cache)
    s = post @ contrast
    return float(theta_hat**2 * np.dot(p[: y_max + 1], s[: y_max + 1] ** 2))


def posterior_weight_covariance(
    g: MixingWeights, y_max: int | None = None, cache: KernelMatrixCache | None = None
) -> np.ndarray:
    """Predictive covariance of the first d-1 posterior weights.

    Entry (i, j) is ``sum_z post_i(z) post_j(z) p(z) - g_i g_j``.  Symmetric
    and positive semidefinite; strictly positive definite when every weight
    is positive.  Quadratic in d, so this is refused beyond d=200; it is a
    cross-check for the variance above, never a hot path.
    """
    d = len(g.grid)
    if d > _COVARIANCE_MAX_D:
        raise ValueError(f"covariance matrix refused for d={d} > {_COVARIANCE_MAX_D}")
    if y_max is None:
        y_max = default_y_max(g.grid)
    p, post = _posterior_table(g, y_max, cache)
    full = post.T @ (p[:, None] * post) - np.outer(g.weights, g.weights)
    full = 0.5 * (full + full.T)
    return full[: d - 1, : d - 1]


def normal_quantile(p: float) -> float:
    """Standard normal inverse CDF via a rational approximation plus one
    Halley refinement; absolute error well below 1e-9."""
    if not 0.0 < p < 1.0:
        raise ValueError("quantile level must be in (0, 1)")
    # Acklam's rational approximation in three regions.
    a = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
         1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
    b = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
         6.680131188771972e01, -1.328068155288572e01)
    c = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
         -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
    d = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
         3.754408661907416e00)
    p_low, p_high = 0.02425, 1 - 0.02425
    if p < p_low:
        q = math.sqrt(-2 * math.log(p))
        x = ((((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
             / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1))
    elif p <= p_high:
        q = p - 0.5
        r = q * q
        x = ((((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
             / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1))
    else:
        q = math.sqrt(-2 * math.log(1 - p))
        x = -((((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
              / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1))
    # One Halley step against the exact CDF.
    err = 0.5 * math.erfc(-x / math.sqrt(2)) - p
    pdf = math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
    u = err / pdf
    return x - u / (1 + x * u / 2)


def credible_interval(
    state: NewtonState, y: int, level: float, y_max: int | None = None
) -> EstimateReport:
    """Asymptotic interval theta_hat +/- z * sqrt(V / b_n) at the given level.

    Valid for large n only; n must be at least 1 and the schedule must be
    the power schedule (b_n needs a convergent squared tail).
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    if state.n < 1:
        raise ValueError("interval requires at least one observation")
    validate_clt_schedule(state.rate)
    theta_hat = ratio_estimate(state.g, y, state.cache)
    variance = asymptotic_variance(state.g, y, y_max, state.cache)
    b_n = clt_scale(state.rate, state.n)
    z = normal_quantile(0.5 * (1.0 + level))
    half = z * math.sqrt(variance / b_n)
    return EstimateReport(
        y=y,
        theta_hat=theta_hat,
        variance=variance,
        b_n=b_n,
        ci_low=theta_hat - half,
        ci_high=theta_hat + half,
        level=level,
    )
