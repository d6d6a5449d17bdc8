"""Classical batch estimators used as comparison points.

Four methods over a count histogram:

* ``robbins_estimate``: the ratio of empirical frequencies, (y+1) n_{y+1}/n_y.
* ``fit_npmle``: nonparametric ML mixing weights on a grid, by the vertex
  direction method (repeatedly mix toward the atom with the steepest
  directional derivative of the log likelihood).
* ``fit_min_hellinger``: same scheme minimizing squared Hellinger distance
  to the empirical pmf.
* ``fit_gamma_hyperprior`` / ``gamma_posterior_mean``: parametric route; the
  marginal of a Gamma(shape, rate) prior is negative binomial, fitted by
  maximum likelihood, after which the posterior mean is (y+shape)/(1+rate).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import digamma, gammaln

from .inference import ratio_estimate
from .model import CountHistogram, Grid, KernelMatrixCache, MixingWeights


class ConvergenceError(RuntimeError):
    """An optimizer failed to converge; the message carries its trace."""


class UndefinedAtCountError(ValueError):
    """Frequency-ratio estimate requested at a count never observed."""


@dataclass(frozen=True)
class GammaHyper:
    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ValueError("shape and rate must be strictly positive")


@dataclass(frozen=True, eq=False)
class VdmConfig:
    """Grid and stopping policy for the vertex direction solvers."""

    grid: Grid
    max_iters: int = 500
    tol: float = 1e-8
    step_rule: str = "exact-line-search"

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.step_rule not in ("exact-line-search", "armijo"):
            raise ValueError("step_rule must be exact-line-search or armijo")


@dataclass(frozen=True, eq=False)
class VdmResult:
    weights: MixingWeights
    objective_path: np.ndarray     # maximized objective value per iteration
    certificate: float             # max_j directional score / its bound at exit
    converged: bool
    iterations: int


def robbins_estimate(h: CountHistogram, y: int) -> float:
    """(y+1) n_{y+1} / n_y from the raw histogram; 0 when y+1 was never seen."""
    n_y = h.entries.get(int(y), 0)
    if n_y < 1:
        raise UndefinedAtCountError(f"no observations at y={y}")
    return (y + 1) * h.entries.get(int(y) + 1, 0) / n_y


def _line_search_exact(phi_grad, lo=0.0, hi=1.0 - 1e-12):
    """Maximize a concave 1-d function on [lo, hi] given its derivative.

    The right endpoint stays just below 1 so every mixture keeps a sliver of
    the incumbent weights and the pmf never collapses onto a single column.
    """
    g_lo = phi_grad(lo)
    if g_lo <= 0:
        return lo
    if phi_grad(hi) >= 0:
        return hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if phi_grad(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    return 0.5 * (lo + hi)


def _line_search_armijo(phi, phi_grad0, hi=1.0, shrink=0.5, slope=1e-4):
    """Backtracking step on a concave objective; returns an improving eps."""
    base = phi(0.0)
    eps = hi
    while eps > 1e-16:
        if phi(eps) >= base + slope * eps * phi_grad0:
            return eps
        eps *= shrink
    return 0.0


def _run_vdm(h: CountHistogram, cfg: VdmConfig, objective):
    """Vertex direction iterations for a concave objective over the simplex.

    ``objective`` maps the pmf vector p (over the observed support) to
    (value, per-count weight vector u) such that the directional derivative
    of the objective toward vertex j is ``u . K[:, j] - u . p``.  The
    stationarity certificate is ``max_j u . K[:, j] <= u . p`` at an optimum.
    """
    ys = h.support()
    kernel = np.exp(KernelMatrixCache(cfg.grid).log_table(int(ys.max()) + 1))[ys]
    if np.any(kernel.max(axis=1) <= 0.0):
        bad = int(ys[int(np.argmin(kernel.max(axis=1)))])
        raise ValueError(f"count y={bad} is unreachable from every grid atom")
    d = len(cfg.grid)
    w = np.full(d, 1.0 / d)
    p = kernel @ w
    path = []
    converged = False
    cert = np.inf
    it = 0
    for it in range(1, cfg.max_iters + 1):
        value, u = objective(p)
        path.append(value)
        scores = u @ kernel
        bound = float(u @ p)
        j = int(np.argmax(scores))
        cert = float(scores[j] / bound)
        if scores[j] <= bound * (1.0 + cfg.tol):
            converged = True
            break
        col = kernel[:, j]

        def phi(eps):
            return objective((1.0 - eps) * p + eps * col)[0]

        def phi_grad(eps):
            mix = (1.0 - eps) * p + eps * col
            _, u_eps = objective(mix)
            return float(u_eps @ (col - p))

        if cfg.step_rule == "exact-line-search":
            eps = _line_search_exact(phi_grad)
        else:
            eps = _line_search_armijo(phi, float(scores[j] - bound), hi=1.0 - 1e-12)
        if eps <= 0.0:
            converged = True
            break
        w = (1.0 - eps) * w
        w[j] += eps
        p = (1.0 - eps) * p + eps * col
    if not converged:
        warnings.warn(
            f"vertex direction stopped at max_iters={cfg.max_iters} "
            f"with certificate {cert:.3e}; returning the best iterate"
        )
    return VdmResult(
        weights=MixingWeights(cfg.grid, w),
        objective_path=np.asarray(path),
        certificate=cert,
        converged=converged,
        iterations=it,
    )


def fit_npmle(h: CountHistogram, cfg: VdmConfig) -> VdmResult:
    """Maximize sum_y n_y log p_g(y) over mixing weights on the grid.

    At a stationary point ``max_j sum_y (n_y/N) k(y|theta_j) / p_g(y)`` is
    at most ``1 + tol``; that ratio is returned as the certificate.
    """
    counts = h.multiplicities()

    def objective(p):
        if np.any(p <= 0):
            return -np.inf, np.zeros_like(p)
        return float(counts @ np.log(p)), counts / p

    return _run_vdm(h, cfg, objective)


def fit_min_hellinger(h: CountHistogram, cfg: VdmConfig) -> VdmResult:
    """Minimize 1 - sum_y sqrt(p_hat(y) p_g(y)) over mixing weights.

    The empirical pmf lives on the observed support (an implicit tail cell
    carries zero mass, so it never enters the affinity).  Internally the
    affinity is maximized; ``objective_path`` reports the distance, so it is
    non-increasing across iterations.
    """
    p_hat = h.multiplicities() / h.total
    root_hat = np.sqrt(p_hat)

    def objective(p):
        root_p = np.sqrt(np.maximum(p, 0.0))
        affinity = float(root_hat @ root_p)
        with np.errstate(divide="ignore"):
            u = np.where(p > 0, 0.5 * root_hat / np.maximum(root_p, 1e-300), 0.0)
        return affinity, u

    res = _run_vdm(h, cfg, objective)
    return VdmResult(
        weights=res.weights,
        objective_path=1.0 - res.objective_path,
        certificate=res.certificate,
        converged=res.converged,
        iterations=res.iterations,
    )


# -- Gamma hyperprior (negative binomial marginal) ---------------------------


def nb_log_likelihood(h: CountHistogram, shape: float, rate: float) -> float:
    """Marginal log likelihood of the histogram under Gamma(shape, rate)."""
    ys = h.support().astype(float)
    n = h.multiplicities()
    terms = (
        gammaln(ys + shape)
        - gammaln(shape)
        - gammaln(ys + 1.0)
        + shape * np.log(rate / (1.0 + rate))
        - ys * np.log1p(rate)
    )
    return float(n @ terms)


def nb_log_likelihood_grad(h: CountHistogram, shape: float, rate: float):
    """Gradient of ``nb_log_likelihood`` in (shape, rate)."""
    ys = h.support().astype(float)
    n = h.multiplicities()
    d_shape = float(n @ (digamma(ys + shape) - digamma(shape) + np.log(rate / (1.0 + rate))))
    d_rate = float(n @ (shape / rate - (shape + ys) / (1.0 + rate)))
    return d_shape, d_rate


_BOUNDARY_LOG = np.log(1e8)


def fit_gamma_hyperprior(h: CountHistogram) -> GammaHyper:
    """Maximum-likelihood (shape, rate) for the negative binomial marginal.

    Optimizes over log parameters with L-BFGS-B, so positivity is built in.
    Data with no overdispersion push shape and rate to infinity together; a
    finite safeguard is returned with a warning in that case.
    """
    if len(h.entries) < 2:
        warnings.warn("degenerate data (single distinct count); boundary fit returned")
    mean = sum(y * n for y, n in h.entries.items()) / h.total
    var = sum((y - mean) ** 2 * n for y, n in h.entries.items()) / h.total
    shape_cap = float(np.exp(_BOUNDARY_LOG))
    if var <= mean or len(h.entries) < 2:
        # No overdispersion to explain: the likelihood climbs toward the
        # equidispersed limit (shape, rate -> inf with their ratio fixed).
        warnings.warn(
            "marginal likelihood is maximized toward the equidispersed "
            "boundary (shape, rate -> inf); returning the safeguarded fit"
        )
        return GammaHyper(shape_cap, shape_cap / max(mean, 1e-8))
    # Method-of-moments start: var = mean + mean^2/shape.
    shape0 = max(mean**2 / (var - mean), 1e-3)
    rate0 = max(shape0 / max(mean, 1e-8), 1e-6)

    def neg(u):
        shape, rate = np.exp(u)
        val = nb_log_likelihood(h, shape, rate)
        ds, dr = nb_log_likelihood_grad(h, shape, rate)
        return -val, -np.array([ds * shape, dr * rate])

    bounds = [(-_BOUNDARY_LOG, _BOUNDARY_LOG)] * 2
    res = minimize(neg, np.log([shape0, rate0]), jac=True, method="L-BFGS-B", bounds=bounds)
    log_shape, log_rate = res.x
    near_boundary = max(log_shape, log_rate) >= _BOUNDARY_LOG - 1e-3
    if not res.success and not near_boundary:
        raise ConvergenceError(f"negative binomial fit failed: {res.message}")
    if near_boundary:
        warnings.warn(
            "marginal likelihood is maximized toward the equidispersed "
            "boundary (shape, rate -> inf); returning the safeguarded fit"
        )
    return GammaHyper(float(np.exp(log_shape)), float(np.exp(log_rate)))


def gamma_posterior_mean(hyper: GammaHyper, y: int) -> float:
    """Posterior mean under the conjugate pair: (y + shape) / (1 + rate)."""
    return (y + hyper.shape) / (1.0 + hyper.rate)


# -- per-count tables ---------------------------------------------------------

METHODS = ("robbins", "npmle", "npmd", "peb")


def baseline_estimates(h: CountHistogram, method: str, cfg: VdmConfig | None = None):
    """Estimate table {observed y -> estimate} for one method.

    Returns ``(rows, info)`` where rows is a list of (y, estimate) over the
    observed support and info carries fit diagnostics (objective value for
    the grid methods, hyperparameters for the parametric one).
    """
    ys = [int(y) for y in h.support()]
    info: dict = {"method": method}
    if method == "robbins":
        rows = [(y, robbins_estimate(h, y)) for y in ys]
    elif method in ("npmle", "npmd"):
        if cfg is None:
            raise ValueError(f"{method} needs a VdmConfig")
        res = fit_npmle(h, cfg) if method == "npmle" else fit_min_hellinger(h, cfg)
        cache = KernelMatrixCache(cfg.grid)
        rows = [(y, ratio_estimate(res.weights, y, cache)) for y in ys]
        info.update(
            objective=float(res.objective_path[-1]),
            certificate=res.certificate,
            converged=res.converged,
            iterations=res.iterations,
        )
    elif method == "peb":
        hyper = fit_gamma_hyperprior(h)
        rows = [(y, gamma_posterior_mean(hyper, y)) for y in ys]
        info.update(shape=hyper.shape, rate=hyper.rate)
    else:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    return rows, info


def estimates_to_csv(rows, method: str) -> str:
    lines = ["y,method,estimate"]
    lines += [f"{y},{method},{est!r}" for y, est in rows]
    return "\n".join(lines) + "\n"


def estimates_to_markdown(tables: dict) -> str:
    """Markdown table with one column per count and one row per method."""
    ys = sorted({y for rows in tables.values() for y, _ in rows})
    header = "| method | " + " | ".join(str(y) for y in ys) + " |"
    rule = "|---" * (len(ys) + 1) + "|"
    lines = [header, rule]
    for method, rows in tables.items():
        by_y = dict(rows)
        cells = [f"{by_y[y]:.2f}" if y in by_y else "" for y in ys]
        lines.append("| " + method + " | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"
