"""Synthetic data generation, error metrics, regret, and timing harnesses.

Regret compares two mixing distributions through their per-count estimates,
weighted by an oracle count pmf:

    sum_y (est_a(y) - est_b(y))^2 * p_oracle(y)

truncated at ``y_max``.  When the oracle is supported on the grid the oracle
pmf is exactly ``p_{g_b}``; for continuous oracles pass ``oracle_pmf``
computed by quadrature (``PriorSpec.count_pmf``).  All truncations use the
``grid.hi + 20 sqrt(grid.hi)`` policy; at that depth the neglected Poisson
tail mass is far below 1e-8.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import engine
from .engine import LearningRate
from .gridding import GridSpec, build_equispaced_grid
from .inference import default_y_max, ratio_estimate
from .model import Grid, KernelMatrixCache, MixingWeights
from .priors import PriorSpec


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """One synthetic-stream configuration: prior, sample size, grid policy."""

    prior: PriorSpec
    n: int
    eta: float = 0.025
    k: int = 2
    d_cap: int | None = 10_000
    rate: LearningRate = field(default_factory=lambda: LearningRate(1.0, 0.99))
    seeds: tuple = (0,)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if len(self.seeds) == 0:
            raise ValueError("at least one seed is required")


@dataclass(frozen=True)
class MetricRow:
    method: str
    prior: str
    n: int
    d: int
    eta: float
    gamma: float
    seed: int
    rmse: float
    mad: float
    cpu_per_update_ms: float

    CSV_HEADER = "method,prior,n,d,eta,gamma,seed,rmse,mad,cpu_per_update_ms"

    def csv_row(self) -> str:
        # The timing field is empty when not measured (NaN) so that output
        # stays byte-deterministic under a fixed seed.
        ms = "" if np.isnan(self.cpu_per_update_ms) else repr(self.cpu_per_update_ms)
        return (
            f"{self.method},{self.prior},{self.n},{self.d},{self.eta!r},"
            f"{self.gamma!r},{self.seed},{self.rmse!r},{self.mad!r},{ms}"
        )


def generate_compound(prior: PriorSpec, n: int, seed: int):
    """Draw latent rates from the prior, then one count per rate."""
    rng = np.random.default_rng(seed)
    thetas = prior.sample(n, rng)
    ys = rng.poisson(thetas)
    return thetas, ys


def rmse_mad(thetas, estimates):
    """Root mean squared error and mean absolute deviation, elementwise."""
    thetas = np.asarray(thetas, dtype=float)
    estimates = np.asarray(estimates, dtype=float)
    if thetas.shape != estimates.shape:
        raise ValueError("thetas and estimates must have equal length")
    err = estimates - thetas
    return float(np.sqrt(np.mean(err**2))), float(np.mean(np.abs(err)))


def _estimate_table(g: MixingWeights, y_max: int, cache=None) -> np.ndarray:
    """Ratio estimates for every count 0..y_max in one pass."""
    if cache is None:
        cache = KernelMatrixCache(g.grid)
    return np.array([ratio_estimate(g, int(y), cache) for y in range(y_max + 1)])


def regret(
    g_a: MixingWeights,
    g_b: MixingWeights,
    y_max: int | None = None,
    oracle_pmf=None,
) -> float:
    """Expected squared estimate gap between g_a and the oracle g_b."""
    if not g_a.grid.same_points(g_b.grid):
        raise ValueError("both weight vectors must live on the same grid")
    if y_max is None:
        y_max = default_y_max(g_a.grid)
    cache = KernelMatrixCache(g_a.grid)
    kernel = np.exp(cache.log_table(y_max + 1))
    p_a = kernel @ g_a.weights
    p_b = kernel @ g_b.weights
    if np.any(p_a[:-1] <= 0) or np.any(p_b[:-1] <= 0):
        raise ValueError("estimates are undefined where the pmf vanishes")
    ys = np.arange(y_max + 1)
    est_a = (ys + 1) * p_a[1:] / p_a[:-1]
    est_b = (ys + 1) * p_b[1:] / p_b[:-1]
    weight = p_b[:-1] if oracle_pmf is None else np.asarray(oracle_pmf, float)[: y_max + 1]
    return float(np.dot((est_a - est_b) ** 2, weight))


def batched_newton_stream(
    grid: Grid,
    rate: LearningRate,
    y_matrix: np.ndarray,
    g0: np.ndarray | None = None,
    checkpoints=(),
):
    """Run many replications of the streaming recursion in lockstep.

    ``y_matrix`` has one row of counts per replication; column m is consumed
    at step m+1 by every replication simultaneously, which is equivalent to
    running the scalar engine on each row (verified against it in tests).
    Returns ``(final_weights, {n: weights_at_n})`` with one weight row per
    replication.
    """
    reps, n_steps = y_matrix.shape
    d = len(grid)
    cache = KernelMatrixCache(grid)
    scaled = cache.scaled_table(int(y_matrix.max()))
    w = np.full((reps, d), 1.0 / d) if g0 is None else np.tile(g0, (reps, 1)).astype(float)
    wanted = set(int(c) for c in checkpoints)
    snaps = {}
    for m in range(n_steps):
        a = rate(m + 1)
        q = scaled[y_matrix[:, m]] * w
        total = q.sum(axis=1, keepdims=True)
        if np.any(total <= 0):
            bad = int(np.argmax(total <= 0))
            raise engine.DegenerateLikelihoodError(int(y_matrix[bad, m]), m)
        w = (1.0 - a) * w + (a / total) * q
        w /= w.sum(axis=1, keepdims=True)
        if (m + 1) in wanted:
            snaps[m + 1] = w.copy()
    return w, snaps


def run_stream_experiment(
    cfg: ExperimentConfig, seed: int, method: str = "stream", measure_time: bool = True
) -> MetricRow:
    """One replication of the synthetic protocol.

    Draw (theta_i, Y_i) pairs, size the grid from the empirical second
    moment of the counts, stream the counts through the recursion from a
    uniform start, then score the per-count estimates against the latent
    rates.  All-zero samples have no usable moment bound and are an error.
    With ``measure_time`` off, the timing field is NaN and the resulting
    row is fully deterministic under the seed.
    """
    thetas, ys = generate_compound(cfg.prior, cfg.n, seed)
    m2 = float(np.mean(np.asarray(ys, float) ** 2))
    if m2 <= 0:
        raise ValueError("all counts are zero; the empirical moment bound is degenerate")
    spec = GridSpec(eta=cfg.eta, k=cfg.k, m_k=m2, d_cap=cfg.d_cap)
    grid = build_equispaced_grid(spec)
    state = engine.init(grid, cfg.rate)
    t0 = time.perf_counter()
    state = engine.update_stream(state, ys)
    elapsed_ms = (time.perf_counter() - t0) * 1000.0
    table = _estimate_table(state.g, int(ys.max()), state.cache)
    rmse, mad = rmse_mad(thetas, table[ys])
    return MetricRow(
        method=method,
        prior=cfg.prior.family,
        n=cfg.n,
        d=len(grid),
        eta=cfg.eta,
        gamma=cfg.rate.gamma,
        seed=seed,
        rmse=rmse,
        mad=mad,
        cpu_per_update_ms=elapsed_ms / cfg.n if measure_time else float("nan"),
    )


@dataclass(frozen=True, eq=False)
class RegretDecayResult:
    checkpoints: tuple
    regrets: np.ndarray       # (seeds, checkpoints)
    slopes: np.ndarray        # least-squares log-log slope per seed
    median_slope: float
    tv_final: np.ndarray      # total variation to the oracle at the last checkpoint


def regret_decay_diagnostic(cfg: ExperimentConfig, checkpoints) -> RegretDecayResult:
    """Decay rate of the regret along the stream, for a grid-atoms oracle.

    Runs one stream per seed, measures regret against the exact oracle
    weights at each checkpoint, and fits a log-log slope per seed.  Needs at
    least three checkpoints for a meaningful line fit.
    """
    if cfg.prior.family != "grid-atoms":
        raise ValueError("the oracle must be a grid-atoms prior (exact on its grid)")
    checkpoints = tuple(sorted(int(c) for c in checkpoints))
    if len(checkpoints) < 3:
        raise ValueError("need at least three checkpoints for a slope fit")
    grid = Grid(cfg.prior.atoms)
    g_star = MixingWeights(grid, cfg.prior.probs)
    n_total = checkpoints[-1]
    y_rows = np.stack(
        [generate_compound(cfg.prior, n_total, seed)[1] for seed in cfg.seeds]
    )
    _, snaps = batched_newton_stream(grid, cfg.rate, y_rows, checkpoints=checkpoints)
    y_max = default_y_max(grid)
    regrets = np.empty((len(cfg.seeds), len(checkpoints)))
    for ci, c in enumerate(checkpoints):
        for r in range(len(cfg.seeds)):
            regrets[r, ci] = regret(MixingWeights(grid, snaps[c][r]), g_star, y_max)
    log_n = np.log(np.asarray(checkpoints, float))
    design = np.stack([log_n, np.ones_like(log_n)], axis=1)
    slopes = np.array(
        [np.linalg.lstsq(design, np.log(row), rcond=None)[0][0] for row in regrets]
    )
    tv_final = 0.5 * np.abs(snaps[checkpoints[-1]] - g_star.weights[None, :]).sum(axis=1)
    return RegretDecayResult(
        checkpoints=checkpoints,
        regrets=regrets,
        slopes=slopes,
        median_slope=float(np.median(slopes)),
        tv_final=tv_final,
    )


def timing_harness(
    d_values, n_updates: int, windows, seed: int = 0, warmup: int = 20,
    chunk: int = 50, repeats: int = 7,
):
    """Median per-update wall time (ms) per grid size and update window.

    Streams ``n_updates`` synthetic counts through a fresh state for each
    grid size, timing chunks of ``chunk`` consecutive updates.  The whole
    stream is repeated ``repeats`` times and each chunk keeps its fastest
    repetition, which filters scheduler noise; ``warmup`` leading updates
    are discarded.  Returns rows ``(d, window_lo, window_hi, median_ms)``
    where windows index updates after warmup.
    """
    rows = []
    rng = np.random.default_rng(seed)
    for d in d_values:
        grid = Grid(np.linspace(0.2, 12.0, int(d)))
        ys = rng.poisson(3.0, size=n_updates + warmup)
        n_chunks = (len(ys) + chunk - 1) // chunk
        best = np.full(n_chunks, np.inf)
        for _ in range(repeats):
            state = engine.init(grid, LearningRate(1.0, 0.99))
            state.cache.ensure(int(ys.max()))
            for c in range(n_chunks):
                lo = c * chunk
                piece = ys[lo : lo + chunk]
                t0 = time.perf_counter()
                state = engine.update_stream(state, piece)
                dt = (time.perf_counter() - t0) / len(piece)
                best[c] = min(best[c], dt)
        per_update = np.repeat(best, chunk)[: len(ys)][warmup:]
        for lo, hi in windows:
            window = per_update[lo : hi + 1]
            rows.append((int(d), int(lo), int(hi), float(np.median(window) * 1000.0)))
    return rows


def metrics_to_csv(rows) -> str:
    lines = [MetricRow.CSV_HEADER]
    lines += [r.csv_row() for r in rows]
    return "\n".join(lines) + "\n"


def metrics_to_markdown(rows) -> str:
    """Method-by-n table of RMSE and MAD medians, one block per metric."""
    methods = sorted({r.method for r in rows})
    ns = sorted({r.n for r in rows})
    lines = []
    for metric in ("rmse", "mad"):
        lines.append("| " + metric.upper() + " | " + " | ".join(methods) + " |")
        lines.append("|---" * (len(methods) + 1) + "|")
        for n in ns:
            cells = []
            for method in methods:
                vals = [getattr(r, metric) for r in rows if r.method == method and r.n == n]
                cells.append(f"{np.median(vals):.3f}" if vals else "")
            lines.append(f"| n={n} | " + " | ".join(cells) + " |")
        lines.append("")
    return "\n".join(lines)
