"""Core Poisson-mixture arithmetic on a fixed grid of candidate means.

Everything downstream (the streaming engine, interval construction, the
classical baselines) works with a discrete mixing distribution over an
ascending grid of positive rates.  Kernel evaluations are done in log space
because practical grids extend to rates in the thousands, where the linear
Poisson pmf underflows.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

# Weight vectors are renormalized after every arithmetic step; construction
# rejects anything farther than this from the simplex.
SIMPLEX_TOL = 1e-9


class DegenerateLikelihoodError(ValueError):
    """The mixture pmf underflowed to zero at the requested count."""

    def __init__(self, y, n=None):
        self.y = y
        self.n = n
        msg = f"mixture likelihood underflowed at count y={y}"
        if n is not None:
            msg += f" (after {n} observations)"
        super().__init__(msg)


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Grid:
    """Strictly increasing, strictly positive support points."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size == 0:
            raise ValueError("grid must be a nonempty 1-d sequence")
        if not np.all(np.isfinite(pts)) or not np.all(pts > 0):
            raise ValueError("grid points must be finite and strictly positive")
        if pts.size > 1 and not np.all(np.diff(pts) > 0):
            raise ValueError("grid points must be strictly increasing")
        object.__setattr__(self, "points", _frozen(pts))

    def __len__(self) -> int:
        return int(self.points.size)

    @property
    def lo(self) -> float:
        return float(self.points[0])

    @property
    def hi(self) -> float:
        return float(self.points[-1])

    def same_points(self, other: "Grid") -> bool:
        return self.points.shape == other.points.shape and bool(
            np.array_equal(self.points, other.points)
        )


@dataclass(frozen=True, eq=False)
class MixingWeights:
    """A probability mass function over a :class:`Grid`.

    Weights must be nonnegative and sum to one within ``SIMPLEX_TOL``; the
    stored vector is renormalized so its sum is exactly 1 in floating point.
    Zero weights are kept in place rather than pruned, so user-declared
    support never changes silently.
    """

    grid: Grid
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(self.grid),):
            raise ValueError("weights must match the grid length")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and nonnegative")
        total = float(w.sum())
        if abs(total - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"weights sum to {total!r}, not 1")
        # Renormalize unless already at 1 within a few ulps: freshly divided
        # vectors pass through unchanged, keeping save/load round trips exact.
        if abs(total - 1.0) > 1e-13:
            w = w / total
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def uniform(cls, grid: Grid) -> "MixingWeights":
        d = len(grid)
        return cls(grid, np.full(d, 1.0 / d))

    @classmethod
    def point_mass(cls, grid: Grid, index: int) -> "MixingWeights":
        w = np.zeros(len(grid))
        w[index] = 1.0
        return cls(grid, w)

    def support_mask(self) -> np.ndarray:
        return self.weights > 0.0


@dataclass(frozen=True, eq=False)
class CountHistogram:
    """Observed counts as a multiset of (y, multiplicity) pairs."""

    entries: dict
    total: int

    def __post_init__(self):
        clean = {}
        for y, n_y in self.entries.items():
            y, n_y = int(y), int(n_y)
            if y < 0:
                raise ValueError("counts must be nonnegative")
            if n_y < 1:
                raise ValueError("multiplicities must be positive")
            clean[y] = clean.get(y, 0) + n_y
        object.__setattr__(self, "entries", clean)
        total = sum(clean.values())
        if self.total != total:
            raise ValueError(f"total {self.total} != sum of multiplicities {total}")

    @classmethod
    def from_pairs(cls, pairs) -> "CountHistogram":
        entries = {}
        for y, n_y in pairs:
            entries[int(y)] = entries.get(int(y), 0) + int(n_y)
        return cls(entries, sum(entries.values()))

    @classmethod
    def from_counts(cls, ys) -> "CountHistogram":
        entries = {}
        for y in ys:
            entries[int(y)] = entries.get(int(y), 0) + 1
        return cls(entries, sum(entries.values()))

    def support(self) -> np.ndarray:
        return np.array(sorted(self.entries), dtype=int)

    def multiplicities(self) -> np.ndarray:
        return np.array([self.entries[y] for y in sorted(self.entries)], dtype=float)

    def max_count(self) -> int:
        return max(self.entries)


class KernelMatrixCache:
    """Lazily grown table of ``log k(y | theta_j)`` over a fixed grid.

    Rows are appended as larger counts arrive and never change afterwards.
    Reads are safe from multiple threads; extension takes an internal lock.
    Alongside the log table the cache keeps each row shifted by its maximum
    and exponentiated, which is what the streaming update consumes.
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        self._lock = threading.Lock()
        self._log = np.empty((0, len(grid)))
        self._row_max = np.empty(0)
        self._scaled = np.empty((0, len(grid)))

    @property
    def max_y(self) -> int:
        return self._log.shape[0] - 1

    def ensure(self, y: int) -> None:
        if y <= self.max_y:
            return
        with self._lock:
            lo = self.max_y + 1
            if y < lo:
                return
            ys = np.arange(lo, y + 1, dtype=float)[:, None]
            pts = self.grid.points[None, :]
            block = -pts + ys * np.log(pts) - gammaln(ys + 1.0)
            row_max = block.max(axis=1)
            scaled = np.exp(block - row_max[:, None])
            self._log = np.concatenate([self._log, block])
            self._row_max = np.concatenate([self._row_max, row_max])
            self._scaled = np.concatenate([self._scaled, scaled])

    def log_row(self, y: int) -> np.ndarray:
        self.ensure(y)
        return self._log[y]

    def scaled_row(self, y: int):
        """Return ``(m, exp(log_row - m))`` with ``m`` the row maximum."""
        self.ensure(y)
        return self._row_max[y], self._scaled[y]

    def log_table(self, y_max: int) -> np.ndarray:
        """Rows 0..y_max of the log-kernel table, shape (y_max+1, d)."""
        self.ensure(y_max)
        return self._log[: y_max + 1]

    def scaled_table(self, y_max: int) -> np.ndarray:
        """Rows 0..y_max of the row-max-shifted kernel, shape (y_max+1, d)."""
        self.ensure(y_max)
        return self._scaled[: y_max + 1]


def log_poisson_kernel(y: int, theta) -> float:
    """log of e^(-theta) theta^y / y!, via log-gamma.

    ``theta`` may be a scalar or an array; all entries must be positive.
    """
    if y < 0 or y != int(y):
        raise ValueError("count must be a nonnegative integer")
    theta = np.asarray(theta, dtype=float)
    if np.any(theta <= 0):
        raise ValueError("rate must be strictly positive")
    out = -theta + y * np.log(theta) - gammaln(y + 1.0)
    return float(out) if out.ndim == 0 else out


def _log_weights(g: MixingWeights) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(g.weights)


def log_mixture_pmf(g: MixingWeights, y: int, cache: KernelMatrixCache | None = None) -> float:
    """log p_g(y) by log-sum-exp over the active (positive-weight) atoms."""
    row = cache.log_row(y) if cache is not None else log_poisson_kernel(y, g.grid.points)
    active = g.support_mask()
    lw = _log_weights(g)
    return float(logsumexp(row[active] + lw[active]))


def mixture_pmf(g: MixingWeights, y: int, cache: KernelMatrixCache | None = None) -> float:
    """p_g(y) = sum_j k(y | theta_j) g(theta_j); underflow yields 0.0."""
    return float(np.exp(log_mixture_pmf(g, y, cache)))


def log_mixture_pmf_table(
    g: MixingWeights, y_max: int, cache: KernelMatrixCache | None = None
) -> np.ndarray:
    """Vector of log p_g(y) for y = 0..y_max."""
    if cache is None:
        cache = KernelMatrixCache(g.grid)
    table = cache.log_table(y_max)
    active = g.support_mask()
    lw = _log_weights(g)
    return logsumexp(table[:, active] + lw[active][None, :], axis=1)


def posterior_weights(
    g: MixingWeights, y: int, cache: KernelMatrixCache | None = None
) -> MixingWeights:
    """One-observation posterior k(y|theta_j) g_j / p_g(y), renormalized."""
    row = cache.log_row(y) if cache is not None else log_poisson_kernel(y, g.grid.points)
    scores = row + _log_weights(g)
    m = scores.max()
    if not np.isfinite(m):
        raise DegenerateLikelihoodError(y)
    unnorm = np.exp(scores - m)
    total = unnorm.sum()
    if total <= 0.0 or not np.isfinite(total):
        raise DegenerateLikelihoodError(y)
    return MixingWeights(g.grid, unnorm / total)


def posterior_mean(g: MixingWeights, y: int, cache: KernelMatrixCache | None = None) -> float:
    """E[theta | Y=y] under g; always inside [grid.lo, grid.hi]."""
    post = posterior_weights(g, y, cache)
    return float(np.dot(g.grid.points, post.weights))
