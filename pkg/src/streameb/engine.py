"""Streaming recursion for the mixing distribution, one count at a time.

Each observation moves the current weight vector toward its one-observation
posterior by a step size from a decaying schedule:

    g_{n+1} = (1 - a_{n+1}) g_n + a_{n+1} * posterior(g_n, y)

States are immutable; ``update`` returns a fresh state sharing the kernel
cache, so a held reference is already a consistent snapshot.  Updates are
strictly sequential (the recursion is order-dependent), and each one costs
O(d) independent of how many observations came before.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import blas as _blas
from scipy.special import gammaincc

from .model import (
    DegenerateLikelihoodError,
    Grid,
    KernelMatrixCache,
    MixingWeights,
)

_MAGIC = b"EBSTREAM"
_VERSION = 1
_HEADER = struct.Struct("<8sIIQQdd")


class StateFormatError(ValueError):
    """Serialized state is malformed: bad magic, version, length, or checksum."""


@dataclass(frozen=True)
class LearningRate:
    """Power step-size schedule a_n = (alpha + n)^(-gamma).

    Requires alpha > 0 and gamma in (1/2, 1]: steps then lie in (0, 1),
    their sum diverges, and the sum of squares converges.
    """

    alpha: float
    gamma: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not 0.5 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (1/2, 1]")

    def __call__(self, n: int) -> float:
        if n < 1:
            raise ValueError("step index starts at 1")
        return (self.alpha + n) ** (-self.gamma)

    def steps(self, n_start: int, count: int) -> np.ndarray:
        """Vector of step sizes for observations n_start+1 .. n_start+count."""
        ks = np.arange(n_start + 1, n_start + count + 1, dtype=float)
        return (self.alpha + ks) ** (-self.gamma)


# Any non-increasing map n -> step in (0, 1) is accepted by the engine;
# only LearningRate gets the closed-form tail-sum machinery and serialization.
Schedule = Callable[[int], float]


@dataclass(frozen=True, eq=False)
class NewtonState:
    """Weights after n observations, plus the schedule and kernel cache."""

    g: MixingWeights
    n: int
    rate: Schedule
    cache: KernelMatrixCache


def init(grid: Grid, rate: Schedule, g0: MixingWeights | None = None) -> NewtonState:
    """Fresh state at n=0; ``g0`` defaults to uniform on the grid."""
    if g0 is None:
        g0 = MixingWeights.uniform(grid)
    elif not g0.grid.same_points(grid):
        raise ValueError("initial weights are not supported on the given grid")
    return NewtonState(g=g0, n=0, rate=rate, cache=KernelMatrixCache(grid))


def update(state: NewtonState, y: int, step_size: float | None = None) -> NewtonState:
    """Consume one count; returns the state after observation n+1.

    ``step_size`` overrides the schedule (used to probe boundary behavior,
    e.g. a unit step collapses the update to the pure posterior).
    Raises DegenerateLikelihoodError, leaving the state unchanged, when the
    mixture likelihood of ``y`` underflows.
    """
    y = int(y)
    if y < 0:
        raise ValueError("counts must be nonnegative")
    _, scaled = state.cache.scaled_row(y)
    w = state.g.weights
    q = scaled * w
    total = q.sum()
    if total <= 0.0 or not np.isfinite(total):
        raise DegenerateLikelihoodError(y, state.n)
    a = state.rate(state.n + 1) if step_size is None else float(step_size)
    new_w = (1.0 - a) * w + (a / total) * q
    new_w /= new_w.sum()
    return NewtonState(
        g=MixingWeights(state.g.grid, new_w),
        n=state.n + 1,
        rate=state.rate,
        cache=state.cache,
    )


def update_stream(
    state: NewtonState,
    ys: Sequence[int],
    snapshot_every: int | None = None,
    on_snapshot: Callable[[NewtonState], None] | None = None,
    skip_degenerate: bool = False,
) -> NewtonState:
    """Fold the one-count update over a sequence, with a low-overhead loop.

    Semantically a repeated ``update`` (same arithmetic via BLAS, so results
    agree to rounding); the loop mutates a private scratch copy of the
    weights, and the caller's state is untouched if anything raises.  The
    first degenerate count aborts with its stream index attached to the
    raised error; with ``skip_degenerate`` set, offending counts are skipped
    instead (this biases the fit and is opt-in for that reason).  When
    ``snapshot_every`` is set, ``on_snapshot`` receives an immutable state
    snapshot every that many observations.
    """
    ys = np.asarray(ys, dtype=np.int64)
    if ys.size == 0:
        return state
    if ys.min() < 0:
        raise ValueError("counts must be nonnegative")
    cache = state.cache
    scaled = cache.scaled_table(int(ys.max()))
    w = state.g.weights.copy()
    q = np.empty_like(w)
    rate = state.rate
    n = state.n
    grid = state.g.grid
    n0 = n
    if isinstance(rate, LearningRate):
        planned = rate.steps(n, ys.size).tolist()
        step_at = planned.__getitem__  # indexed by successful updates, not stream position
    else:
        step_at = lambda _: rate(n + 1)  # noqa: E731 - n is read at call time
    y_list = ys.tolist()
    mul, dasum, dscal, daxpy = np.multiply, _blas.dasum, _blas.dscal, _blas.daxpy
    for i, y in enumerate(y_list):
        mul(scaled[y], w, q)
        total = dasum(q)
        if not total > 0.0:  # catches underflow to zero (and NaN, defensively)
            if skip_degenerate:
                continue
            err = DegenerateLikelihoodError(y, n)
            err.stream_index = i
            raise err
        a = step_at(n - n0)
        dscal(1.0 - a, w)
        daxpy(q, w, a=a / total)
        dscal(1.0 / dasum(w), w)
        n += 1
        if snapshot_every and n % snapshot_every == 0 and on_snapshot:
            on_snapshot(NewtonState(MixingWeights(grid, w.copy()), n, rate, cache))
    return NewtonState(g=MixingWeights(grid, w), n=n, rate=rate, cache=cache)


def martingale_residual(state: NewtonState, y_max: int) -> float:
    """How far the next update is from mean-preserving, per atom.

    Averages the actual one-step update over counts y <= y_max drawn from
    the current predictive pmf, adds the analytically known contribution of
    the truncated tail, and returns the largest absolute gap to the current
    weights.  Zero up to truncation and rounding.
    """
    g = state.g
    w = g.weights
    pts = g.grid.points
    a = state.rate(state.n + 1)
    table = np.exp(state.cache.log_table(y_max))        # (y_max+1, d)
    p = table @ w
    live = p > 0
    post = np.zeros_like(table)
    post[live] = table[live] * w[None, :] / p[live][:, None]
    stepped = (1.0 - a) * w[None, :] + a * post         # update applied at each y
    expected = (p[:, None] * stepped).sum(axis=0)
    # Poisson tail beyond y_max, exact: P(Y > y_max | theta_j)
    tail_k = 1.0 - gammaincc(y_max + 1.0, pts)
    tail_p = float(np.dot(w, tail_k))
    expected += (1.0 - a) * w * tail_p + a * w * tail_k
    return float(np.max(np.abs(expected - w)))


# -- serialization ----------------------------------------------------------
#
# Layout (little endian):
#   magic 8s | version u32 | kdim u32 | d u64 | n u64 | alpha f64 | gamma f64
#   | grid f64[d] | weights f64[d^kdim] | crc32 u32 of everything above
# The scalar engine writes kdim=1; the lattice engine shares the format.


def pack_state(kdim: int, grid: Grid, weights: np.ndarray, n: int, rate: Schedule) -> bytes:
    if not isinstance(rate, LearningRate):
        raise ValueError("only the power schedule serializes; custom schedules do not")
    d = len(grid)
    if weights.size != d**kdim:
        raise ValueError("weight length does not match grid size")
    head = _HEADER.pack(_MAGIC, _VERSION, kdim, d, n, rate.alpha, rate.gamma)
    body = head + grid.points.tobytes() + np.ascontiguousarray(weights).tobytes()
    return body + struct.pack("<I", zlib.crc32(body))


def unpack_state(blob: bytes):
    """Inverse of pack_state; returns (kdim, grid, weights, n, rate)."""
    if len(blob) < _HEADER.size + 4:
        raise StateFormatError("truncated state blob")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise StateFormatError("checksum mismatch")
    magic, version, kdim, d, n, alpha, gamma = _HEADER.unpack(body[: _HEADER.size])
    if magic != _MAGIC:
        raise StateFormatError("bad magic")
    if version != _VERSION:
        raise StateFormatError(f"unsupported state version {version}")
    need = _HEADER.size + 8 * d + 8 * d**kdim
    if len(body) != need:
        raise StateFormatError("state blob has wrong length")
    pts = np.frombuffer(body, dtype="<f8", count=d, offset=_HEADER.size)
    w = np.frombuffer(body, dtype="<f8", count=d**kdim, offset=_HEADER.size + 8 * d)
    return kdim, Grid(pts.copy()), w.copy(), n, LearningRate(alpha, gamma)


def serialize_state(state: NewtonState) -> bytes:
    return pack_state(1, state.g.grid, state.g.weights, state.n, state.rate)


def deserialize_state(blob: bytes) -> NewtonState:
    kdim, grid, w, n, rate = unpack_state(blob)
    if kdim != 1:
        raise StateFormatError(f"expected a scalar state, found kdim={kdim}")
    return NewtonState(g=MixingWeights(grid, w), n=n, rate=rate, cache=KernelMatrixCache(grid))


def dump_weights_jsonl(state: NewtonState) -> str:
    """Debug dump: one JSON number per line, in grid order, for diffing."""
    return "\n".join(json.dumps(float(w)) for w in state.g.weights) + "\n"
