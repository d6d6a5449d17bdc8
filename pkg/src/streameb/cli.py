"""Command-line front end: ingestion, fitting, estimation, benchmarks.

Subcommands
-----------
fit       stream counts (from a file or a synthetic prior) through the
          recursion; writes metric rows and, optionally, a resumable state
estimate  point estimates and credible intervals from a saved state
baseline  classical estimators over a count histogram
bench     per-update timing across grid sizes
regret    decay of the regret along a stream against a grid-atoms oracle

Exit codes: 0 success, 2 flag/input validation error, 3 numerical failure.
Outputs are deterministic for fixed flags and seed; the one timestamp header
line is suppressed by --no-meta.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import baselines, engine, evaluation, inference
from .baselines import VdmConfig
from .engine import LearningRate
from .gridding import GridInfeasibleError, GridSpec, build_equispaced_grid
from .model import CountHistogram, DegenerateLikelihoodError, Grid
from .priors import parse_prior

VALIDATION_EXIT = 2
NUMERICAL_EXIT = 3


@dataclass(frozen=True)
class IngestFormat:
    """How an input file maps to a count histogram.

    kind is one of:
      counts-lines   one nonnegative integer per line
      histogram-csv  header ``y,count`` then one pair per line
      event-window   TSV of (entity_id, origin_epoch_s, event_epoch_s); the
                     count for an entity is the number of its events within
                     ``window_s`` seconds of its origin.  A row with an empty
                     third field declares an entity with zero events.
    """

    kind: str
    window_s: float | None = None

    def __post_init__(self):
        if self.kind not in ("counts-lines", "histogram-csv", "event-window"):
            raise ValueError(f"unknown ingest format {self.kind!r}")
        if self.kind == "event-window" and not (self.window_s and self.window_s > 0):
            raise ValueError("event-window ingestion needs a positive window length")


def read_count_stream(path: str) -> list:
    """Counts-lines parser preserving file order (one integer per line)."""
    with open(path, "r", encoding="utf-8") as handle:
        lines = handle.read().splitlines()
    counts = []
    for ln, line in enumerate(lines, 1):
        line = line.strip()
        if not line:
            continue
        try:
            y = int(line)
            if y < 0:
                raise ValueError
        except ValueError:
            raise ValueError(f"{path}:{ln}: expected a nonnegative integer, got {line!r}")
        counts.append(y)
    if not counts:
        raise ValueError(f"{path}: empty input")
    return counts


def ingest(path: str, fmt: IngestFormat) -> CountHistogram:
    """Parse a file into a histogram; malformed lines report their number."""
    if fmt.kind == "counts-lines":
        return CountHistogram.from_counts(read_count_stream(path))
    with open(path, "r", encoding="utf-8") as handle:
        lines = handle.read().splitlines()
    if not any(line.strip() for line in lines):
        raise ValueError(f"{path}: empty input")
    if fmt.kind == "histogram-csv":
        pairs = []
        start = 1 if lines and lines[0].strip().lower().replace(" ", "") == "y,count" else 0
        for ln, line in enumerate(lines[start:], start + 1):
            line = line.strip()
            if not line:
                continue
            try:
                y_str, n_str = line.split(",")
                pairs.append((int(y_str), int(n_str)))
            except ValueError:
                raise ValueError(f"{path}:{ln}: expected 'y,count', got {line!r}")
        return CountHistogram.from_pairs(pairs)
    # event-window
    events: dict = {}
    for ln, line in enumerate(lines, 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"{path}:{ln}: expected 3 tab-separated fields")
        entity, origin_s, event_s = (p.strip() for p in parts)
        try:
            origin = float(origin_s)
            event = float(event_s) if event_s else None
        except ValueError:
            raise ValueError(f"{path}:{ln}: bad timestamp")
        key = (entity, origin)
        events.setdefault(key, 0)
        if event is not None and 0.0 <= event - origin <= fmt.window_s:
            events[key] += 1
    return CountHistogram.from_counts(events.values())


def _meta_line(args) -> str:
    return f"# streameb {args.command} generated_at={time.strftime('%Y-%m-%dT%H:%M:%S')}"


def _emit(text: str, args) -> None:
    body = text if args.no_meta else _meta_line(args) + "\n" + text
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(body)
    else:
        sys.stdout.write(body)


def _parse_int_list(text: str):
    return [int(v) for v in text.split(",") if v]


def _parse_y_range(text: str):
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    return _parse_int_list(text)


def _ingest_format(args) -> IngestFormat:
    return IngestFormat(kind=args.format, window_s=args.window)


# -- subcommand bodies --------------------------------------------------------


def _cmd_fit(args) -> int:
    rate = LearningRate(args.alpha, args.gamma)
    if args.prior:
        prior = parse_prior(args.prior)
        cfg = evaluation.ExperimentConfig(
            prior=prior, n=args.n, eta=args.eta, d_cap=args.dcap, rate=rate
        )
        rows = [
            evaluation.run_stream_experiment(cfg, seed, measure_time=args.timing)
            for seed in range(args.seed, args.seed + args.replications)
        ]
        _emit(evaluation.metrics_to_csv(rows), args)
        return 0
    if not args.input:
        raise ValueError("fit needs either --prior or --input")
    fmt = _ingest_format(args)
    if fmt.kind == "counts-lines":
        # the recursion is order-dependent; stream the file in its own order
        ys = read_count_stream(args.input)
        h = CountHistogram.from_counts(ys)
    else:
        h = ingest(args.input, fmt)
        ys = [y for y in sorted(h.entries) for _ in range(h.entries[y])]
    if args.state_in:
        with open(args.state_in, "rb") as handle:
            state = engine.deserialize_state(handle.read())
    else:
        m2 = args.m2 if args.m2 else float(np.mean(np.array(ys, dtype=float) ** 2))
        if m2 <= 0:
            raise ValueError("all counts are zero; supply --m2, a state, or richer data")
        grid = build_equispaced_grid(GridSpec(args.eta, 2, m2, d_cap=args.dcap))
        state = engine.init(grid, rate)
    state = engine.update_stream(state, ys, skip_degenerate=args.skip_degenerate)
    if args.state_out:
        with open(args.state_out, "wb") as handle:
            handle.write(engine.serialize_state(state))
    rows = [
        (y, inference.ratio_estimate(state.g, y, state.cache)) for y in sorted(h.entries)
    ]
    _emit(baselines.estimates_to_csv(rows, "stream"), args)
    return 0


def _cmd_estimate(args) -> int:
    with open(args.state, "rb") as handle:
        state = engine.deserialize_state(handle.read())
    reports = [
        inference.credible_interval(state, y, args.level) for y in _parse_y_range(args.y)
    ]
    text = inference.EstimateReport.CSV_HEADER + "\n"
    text += "\n".join(r.csv_row() for r in reports) + "\n"
    _emit(text, args)
    return 0


def _cmd_baseline(args) -> int:
    h = ingest(args.input, _ingest_format(args))
    cfg = None
    if args.method in ("npmle", "npmd"):
        hi = max(h.max_count() + 3.0 * (h.max_count() ** 0.5 + 1.0), 1.0)
        grid = Grid(np.linspace(max(args.grid_lo, 1e-3), hi, args.grid_points))
        cfg = VdmConfig(grid=grid, max_iters=args.max_iters, tol=args.tol)
    rows, info = baselines.baseline_estimates(h, args.method, cfg)
    if args.markdown:
        _emit(baselines.estimates_to_markdown({args.method: rows}), args)
    else:
        _emit(baselines.estimates_to_csv(rows, args.method), args)
    if args.verbose:
        print(f"# info: {info}", file=sys.stderr)
    return 0


def _cmd_bench(args) -> int:
    windows = []
    for piece in args.windows.split(","):
        lo, hi = piece.split(":")
        windows.append((int(lo), int(hi)))
    rows = evaluation.timing_harness(_parse_int_list(args.d), args.n, windows, seed=args.seed)
    text = "d,window_lo,window_hi,median_ms\n"
    text += "\n".join(f"{d},{lo},{hi},{ms!r}" for d, lo, hi, ms in rows) + "\n"
    _emit(text, args)
    return 0


def _cmd_regret(args) -> int:
    prior = parse_prior(args.atoms)
    if prior.family != "grid-atoms":
        raise ValueError("regret needs a grid-atoms oracle, e.g. grid-atoms:1@0.5,4@0.5")
    checkpoints = _parse_int_list(args.checkpoints)
    cfg = evaluation.ExperimentConfig(
        prior=prior,
        n=max(checkpoints),
        rate=LearningRate(args.alpha, args.gamma),
        seeds=tuple(range(args.seed, args.seed + args.replications)),
    )
    res = evaluation.regret_decay_diagnostic(cfg, checkpoints)
    lines = ["seed,checkpoint,regret"]
    for r, seed in enumerate(cfg.seeds):
        for ci, c in enumerate(res.checkpoints):
            lines.append(f"{seed},{c},{res.regrets[r, ci]!r}")
    lines.append(f"# median_log_log_slope,{res.median_slope!r}")
    _emit("\n".join(lines) + "\n", args)
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="streameb", description=__doc__.split("\n")[0])
    parser.add_argument("--out", help="write output here instead of stdout")
    parser.add_argument("--no-meta", action="store_true", help="suppress the timestamp header")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="stream counts through the recursion")
    fit.add_argument("--prior", help="synthetic prior, e.g. weibull:5,3")
    fit.add_argument("--n", type=int, default=500)
    fit.add_argument("--input", help="count file to stream instead of a prior")
    fit.add_argument("--format", default="counts-lines")
    fit.add_argument("--window", type=float, help="event-window length in seconds")
    fit.add_argument("--eta", type=float, default=0.025)
    fit.add_argument("--dcap", type=int, default=10_000)
    fit.add_argument("--m2", type=float,
                     help="moment bound for grid sizing (default: empirical)")
    fit.add_argument("--gamma", type=float, default=0.99)
    fit.add_argument("--alpha", type=float, default=1.0)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--replications", type=int, default=1)
    fit.add_argument("--timing", action="store_true",
                     help="include measured per-update time (not byte-deterministic)")
    fit.add_argument("--state-in", help="resume from this saved state")
    fit.add_argument("--state-out", help="save the final state here")
    fit.add_argument("--skip-degenerate", action="store_true",
                     help="skip counts whose likelihood underflows instead of failing")
    fit.set_defaults(func=_cmd_fit)

    est = sub.add_parser("estimate", help="estimates and intervals from a saved state")
    est.add_argument("--state", required=True)
    est.add_argument("--y", required=True, help="counts, e.g. 0..7 or 0,3,9")
    est.add_argument("--level", type=float, default=0.95)
    est.set_defaults(func=_cmd_estimate)

    base = sub.add_parser("baseline", help="classical estimators over a histogram")
    base.add_argument("--method", required=True, choices=baselines.METHODS)
    base.add_argument("--input", required=True)
    base.add_argument("--format", default="histogram-csv")
    base.add_argument("--window", type=float)
    base.add_argument("--grid-points", type=int, default=1000)
    base.add_argument("--grid-lo", type=float, default=1e-3)
    base.add_argument("--max-iters", type=int, default=500)
    base.add_argument("--tol", type=float, default=1e-8)
    base.add_argument("--markdown", action="store_true")
    base.add_argument("--verbose", action="store_true")
    base.set_defaults(func=_cmd_baseline)

    bench = sub.add_parser("bench", help="per-update timing across grid sizes")
    bench.add_argument("--d", default="1000,10000", help="comma-separated grid sizes")
    bench.add_argument("--n", type=int, default=1000)
    bench.add_argument("--windows", default="100:200,900:1000")
    bench.add_argument("--seed", type=int, default=0)
    bench.set_defaults(func=_cmd_bench)

    reg = sub.add_parser("regret", help="regret decay against a grid-atoms oracle")
    reg.add_argument("--atoms", required=True, help="e.g. grid-atoms:0.5@0.2,2@0.3,5@0.5")
    reg.add_argument("--gamma", type=float, default=0.75)
    reg.add_argument("--alpha", type=float, default=1.0)
    reg.add_argument("--seed", type=int, default=0)
    reg.add_argument("--replications", type=int, default=5)
    reg.add_argument("--checkpoints", default="1000,4000,16000")
    reg.set_defaults(func=_cmd_regret)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return VALIDATION_EXIT if exc.code else 0
    try:
        return args.func(args)
    except (DegenerateLikelihoodError, GridInfeasibleError, baselines.ConvergenceError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return NUMERICAL_EXIT
    except (ValueError, OSError, engine.StateFormatError) as err:
        print(f"error: {err}", file=sys.stderr)
        return VALIDATION_EXIT


if __name__ == "__main__":
    sys.exit(main())
