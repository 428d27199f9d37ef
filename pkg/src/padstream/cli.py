"""Command-line entry point: generate, run, sweep, report.

Exit codes: 0 success, 1 I/O failure, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import tomli

from .events import StreamFormatError, StreamValidationError, read_stream
from .evalkit import REPORT_DIMENSIONS, SweepGrid, read_results, report, results_csv, run_sweep
from .pad import check_threshold, verdicts_csv
from .predictors import ConfigurationError, Hyperparameters, normalize_kind
from .streaming import DETECTORS, StreamConfig, StreamConfigError, count_cases, parse_amount, score_stream
from .synthlog import GeneratorConfig, default_loan_model, generate
from .unsupervised import OutlierHyperparameters

EXIT_IO = 1
EXIT_USAGE = 2

# grid keys whose values are lists; scalars are the remaining SweepGrid fields
_LIST_KEYS = ("windows", "retrains", "thresholds", "noise", "detectors", "predictors", "seeds")
_SCALAR_KEYS = ("cases", "log_dir", "log_pattern", "exclude_end", "max_prefix_cap")
_TABLES = {"forest": Hyperparameters, "outlier": OutlierHyperparameters}


class UsageError(Exception):
    pass


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _check_window(value: str) -> None:
    mode, x = parse_amount(value)
    if mode == "ratio" and not 0.0 < x <= 1.0:
        raise StreamConfigError(f"window ratio must lie in (0%, 100%], got {value!r}")
    if mode == "count" and x < 1:
        raise StreamConfigError(f"absolute window must be >= 1, got {value!r}")


def _check_retrain(value: str) -> None:
    mode, x = parse_amount(value)
    if mode == "ratio" and not 0.0 <= x <= 1.0:
        raise StreamConfigError(f"retrain ratio must lie in [0%, 100%], got {value!r}")
    if mode == "count" and x < 0:
        raise StreamConfigError(f"retrain count must be >= 0, got {value!r}")


def cmd_generate(args) -> int:
    if not 0.0 <= args.noise <= 1.0:
        raise UsageError(f"--noise must lie in [0, 1], got {args.noise}")
    if args.cases < 1:
        raise UsageError(f"--cases must be >= 1, got {args.cases}")
    gen = generate(default_loan_model(), GeneratorConfig(args.cases, args.noise, args.seed))
    gen.write(args.out)
    print(f"wrote {gen.n_events} events ({gen.n_anomalous} injected) for {args.cases} cases to {args.out}",
          file=sys.stderr)
    return 0


def cmd_run(args) -> int:
    if args.detector not in DETECTORS:
        raise UsageError(f"unknown detector {args.detector!r}; expected one of {', '.join(DETECTORS)}")
    try:
        predictor = normalize_kind(args.predictor)
    except ConfigurationError as exc:
        raise UsageError(str(exc)) from None
    _check_window(args.window)
    _check_retrain(args.retrain)
    check_threshold(args.threshold)
    hyper = Hyperparameters() if args.n_trees is None else Hyperparameters(n_trees=args.n_trees)
    cfg = StreamConfig(
        window=args.window, retrain=args.retrain, threshold=args.threshold, detector=args.detector,
        predictor=predictor, seed=args.seed, hyper=hyper, score_end=args.score_end,
    ).validate()
    events = read_stream(args.input)
    result = score_stream(cfg, events, count_cases(events))
    verdicts = result.verdicts(args.threshold)
    _write(args.out, verdicts_csv(verdicts, with_detector=True))
    scored = sum(v.scored for v in verdicts)
    print(
        f"verdicts={len(verdicts)} scored={scored} unscored={len(verdicts) - scored} "
        f"W={result.window} R={result.retrain_interval} retrains={result.n_retrains} "
        f"completed_cases={result.completed_cases} stale={len(result.stale)}",
        file=sys.stderr,
    )
    return 0


def load_grid(path: str | Path) -> SweepGrid:
    """Read a TOML grid file; unknown keys or bad values raise UsageError naming the key."""
    with open(path, "rb") as fh:
        try:
            raw = tomli.load(fh)
        except tomli.TOMLDecodeError as exc:
            raise UsageError(f"malformed grid file {path}: {exc}") from None
    kwargs = {}
    for key, value in raw.items():
        if key in _LIST_KEYS:
            if not isinstance(value, list):
                raise UsageError(f"grid key {key!r} must be a list")
            kwargs[key] = tuple(value)
        elif key in _SCALAR_KEYS:
            kwargs[key] = value
        elif key in _TABLES:
            cls = _TABLES[key]
            if not isinstance(value, dict):
                raise UsageError(f"grid key {key!r} must be a table")
            names = {f.name for f in dataclasses.fields(cls)}
            for sub in value:
                if sub not in names:
                    raise UsageError(f"unknown grid key {key}.{sub!r}")
            kwargs["hyper" if key == "forest" else "outlier_hyper"] = cls(**value)
        else:
            raise UsageError(f"unknown grid key {key!r}")
    grid = SweepGrid(**kwargs)
    _validate_grid(grid)
    return grid


def _validate_grid(grid: SweepGrid) -> None:
    def bad(key, exc):
        return UsageError(f"grid key {key!r}: {exc}")

    for w in grid.windows:
        try:
            _check_window(str(w))
        except StreamConfigError as exc:
            raise bad("windows", exc) from None
    for r in grid.retrains:
        try:
            _check_retrain(str(r))
        except StreamConfigError as exc:
            raise bad("retrains", exc) from None
    for t in grid.thresholds:
        try:
            check_threshold(float(t))
        except (TypeError, ValueError) as exc:
            raise bad("thresholds", exc) from None
    for p in grid.noise:
        if not isinstance(p, (int, float)) or not 0.0 <= p <= 1.0:
            raise bad("noise", f"noise level must lie in [0, 1], got {p!r}")
    for d in grid.detectors:
        if d not in DETECTORS:
            raise bad("detectors", f"unknown detector {d!r}")
    for p in grid.predictors:
        try:
            normalize_kind(p)
        except ConfigurationError as exc:
            raise bad("predictors", exc) from None
    for s in grid.seeds:
        if not isinstance(s, int) or s < 0:
            raise bad("seeds", f"seed must be a non-negative integer, got {s!r}")
    if not isinstance(grid.cases, int) or grid.cases < 1:
        raise bad("cases", "must be a positive integer")


def cmd_sweep(args) -> int:
    grid = load_grid(args.grid)
    if args.log_dir is not None:
        grid.log_dir = args.log_dir
    rows = run_sweep(grid)
    _write(args.out, results_csv(rows))
    print(f"{len(grid.runs())} runs, {grid.n_cells()} cells, {len(rows)} rows", file=sys.stderr)
    return 0


def cmd_report(args) -> int:
    text = Path(args.input).read_text()
    rows = read_results(text)
    _write(args.out, report(rows, args.by))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="padstream", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic loan-process event stream")
    g.add_argument("--noise", type=float, default=0.10, help="per-position injection probability")
    g.add_argument("--cases", type=int, default=500)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="stream CSV path; metadata goes to <out>.meta.json")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="score one event stream online")
    r.add_argument("--in", dest="input", required=True, help="stream CSV")
    r.add_argument("--detector", default="pad", help="pad, iforest or lof")
    r.add_argument("--predictor", default="random_forest", help="frequency or rf (pad only)")
    r.add_argument("--window", default="10%", help="e.g. 10%% of all cases, or 25c")
    r.add_argument("--retrain", default="20%", help="fraction of the window, or a count such as 5c")
    r.add_argument("--threshold", type=float, default=0.05)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--n-trees", type=int, default=None, help="random forest size (default 100)")
    r.add_argument("--score-end", action="store_true", help="also emit verdicts for END markers")
    r.add_argument("--out", default="-", help="verdict CSV path (default stdout)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="evaluate a parameter grid")
    s.add_argument("--grid", required=True, help="TOML grid file")
    s.add_argument("--log-dir", default=None, help="read logs from here instead of generating them")
    s.add_argument("--out", default="-", help="results CSV path (default stdout)")
    s.set_defaults(func=cmd_sweep)

    rp = sub.add_parser("report", help="summarize a results CSV")
    rp.add_argument("--in", dest="input", required=True)
    rp.add_argument("--by", required=True, choices=sorted(REPORT_DIMENSIONS))
    rp.add_argument("--out", default="-")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, StreamConfigError, ConfigurationError) as exc:
        print(f"padstream {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        if isinstance(exc, (StreamFormatError, StreamValidationError)):
            print(f"padstream {args.command}: bad input: {exc}", file=sys.stderr)
            return EXIT_IO
        print(f"padstream {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"padstream {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
