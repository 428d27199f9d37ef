"""Per-class precision / recall / F1 and parameter sweeps over stream runs."""

from __future__ import annotations

import csv
import io
import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .events import Event, read_stream
from .pad import ANOMALOUS, NORMAL, Verdict
from .predictors import Hyperparameters, normalize_kind
from .streaming import StreamConfig, count_cases, score_stream
from .synthlog import PAPER_NOISE_LEVELS, GeneratorConfig, default_loan_model, generate
from .unsupervised import OutlierHyperparameters

log = logging.getLogger(__name__)

CLASSES = (NORMAL, ANOMALOUS)
RESULT_HEADER = (
    "detector", "predictor", "noise", "W", "R", "threshold", "class",
    "precision", "recall", "f1", "unscored",
)


class IntegrityError(ValueError):
    """A verdict does not join to exactly one truth-labelled event."""


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class ClassScore:
    precision: float
    recall: float
    f1: float


def prf(c: ConfusionCounts) -> ClassScore:
    p = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    r = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return ClassScore(p, r, f)


@dataclass
class RunScore:
    counts: dict[str, ConfusionCounts]
    scores: dict[str, ClassScore]
    unscored: int

    def f1(self, cls: str = ANOMALOUS) -> float:
        return self.scores[cls].f1


def _truth_index(truth: Iterable[Event]) -> dict[tuple[str, int], str]:
    """(case_id, position) -> truth label, positions counted per case from 1."""
    index: dict[tuple[str, int], str] = {}
    pos: dict[str, int] = {}
    for e in truth:
        p = pos.get(e.case_id, 0) + 1
        pos[e.case_id] = p
        if e.is_case_end:
            # END markers are never injected, so they count as normal
            index[(e.case_id, p)] = e.truth or NORMAL
        else:
            index[(e.case_id, p)] = e.truth
    return index


def score_run(
    verdicts: Sequence[Verdict], truth: Iterable[Event], exclude_end: bool = True
) -> RunScore:
    """Join verdicts to truth-labelled events and tally both classes.

    Unscored verdicts are counted separately and excluded from the tallies.
    """
    index = _truth_index(truth)
    counts = {cls: ConfusionCounts() for cls in CLASSES}
    unscored = 0
    seen: set[tuple[str, int]] = set()
    for v in verdicts:
        if v.event.is_case_end and exclude_end:
            continue
        key = (v.event.case_id, v.position)
        label = index.get(key)
        if label is None:
            raise IntegrityError(f"verdict for {key} has no truth-labelled event")
        if key in seen:
            raise IntegrityError(f"duplicate verdict for {key}")
        seen.add(key)
        if not v.scored:
            unscored += 1
            continue
        for cls in CLASSES:
            c = counts[cls]
            predicted, actual = v.decision == cls, label == cls
            if predicted and actual:
                c.tp += 1
            elif predicted:
                c.fp += 1
            elif actual:
                c.fn += 1
            else:
                c.tn += 1
    return RunScore(counts, {cls: prf(c) for cls, c in counts.items()}, unscored)


@dataclass
class SweepGrid:
    windows: Sequence[str] = ("5%", "10%", "20%")
    retrains: Sequence[str] = ("0%", "10%", "20%", "30%", "40%", "50%")
    thresholds: Sequence[float] = (0.01, 0.05, 0.10, 0.15, 0.20, 0.25)
    noise: Sequence[float] = PAPER_NOISE_LEVELS
    detectors: Sequence[str] = ("pad", "iforest", "lof")
    predictors: Sequence[str] = ("frequency", "random_forest")
    seeds: Sequence[int] = (0,)
    cases: int = 500
    log_dir: str | None = None
    log_pattern: str = "noise_{noise}_seed_{seed}.csv"
    exclude_end: bool = True
    hyper: Hyperparameters = field(default_factory=Hyperparameters)
    outlier_hyper: OutlierHyperparameters = field(default_factory=OutlierHyperparameters)
    max_prefix_cap: int | None = 50

    def runs(self) -> list[tuple[str, str, float, str, str]]:
        """(detector, predictor, noise, W, R) combinations; thresholds are applied per run."""
        out = []
        for det in self.detectors:
            preds = [normalize_kind(p) for p in self.predictors] if det == "pad" else ["none"]
            for pred, noise, w, r in itertools.product(preds, self.noise, self.windows, self.retrains):
                out.append((det, pred, noise, w, r))
        return out

    def n_cells(self) -> int:
        return len(self.runs()) * len(self.thresholds)


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _amount_key(a: str) -> float:
    return float(str(a).rstrip("%c"))


def _load_logs(grid: SweepGrid, logs: Mapping | None) -> dict[tuple[float, int], list[Event] | None]:
    out = {}
    for noise in grid.noise:
        for seed in grid.seeds:
            key = (noise, seed)
            if logs is not None and key in logs:
                out[key] = logs[key]
            elif grid.log_dir is not None:
                path = Path(grid.log_dir) / grid.log_pattern.format(noise=noise, seed=seed)
                try:
                    out[key] = read_stream(path)
                except OSError:
                    log.warning("missing log %s; its cells are skipped", path)
                    out[key] = None
            else:
                out[key] = generate(default_loan_model(), GeneratorConfig(grid.cases, noise, seed)).events
    return out


def run_sweep(grid: SweepGrid, logs: Mapping[tuple[float, int], list[Event]] | None = None) -> list[dict]:
    """Evaluate every grid cell; two rows (normal, anomalous) per cell.

    ``logs`` maps (noise, seed) to an event stream; missing entries are read
    from ``grid.log_dir`` or generated. Counts are pooled over seeds. Rows
    are sorted by (detector, noise, W, R, threshold).
    """
    streams = _load_logs(grid, logs)
    rows = []
    for det, pred, noise, w, r in grid.runs():
        pooled = {tau: ({c: ConfusionCounts() for c in CLASSES}, 0) for tau in grid.thresholds}
        missing = False
        for seed in grid.seeds:
            events = streams[(noise, seed)]
            if events is None:
                missing = True
                break
            cfg = StreamConfig(
                window=w, retrain=r, threshold=grid.thresholds[0] if grid.thresholds else 0.05,
                detector=det, predictor=pred if det == "pad" else "frequency", seed=seed,
                hyper=grid.hyper, outlier_hyper=grid.outlier_hyper, max_prefix_cap=grid.max_prefix_cap,
                score_end=not grid.exclude_end,
            )
            result = score_stream(cfg, events, count_cases(events))
            for tau in grid.thresholds:
                rs = score_run(result.verdicts(tau), events, grid.exclude_end)
                counts, unscored = pooled[tau]
                pooled[tau] = ({c: counts[c] + rs.counts[c] for c in CLASSES}, unscored + rs.unscored)
        for tau in grid.thresholds:
            base = {"detector": det, "predictor": pred, "noise": noise, "W": w, "R": r, "threshold": tau}
            if missing:
                rows.append({**base, "class": "skipped", "precision": "", "recall": "", "f1": "", "unscored": ""})
                continue
            counts, unscored = pooled[tau]
            for cls in CLASSES:
                s = prf(counts[cls])
                rows.append({**base, "class": cls, "precision": s.precision, "recall": s.recall,
                             "f1": s.f1, "unscored": unscored})
    rows.sort(key=lambda d: (d["detector"], d["predictor"], d["noise"], _amount_key(d["W"]),
                             _amount_key(d["R"]), d["threshold"], d["class"]))
    return rows


def results_csv(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_HEADER)
    for d in rows:
        out = []
        for k in RESULT_HEADER:
            v = d[k]
            out.append(_fmt(v) if isinstance(v, float) and k in ("precision", "recall", "f1") else v)
        w.writerow(out)
    return buf.getvalue()


def read_results(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


REPORT_DIMENSIONS = {"threshold": "threshold", "window": "W", "retrain": "R"}


def report(rows: Iterable[dict], by: str) -> str:
    """Mean F1 per (detector, predictor, class, noise, <by>) over the other swept dimensions."""
    if by not in REPORT_DIMENSIONS:
        raise ValueError(f"report dimension must be one of {sorted(REPORT_DIMENSIONS)}")
    col = REPORT_DIMENSIONS[by]
    groups: dict[tuple, list[float]] = {}
    for d in rows:
        if d["class"] not in CLASSES or d["f1"] in ("", None):
            continue
        key = (d["detector"], d["predictor"], d["class"], float(d["noise"]), str(d[col]))
        groups.setdefault(key, []).append(float(d["f1"]))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["detector", "predictor", "class", "noise", col, "f1_mean", "cells"])
    for key in sorted(groups, key=lambda k: (k[0], k[1], k[2], k[3], _amount_key(k[4]))):
        vals = groups[key]
        w.writerow([*key[:3], f"{key[3]:g}", key[4], _fmt(sum(vals) / len(vals)), len(vals)])
    return buf.getvalue()
