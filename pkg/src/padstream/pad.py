"""Predictive anomaly detection: flag events whose predicted probability is below tau."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

from .encoding import encode_prefix, truncate_prefix
from .events import END, Case, Event
from .predictors import BucketedModel, PredictionDistribution, predict_activities

NORMAL = "normal"
ANOMALOUS = "anomalous"
UNSCORED = "unscored"

VERDICT_HEADER = ("case_id", "position", "activity", "score", "threshold", "decision", "model_version")


@dataclass(frozen=True)
class Verdict:
    event: Event
    position: int  # 1-based index of the event in its case; END gets len(case)+1
    decision: str
    score: float | None
    threshold: float
    model_version: int
    detector: str = "pad"

    @property
    def scored(self) -> bool:
        return self.decision != UNSCORED


def check_threshold(tau: float) -> float:
    if not 0.0 < tau < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {tau}")
    return tau


def decide(score: float, tau: float) -> str:
    # a score equal to tau counts as normal
    return ANOMALOUS if score < tau else NORMAL


def next_distribution(model: BucketedModel, prefix: Sequence[Event]) -> PredictionDistribution:
    """Distribution over the activity following ``prefix`` (may be empty)."""
    if not prefix:
        return model.first_distribution()
    prefix = truncate_prefix(prefix, model.max_bucket)
    values = None
    if model.kind != "frequency":
        values = encode_prefix(prefix, model.alphabet).values
    return predict_activities(model, [e.activity for e in prefix], values)


def detect(model: BucketedModel | None, open_case: Case | Sequence[Event] | None, new_event: Event, tau: float) -> Verdict:
    """Score ``new_event`` against the prediction made from its case's previous events."""
    check_threshold(tau)
    prefix = _events(open_case)
    position = len(prefix) + 1
    if model is None:
        return Verdict(new_event, position, UNSCORED, None, tau, 0)
    score = next_distribution(model, prefix)[new_event.activity]
    return Verdict(new_event, position, decide(score, tau), score, tau, model.model_version)


def score_end(model: BucketedModel | None, completed_case: Case | Sequence[Event], tau: float, end_event: Event | None = None) -> Verdict:
    """Score the termination of a case as the predicted label END."""
    events = _events(completed_case)
    if end_event is None:
        last = events[-1]
        end_event = Event(last.case_id, END, last.timestamp, None, True)
    return detect(model, events, end_event, tau)


def _events(case) -> Sequence[Event]:
    if case is None:
        return ()
    return case.events if isinstance(case, Case) else case


def format_score(score: float | None) -> str:
    return "" if score is None else f"{score:.10g}"


def verdicts_csv(verdicts: Iterable[Verdict], with_detector: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(VERDICT_HEADER + (("detector",) if with_detector else ()))
    for v in verdicts:
        row = [
            v.event.case_id, v.position, v.event.activity, format_score(v.score),
            f"{v.threshold:g}", v.decision, v.model_version,
        ]
        if with_detector:
            row.append(v.detector)
        w.writerow(row)
    return buf.getvalue()
