"""Online loop: score each arriving event, slide the case window, retrain on interval."""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .encoding import bucketize, default_max_prefix
from .events import Case, CaseAssembler, Event, EventLog, StaleEventError
from .pad import ANOMALOUS, NORMAL, UNSCORED, Verdict, check_threshold, next_distribution
from .predictors import Hyperparameters, normalize_kind, train
from .unsupervised import DETECTORS as OUTLIER_DETECTORS
from .unsupervised import OutlierHyperparameters, fit as fit_outliers

log = logging.getLogger(__name__)

DETECTORS = ("pad",) + OUTLIER_DETECTORS


class StreamConfigError(ValueError):
    pass


def round_half_up(x: float) -> int:
    # tolerance absorbs float noise such as 0.1 * 30 = 3.0000000000000004
    return math.floor(x + 0.5 + 1e-9)


def parse_amount(spec) -> tuple[str, float]:
    """``"10%"`` -> ("ratio", 0.1); ``"25c"`` or an int -> ("count", 25)."""
    if isinstance(spec, bool):
        raise StreamConfigError(f"bad amount {spec!r}")
    if isinstance(spec, int):
        return "count", spec
    if isinstance(spec, float):
        return "ratio", spec
    s = str(spec).strip()
    try:
        if s.endswith("%"):
            return "ratio", float(s[:-1]) / 100.0
        if s.endswith("c"):
            value = float(s[:-1])
            if value != int(value):
                raise ValueError
            return "count", int(value)
        return "ratio", float(s)
    except ValueError:
        raise StreamConfigError(f"bad amount {spec!r}; use e.g. '10%' or '25c'") from None


def resolve_window(total_cases: int | None, window_ratio) -> int:
    """Window size W in cases: max(1, round(ratio * total)) or an absolute count."""
    mode, value = parse_amount(window_ratio)
    if mode == "count":
        if value < 1:
            raise StreamConfigError("absolute window must be >= 1")
        return int(value)
    if not 0.0 < value <= 1.0:
        raise StreamConfigError(f"window ratio must lie in (0%, 100%], got {window_ratio!r}")
    if total_cases is None:
        raise StreamConfigError(
            "window given as a ratio but the total case count is unknown; "
            "give an absolute window such as '25c'"
        )
    return max(1, round_half_up(value * total_cases))


def resolve_retrain(window: int, retrain_ratio) -> int:
    """Absolute retraining interval max(1, round(R * W))."""
    mode, value = parse_amount(retrain_ratio)
    if mode == "count":
        if value < 0:
            raise StreamConfigError("retrain count must be >= 0")
        return max(1, int(value))
    if not 0.0 <= value <= 1.0:
        raise StreamConfigError(f"retrain ratio must lie in [0%, 100%], got {retrain_ratio!r}")
    return max(1, round_half_up(value * window))


@dataclass
class StreamConfig:
    window: str | int | float = "10%"
    retrain: str | int | float = "20%"
    threshold: float = 0.05
    detector: str = "pad"
    predictor: str = "random_forest"
    seed: int = 0
    hyper: Hyperparameters = field(default_factory=Hyperparameters)
    outlier_hyper: OutlierHyperparameters = field(default_factory=OutlierHyperparameters)
    max_prefix_cap: int | None = 50
    score_end: bool = False

    def validate(self) -> "StreamConfig":
        check_threshold(self.threshold)
        if self.detector not in DETECTORS:
            raise StreamConfigError(f"unknown detector {self.detector!r}; expected one of {DETECTORS}")
        self.predictor = normalize_kind(self.predictor)
        parse_amount(self.window)
        mode, value = parse_amount(self.retrain)
        if mode == "ratio" and not 0.0 <= value <= 1.0:
            raise StreamConfigError(f"retrain ratio must lie in [0%, 100%], got {self.retrain!r}")
        mode, value = parse_amount(self.window)
        if mode == "ratio" and not 0.0 < value <= 1.0:
            raise StreamConfigError(f"window ratio must lie in (0%, 100%], got {self.window!r}")
        return self


class SlidingWindow:
    """FIFO of the W most recently completed cases plus the retrain counter."""

    def __init__(self, capacity: int, retrain_threshold: int):
        if capacity < 1 or retrain_threshold < 1:
            raise ValueError("capacity and retrain threshold must be >= 1")
        self.capacity = capacity
        self.retrain_threshold = retrain_threshold
        self.buffer: deque[Case] = deque(maxlen=capacity)
        self.pending_count = 0
        self.trained = False

    def __len__(self) -> int:
        return len(self.buffer)

    def add(self, case: Case) -> bool:
        """Insert a completed case; True when the model must be (re)trained now."""
        self.buffer.append(case)
        if not self.trained:
            if len(self.buffer) == self.capacity:
                self.trained = True
                self.pending_count = 0
                return True
            return False
        self.pending_count += 1
        if self.pending_count >= self.retrain_threshold:
            self.pending_count = 0
            return True
        return False

    def cases(self) -> list[Case]:
        return list(self.buffer)


@dataclass(frozen=True)
class ScoredEvent:
    """Threshold-free outcome for one event; ``verdict(tau)`` applies a threshold."""

    event: Event
    position: int
    model_version: int
    score: float | None
    detector: str
    scorer: object = None  # AnomalyScorer for outlier detectors
    bucket: int = 0

    def verdict(self, tau: float) -> Verdict:
        if self.score is None:
            return Verdict(self.event, self.position, UNSCORED, None, tau, 0, self.detector)
        if self.detector == "pad":
            decision = ANOMALOUS if self.score < tau else NORMAL
        else:
            decision = ANOMALOUS if self.score > self.scorer.cutoff(self.bucket, tau) else NORMAL
        return Verdict(self.event, self.position, decision, self.score, tau, self.model_version, self.detector)


@dataclass
class RetrainRecord:
    model_version: int
    completed_cases: int  # completed-case count when the retrain fired
    window_case_ids: tuple[str, ...]


class OnlineDetector:
    """Single-threaded event-by-event detector with synchronous retraining."""

    def __init__(self, config: StreamConfig, window: int, retrain_interval: int):
        self.config = config.validate()
        self.window = SlidingWindow(window, retrain_interval)
        self.assembler = CaseAssembler()
        self.model = None
        self.model_version = 0
        self.completed = 0
        self.retrains: list[RetrainRecord] = []
        self.stale: list[Event] = []

    def _retrain(self) -> None:
        cfg = self.config
        cases = self.window.cases()
        self.model_version += 1
        alphabet = EventLog(cases).activity_alphabet
        buckets = bucketize(cases, default_max_prefix(cases, cfg.max_prefix_cap), alphabet)
        seed = int(np.random.SeedSequence([cfg.seed, self.model_version]).generate_state(1)[0])
        if cfg.detector == "pad":
            self.model = train(buckets, cfg.predictor, cfg.hyper, seed, alphabet, self.model_version)
        else:
            self.model = fit_outliers(
                buckets, cfg.detector, cfg.outlier_hyper, seed, cfg.threshold,
                alphabet, self.model_version, eager=False,
            )
        self.retrains.append(
            RetrainRecord(self.model_version, self.completed, tuple(c.case_id for c in cases))
        )

    def _score(self, prefix: Sequence[Event], event: Event, position: int) -> ScoredEvent:
        det = self.config.detector
        if self.model is None:
            return ScoredEvent(event, position, 0, None, det)
        if det == "pad":
            score = next_distribution(self.model, prefix)[event.activity]
            return ScoredEvent(event, position, self.model_version, score, det)
        res = self.model.raw_score(list(prefix) + [event])
        if res is None:
            return ScoredEvent(event, position, 0, None, det)
        n, score = res
        return ScoredEvent(event, position, self.model_version, score, det, self.model, n)

    def feed(self, event: Event) -> ScoredEvent | None:
        """Process one event; returns its scored outcome (None for unscored markers / stale events)."""
        asm = self.assembler
        if event.case_id in asm.completed_ids:
            log.warning("dropping stale event: %s", StaleEventError(event))
            self.stale.append(event)
            return None
        case = asm.open.get(event.case_id)
        prefix = case.events if case is not None else []
        out = None
        if event.is_case_end:
            if self.config.score_end and self.config.detector == "pad":
                out = self._score(prefix, event, len(prefix) + 1)
            done = asm.push(event)
            self.completed += 1
            if self.window.add(done):
                self._retrain()
            return out
        out = self._score(prefix, event, len(prefix) + 1)
        asm.push(event)
        return out


@dataclass
class StreamResult:
    scored: list[ScoredEvent]
    window: int
    retrain_interval: int
    retrains: list[RetrainRecord]
    completed_cases: int
    stale: list[Event]
    final_window: list[Case]

    def verdicts(self, tau: float) -> list[Verdict]:
        check_threshold(tau)
        return [s.verdict(tau) for s in self.scored]

    @property
    def n_retrains(self) -> int:
        return len(self.retrains)


def count_cases(events: Iterable[Event]) -> int:
    return len({e.case_id for e in events})


def score_stream(config: StreamConfig, events: Sequence[Event], total_cases: int | None = None) -> StreamResult:
    """Run the online loop once; thresholds are applied afterwards via ``verdicts``."""
    config.validate()
    if total_cases is None and parse_amount(config.window)[0] == "ratio":
        total_cases = count_cases(events)
    W = resolve_window(total_cases, config.window)
    R = resolve_retrain(W, config.retrain)
    det = OnlineDetector(config, W, R)
    scored = []
    for event in events:
        s = det.feed(event)
        if s is not None:
            scored.append(s)
    if det.model is None:
        log.warning(
            "stream ended after %d completed cases, before the window (W=%d) filled; "
            "all verdicts are unscored", det.completed, W,
        )
    return StreamResult(scored, W, R, det.retrains, det.completed, det.stale, det.window.cases())


def run_stream(config: StreamConfig, events: Sequence[Event], total_cases: int | None = None) -> list[Verdict]:
    """One verdict per non-marker event, in arrival order, at ``config.threshold``."""
    return score_stream(config, events, total_cases).verdicts(config.threshold)
