"""Bucketed isolation-forest / LOF baselines over encoded prefixes.

tau is read as the expected contamination: the cutoff of a bucket is the
(1 - tau)-quantile of its training scores and an event is anomalous when
its score is strictly above that cutoff.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .encoding import (
    Alphabet, TrainingBucket, as_alphabet, check_bucket_widths, encode_prefix, infer_alphabet,
    truncate_prefix,
)
from .events import Case, Event
from .outliers import IsolationForest, LocalOutlierFactor
from .pad import ANOMALOUS, NORMAL, UNSCORED, Verdict, check_threshold

log = logging.getLogger(__name__)

DETECTORS = ("iforest", "lof")


@dataclass(frozen=True)
class OutlierHyperparameters:
    n_trees: int = 100
    max_samples: int = 256
    height_limit: int | str | None = "auto"
    k: int = 10
    scale_durations: bool = False


class _BucketScorer:
    def __init__(self, kind: str, detector, train_scores: np.ndarray, scale):
        self.kind = kind
        self.detector = detector
        self.train_scores = train_scores
        self.scale = scale  # (columns, lo, span) or None
        self._cutoffs: dict[float, float] = {}

    def transform(self, X: np.ndarray) -> np.ndarray:
        if self.scale is None:
            return X
        cols, lo, span = self.scale
        X = np.array(X, dtype=np.float64, copy=True)
        X[..., cols] = (X[..., cols] - lo) / span
        return X

    def score(self, values: np.ndarray) -> float:
        return float(self.detector.score(self.transform(values[None, :]))[0])

    def cutoff(self, tau: float) -> float:
        c = self._cutoffs.get(tau)
        if c is None:
            c = self._cutoffs[tau] = float(np.quantile(self.train_scores, 1.0 - tau))
        return c


@dataclass
class AnomalyScorer:
    """Per-bucket unsupervised detectors, fitted lazily on first use."""

    buckets: Mapping[int, TrainingBucket]
    alphabet: Alphabet
    kind: str
    hyper: OutlierHyperparameters
    seed: int
    tau: float
    model_version: int = 1
    diagnostics: list[str] = field(default_factory=list)
    _fitted: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        self.max_bucket = max(self.buckets) if self.buckets else 0

    def bucket(self, n: int) -> _BucketScorer | None:
        fitted = self._fitted.get(n, False)
        if fitted is not False:
            return fitted
        with self._lock:
            if n not in self._fitted:
                self._fitted[n] = self._fit_bucket(n)
            return self._fitted[n]

    def _fit_bucket(self, n: int) -> _BucketScorer | None:
        b = self.buckets.get(n)
        if b is None or len(b) == 0:
            return None
        X = b.matrix
        scale = None
        if self.hyper.scale_durations:
            cols = np.arange(X.shape[1] - 2 * n, X.shape[1])
            lo = X[:, cols].min(axis=0)
            span = X[:, cols].max(axis=0) - lo
            span[span == 0] = 1.0
            scale = (cols, lo, span)
            X = X.copy()
            X[:, cols] = (X[:, cols] - lo) / span
        kind = self.kind
        if kind == "lof" and len(b) <= self.hyper.k:
            msg = f"bucket {n}: {len(b)} rows <= k={self.hyper.k}, falling back to iforest"
            self.diagnostics.append(msg)
            log.info(msg)
            kind = "iforest"
        if kind == "lof":
            det = LocalOutlierFactor(self.hyper.k).fit(X)
            train_scores = det.train_scores_
        else:
            seed = np.random.SeedSequence([self.seed, n])
            det = IsolationForest(
                self.hyper.n_trees, self.hyper.max_samples, self.hyper.height_limit, seed
            ).fit(X)
            train_scores = det.score(X)
        return _BucketScorer(kind, det, train_scores, scale)

    def fit_all(self) -> "AnomalyScorer":
        for n in self.buckets:
            self.bucket(n)
        return self

    def cutoff(self, n: int, tau: float | None = None) -> float:
        return self.bucket(n).cutoff(self.tau if tau is None else tau)

    def raw_score(self, prefix: Sequence[Event]) -> tuple[int, float] | None:
        """(bucket, score) for a prefix that already includes the new event."""
        prefix = truncate_prefix(prefix, self.max_bucket)
        bs = self.bucket(len(prefix))
        if bs is None:
            return None
        return len(prefix), bs.score(encode_prefix(prefix, self.alphabet).values)


def fit(
    buckets: Mapping[int, TrainingBucket],
    kind: str = "iforest",
    hyper: OutlierHyperparameters | None = None,
    seed: int = 0,
    tau: float = 0.05,
    alphabet: Alphabet | Sequence[str] | None = None,
    model_version: int = 1,
    eager: bool = True,
) -> AnomalyScorer:
    if kind not in DETECTORS:
        raise ValueError(f"unknown detector {kind!r}; expected one of {DETECTORS}")
    check_threshold(tau)
    if not any(len(b) for b in buckets.values()):
        raise ValueError("fit needs at least one non-empty bucket")
    alphabet = infer_alphabet(buckets) if alphabet is None else as_alphabet(alphabet)
    check_bucket_widths(buckets, alphabet)
    scorer = AnomalyScorer(
        dict(buckets), alphabet, kind, hyper or OutlierHyperparameters(),
        seed, tau, model_version,
    )
    return scorer.fit_all() if eager else scorer


def score_event(
    scorer: AnomalyScorer | None,
    open_case: Case | Sequence[Event] | None,
    new_event: Event,
    tau: float | None = None,
) -> Verdict:
    """Verdict for ``new_event`` from the vector of its prefix including itself."""
    prefix = list(open_case.events if isinstance(open_case, Case) else (open_case or ()))
    position = len(prefix) + 1
    if scorer is None:
        return Verdict(new_event, position, UNSCORED, None, tau or 0.0, 0, "unsupervised")
    tau = scorer.tau if tau is None else check_threshold(tau)
    res = scorer.raw_score(prefix + [new_event])
    if res is None:
        return Verdict(new_event, position, UNSCORED, None, tau, scorer.model_version, scorer.kind)
    n, score = res
    decision = ANOMALOUS if score > scorer.cutoff(n, tau) else NORMAL
    return Verdict(new_event, position, decision, score, tau, scorer.model_version, scorer.kind)
