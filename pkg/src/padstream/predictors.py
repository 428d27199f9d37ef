"""Per-bucket next-activity predictors and their probability distributions."""

from __future__ import annotations

import csv
import io
import threading
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .encoding import (
    Alphabet, FeatureVector, TrainingBucket, as_alphabet, check_bucket_widths, infer_alphabet,
)
from .events import END
from .forest import RandomForest

KINDS = ("frequency", "random_forest")
_KIND_ALIASES = {"rf": "random_forest", "freq": "frequency"}


class ConfigurationError(ValueError):
    pass


def normalize_kind(kind: str) -> str:
    kind = _KIND_ALIASES.get(kind, kind)
    if kind not in KINDS:
        raise ConfigurationError(f"unknown predictor kind {kind!r}; expected one of {KINDS}")
    return kind


@dataclass(frozen=True)
class Hyperparameters:
    n_trees: int = 100
    max_depth: int | None = 20
    min_leaf: int = 1
    max_features: str | int | float | None = "sqrt"
    bootstrap: bool = True
    laplace: bool = False


class PredictionDistribution:
    """Probabilities over ``labels`` (alphabet order, END last)."""

    __slots__ = ("labels", "probs", "model_version", "_index")

    def __init__(self, labels: Sequence[str], probs, model_version: int = 0):
        self.labels = tuple(labels)
        self.probs = np.asarray(probs, dtype=np.float64)
        self.model_version = model_version
        self._index = {a: i for i, a in enumerate(self.labels)}

    @property
    def entries(self) -> dict[str, float]:
        return dict(zip(self.labels, self.probs.tolist()))

    def __getitem__(self, label: str) -> float:
        i = self._index.get(label)
        return 0.0 if i is None else float(self.probs[i])

    def argmax(self) -> str:
        # np.argmax returns the first maximum: lowest alphabet index wins
        return self.labels[int(np.argmax(self.probs))]

    def __repr__(self) -> str:
        nz = {a: round(p, 4) for a, p in self.entries.items() if p > 0}
        return f"PredictionDistribution({nz}, v{self.model_version})"


def _normalized(counts: np.ndarray) -> np.ndarray:
    total = counts.sum()
    if total <= 0:
        return np.full(counts.shape, 1.0 / counts.size)
    return counts / total


class FrequencyPredictor:
    """Relative next-label frequencies conditioned on the exact prefix.

    Unseen prefixes back off to the last activity, then to the marginal.
    """

    def __init__(self, label_index: Mapping[str, int], laplace: bool = False):
        self.label_index = label_index
        self.n_labels = len(label_index)
        self.laplace = laplace

    def fit(self, prefixes: Sequence[tuple[str, ...]], labels: Sequence[str]):
        self.exact: dict[tuple[str, ...], Counter] = {}
        self.last: dict[str, Counter] = {}
        self.marginal: Counter = Counter(labels)
        for prefix, label in zip(prefixes, labels):
            self.exact.setdefault(prefix, Counter())[label] += 1
            self.last.setdefault(prefix[-1], Counter())[label] += 1
        return self

    def _vector(self, counter: Counter) -> np.ndarray:
        v = np.zeros(self.n_labels)
        for label, c in counter.items():
            v[self.label_index[label]] = c
        if self.laplace:
            v += 1.0
        return _normalized(v)

    def predict_activities(self, prefix: tuple[str, ...]) -> np.ndarray:
        counter = self.exact.get(prefix)
        if counter is None:
            counter = self.last.get(prefix[-1]) if prefix else None
        if counter is None:
            counter = self.marginal
        return self._vector(counter)


class ForestPredictor:
    def __init__(self, label_index: Mapping[str, int], hyper: Hyperparameters, seed):
        self.label_index = label_index
        self.n_labels = len(label_index)
        self.hyper = hyper
        self.seed = seed

    def fit(self, matrix: np.ndarray, labels: Sequence[str]):
        present = sorted({self.label_index[a] for a in labels})
        self.classes = np.asarray(present, dtype=np.intp)
        code = {c: i for i, c in enumerate(present)}
        y = np.array([code[self.label_index[a]] for a in labels], dtype=np.intp)
        h = self.hyper
        self.forest = RandomForest(
            n_trees=h.n_trees, max_depth=h.max_depth, min_leaf=h.min_leaf,
            max_features=h.max_features, bootstrap=h.bootstrap, seed=self.seed,
        ).fit(matrix, y, n_classes=len(present))
        return self

    def predict_values(self, values: np.ndarray) -> np.ndarray:
        out = np.zeros(self.n_labels)
        out[self.classes] = self.forest.predict_proba_one(values)
        return out


@dataclass
class BucketedModel:
    """One next-activity predictor per prefix length, plus a first-activity prior.

    Bucket predictors are fitted on first use. Each bucket's RNG stream is
    derived from (seed, n) alone, so results do not depend on access order.
    """

    buckets: Mapping[int, TrainingBucket]
    alphabet: Alphabet
    kind: str
    hyper: Hyperparameters
    seed: int
    model_version: int = 1
    first_activity: np.ndarray | None = None
    _fitted: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        self.labels = tuple(self.alphabet) + (END,)
        self.label_index = {a: i for i, a in enumerate(self.labels)}
        self.max_bucket = max(self.buckets) if self.buckets else 0

    def bucket_predictor(self, n: int):
        fitted = self._fitted.get(n)
        if fitted is not None:
            return fitted
        with self._lock:
            if n not in self._fitted:
                self._fitted[n] = self._fit_bucket(n)
            return self._fitted[n]

    def _fit_bucket(self, n: int):
        bucket = self.buckets.get(n)
        if bucket is None or len(bucket) == 0:
            return None
        if self.kind == "frequency":
            return FrequencyPredictor(self.label_index, self.hyper.laplace).fit(
                bucket.prefixes, bucket.labels
            )
        seed = np.random.SeedSequence([self.seed, n])
        return ForestPredictor(self.label_index, self.hyper, seed).fit(bucket.matrix, bucket.labels)

    def fit_all(self) -> "BucketedModel":
        for n in self.buckets:
            self.bucket_predictor(n)
        return self

    def uniform(self) -> PredictionDistribution:
        k = len(self.labels)
        return PredictionDistribution(self.labels, np.full(k, 1.0 / k), self.model_version)

    def first_distribution(self) -> PredictionDistribution:
        if self.first_activity is None:
            return self.uniform()
        return PredictionDistribution(self.labels, self.first_activity, self.model_version)

    def summary_csv(self) -> str:
        """Per bucket row count and label histogram."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bucket", "rows", "label", "count"])
        for n in sorted(self.buckets):
            b = self.buckets[n]
            hist = Counter(b.labels)
            for label in self.labels:
                if hist.get(label):
                    w.writerow([n, len(b), label, hist[label]])
        return buf.getvalue()


def _first_activity_vector(buckets, labels, laplace: bool) -> np.ndarray | None:
    b1 = buckets.get(1)
    if b1 is None or len(b1) == 0:
        return None
    index = {a: i for i, a in enumerate(labels)}
    v = np.zeros(len(labels))
    for prefix in b1.prefixes:
        v[index[prefix[0]]] += 1
    if laplace:
        v[:-1] += 1.0  # END can never be a first activity
    return _normalized(v)


def train(
    buckets: Mapping[int, TrainingBucket],
    kind: str = "frequency",
    hyper: Hyperparameters | None = None,
    seed: int = 0,
    alphabet: Alphabet | Sequence[str] | None = None,
    model_version: int = 1,
    eager: bool = False,
) -> BucketedModel:
    """Build a bucketed next-activity model.

    ``alphabet`` defaults to the labels occurring in the bucket prefixes.
    With ``eager`` all bucket predictors are fitted immediately; otherwise
    each is fitted on first prediction with an identical result.
    """
    kind = normalize_kind(kind)
    hyper = hyper or Hyperparameters()
    if not any(len(b) for b in buckets.values()):
        raise ValueError("train needs at least one non-empty bucket")
    alphabet = infer_alphabet(buckets) if alphabet is None else as_alphabet(alphabet)
    if kind != "frequency":
        check_bucket_widths(buckets, alphabet)
    labels = tuple(alphabet) + (END,)
    model = BucketedModel(
        dict(buckets), alphabet, kind, hyper, seed, model_version,
        _first_activity_vector(buckets, labels, hyper.laplace),
    )
    return model.fit_all() if eager else model


def predict_activities(model: BucketedModel, prefix: Sequence[str], values: np.ndarray | None = None):
    """Distribution for the activity following ``prefix`` (already truncated)."""
    n = len(prefix)
    if n == 0:
        return model.first_distribution()
    predictor = model.bucket_predictor(n)
    if predictor is None:
        return model.uniform()
    if isinstance(predictor, FrequencyPredictor):
        probs = predictor.predict_activities(tuple(prefix))
    else:
        probs = predictor.predict_values(values)
    return PredictionDistribution(model.labels, probs, model.model_version)


def predict(model: BucketedModel, prefix_vector: FeatureVector | None) -> PredictionDistribution:
    """Next-activity distribution for an encoded prefix.

    ``None`` stands for the empty prefix and yields the first-activity
    distribution. Vectors longer than the largest bucket must be truncated
    by the caller (see ``encoding.truncate_prefix``).
    """
    if prefix_vector is None:
        return model.first_distribution()
    n = prefix_vector.n
    if n > model.max_bucket:
        raise ValueError(f"prefix length {n} exceeds largest bucket {model.max_bucket}")
    expected = model.alphabet.width(n)
    if prefix_vector.width != expected:
        raise ValueError(f"vector width {prefix_vector.width} != bucket width {expected}")
    return predict_activities(model, prefix_vector.decode(model.alphabet), prefix_vector.values)
