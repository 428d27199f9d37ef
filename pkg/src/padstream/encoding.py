"""Prefix bucketing and index-based encoding of case prefixes.

A prefix of length n is encoded as n one-hot activity blocks, each of
width ``len(alphabet) + 1`` (the last slot is UNKNOWN), followed by the n
event durations and then the n cumulative durations, all in seconds.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .events import END, Case, Event, EventLog

UNKNOWN = "<unknown>"


class Alphabet:
    """Ordered activity labels with a constant-time index lookup."""

    def __init__(self, labels: Iterable[str]):
        self.labels = tuple(labels)
        if END in self.labels:
            raise ValueError("END is reserved and cannot be part of the alphabet")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("duplicate activity labels")
        self._index = {a: i for i, a in enumerate(self.labels)}

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def __eq__(self, other) -> bool:
        return isinstance(other, Alphabet) and self.labels == other.labels

    def __repr__(self) -> str:
        return f"Alphabet({list(self.labels)!r})"

    @property
    def block(self) -> int:
        return len(self.labels) + 1

    def index(self, activity: str) -> int:
        return self._index.get(activity, len(self.labels))

    def width(self, n: int) -> int:
        return n * self.block + 2 * n


def as_alphabet(alphabet: Alphabet | Sequence[str]) -> Alphabet:
    return alphabet if isinstance(alphabet, Alphabet) else Alphabet(alphabet)


@dataclass(frozen=True, eq=False)
class FeatureVector:
    n: int
    activity_onehot: np.ndarray  # (n, |A|+1)
    durations: np.ndarray  # (n,)
    cumulative: np.ndarray  # (n,)
    values: np.ndarray  # flattened row, width n*(|A|+1) + 2n

    @property
    def width(self) -> int:
        return self.values.shape[0]

    def decode(self, alphabet: Alphabet | Sequence[str]) -> tuple[str, ...]:
        labels = tuple(as_alphabet(alphabet)) + (UNKNOWN,)
        return tuple(labels[i] for i in self.activity_onehot.argmax(axis=1))


def _encode_arrays(activities: Sequence[str], timestamps: Sequence[int], alphabet: Alphabet):
    n = len(activities)
    onehot = np.zeros((n, alphabet.block))
    onehot[np.arange(n), [alphabet.index(a) for a in activities]] = 1.0
    ts = np.asarray(timestamps, dtype=np.float64)
    dur = np.empty(n)
    dur[0] = 0.0
    dur[1:] = np.diff(ts)
    return onehot, dur, np.cumsum(dur)


def encode_prefix(prefix: Sequence[Event], alphabet: Alphabet | Sequence[str]) -> FeatureVector:
    """Encode a non-empty, timestamp-nondecreasing prefix of one case."""
    if not prefix:
        raise ValueError("cannot encode an empty prefix")
    alphabet = as_alphabet(alphabet)
    onehot, dur, cum = _encode_arrays(
        [e.activity for e in prefix], [e.timestamp for e in prefix], alphabet
    )
    values = np.concatenate([onehot.ravel(), dur, cum])
    return FeatureVector(len(prefix), onehot, dur, cum, values)


def truncate_prefix(prefix: Sequence[Event], n: int) -> Sequence[Event]:
    """The most recent ``n`` events of ``prefix``."""
    return prefix[-n:] if len(prefix) > n else prefix


@dataclass(eq=False)
class TrainingBucket:
    n: int
    matrix: np.ndarray  # (rows, width)
    labels: list[str]
    prefixes: list[tuple[str, ...]]  # activity sequence behind each row

    def __len__(self) -> int:
        return len(self.labels)

    def to_csv(self, alphabet: Alphabet | Sequence[str]) -> str:
        """Debug dump: one row per vector, label in the last column."""
        alphabet = as_alphabet(alphabet)
        names = list(alphabet) + [UNKNOWN]
        header = [f"act{i}_{a}" for i in range(1, self.n + 1) for a in names]
        header += [f"dur{i}" for i in range(1, self.n + 1)]
        header += [f"cumdur{i}" for i in range(1, self.n + 1)]
        header.append("label")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row, label in zip(self.matrix, self.labels):
            w.writerow([f"{v:g}" for v in row] + [label])
        return buf.getvalue()


def infer_alphabet(buckets: dict[int, TrainingBucket]) -> Alphabet:
    """Activities seen in bucket prefixes or labels; END excluded."""
    seen = {a for b in buckets.values() for p in b.prefixes for a in p}
    seen |= {a for b in buckets.values() for a in b.labels}
    seen.discard(END)
    return Alphabet(sorted(seen))


def check_bucket_widths(buckets: dict[int, TrainingBucket], alphabet: Alphabet) -> None:
    for n, b in buckets.items():
        if b.matrix.shape[1] != alphabet.width(n):
            raise ValueError(
                f"bucket {n} has width {b.matrix.shape[1]} but the alphabet implies "
                f"{alphabet.width(n)}; pass the alphabet used by bucketize"
            )


def default_max_prefix(cases: Sequence[Case], cap: int | None = None) -> int:
    longest = max((len(c) for c in cases), default=1)
    return max(1, min(longest, cap) if cap else longest)


def bucketize(
    log: EventLog | Sequence[Case],
    max_prefix: int | None = None,
    alphabet: Alphabet | Sequence[str] | None = None,
) -> dict[int, TrainingBucket]:
    """Group case prefixes into buckets 1..max_prefix with next-activity labels.

    Bucket n holds one row per case with at least n events. The label is
    the case's (n+1)-th activity, or END when the case has exactly n events.
    """
    cases = log.cases if isinstance(log, EventLog) else list(log)
    if not cases:
        raise ValueError("cannot bucketize an empty log")
    if alphabet is None:
        alphabet = EventLog(cases).activity_alphabet
    alphabet = as_alphabet(alphabet)
    if max_prefix is None:
        max_prefix = default_max_prefix(cases)
    if max_prefix < 1:
        raise ValueError("max_prefix must be >= 1")

    rows: dict[int, list[np.ndarray]] = {n: [] for n in range(1, max_prefix + 1)}
    labels: dict[int, list[str]] = {n: [] for n in rows}
    prefixes: dict[int, list[tuple[str, ...]]] = {n: [] for n in rows}
    for case in cases:
        acts = case.activities
        onehot, dur, cum = _encode_arrays(acts, [e.timestamp for e in case.events], alphabet)
        for n in range(1, min(len(acts), max_prefix) + 1):
            rows[n].append(np.concatenate([onehot[:n].ravel(), dur[:n], cum[:n]]))
            labels[n].append(acts[n] if n < len(acts) else END)
            prefixes[n].append(acts[:n])

    buckets = {}
    for n in rows:
        matrix = np.vstack(rows[n]) if rows[n] else np.empty((0, alphabet.width(n)))
        buckets[n] = TrainingBucket(n, matrix, labels[n], prefixes[n])
    return buckets
