"""Synthetic loan-application event logs with injected anomalous events.

A ``ProcessModel`` is a small state machine: every state emits one activity,
transitions are XOR choices with fixed probabilities, and loop-entry edges
lose probability each time they are taken (``loop_decay``), up to
``max_loops`` iterations. Noise is injected per position: before each
normal event, with probability p, one event with a uniformly drawn
activity is inserted and labelled anomalous.
"""

from __future__ import annotations

import hashlib
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .events import END, Case, Event, EventLog, emit_stream

START_TIME = 1_577_836_800  # 2020-01-01T00:00:00Z
PAPER_NOISE_LEVELS = (0.025, 0.05, 0.075, 0.10, 0.125, 0.15)


@dataclass(frozen=True)
class State:
    activity: str
    successors: tuple[tuple[str, float], ...] = ()
    duration: tuple[int, int] = (300, 3600)  # seconds before this activity


@dataclass(frozen=True)
class ProcessModel:
    states: dict[str, State]
    start: tuple[tuple[str, float], ...]
    loop_edges: frozenset[tuple[str, str]] = frozenset()
    loop_decay: float = 0.5
    max_loops: int = 3
    interarrival: tuple[int, int] = (600, 3000)
    end_delay: tuple[int, int] = (60, 600)

    @property
    def activities(self) -> tuple[str, ...]:
        return tuple(sorted({s.activity for s in self.states.values()}))

    def to_json(self) -> str:
        payload = {
            "states": {
                k: {"activity": s.activity, "successors": [list(x) for x in s.successors],
                    "duration": list(s.duration)}
                for k, s in sorted(self.states.items())
            },
            "start": [list(x) for x in self.start],
            "loop_edges": sorted(list(e) for e in self.loop_edges),
            "loop_decay": self.loop_decay,
            "max_loops": self.max_loops,
            "interarrival": list(self.interarrival),
            "end_delay": list(self.end_delay),
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    def checksum(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def transitions(self, state: str, loops: dict[tuple[str, str], int]) -> list[tuple[str, float]]:
        """Successor distribution of ``state`` given loop-edge usage counts."""
        out = []
        for nxt, p in self.states[state].successors:
            edge = (state, nxt)
            if edge in self.loop_edges:
                k = loops.get(edge, 0)
                p = 0.0 if k >= self.max_loops else p * self.loop_decay**k
            if p > 0:
                out.append((nxt, p))
        total = sum(p for _, p in out)
        return [(n, p / total) for n, p in out]


def default_loan_model() -> ProcessModel:
    """Loan application process with 18 activities and 40 trace variants."""
    S = State
    states = {
        "receive": S("Receive application", (("check", 1.0),), (0, 0)),
        "check": S("Check application completeness",
                   (("request", 0.4), ("credit_a", 0.3), ("appraise_b", 0.3)), (600, 3600)),
        "request": S("Request missing documents", (("docs", 1.0),), (300, 1800)),
        "docs": S("Receive missing documents", (("check", 1.0),), (3600, 14400)),
        "credit_a": S("Check credit history", (("risk_a", 1.0),), (900, 3600)),
        "risk_a": S("Assess loan risk", (("appraise_a", 1.0),), (600, 2400)),
        "appraise_a": S("Appraise property", (("eligibility", 1.0),), (1800, 7200)),
        "appraise_b": S("Appraise property", (("credit_b", 1.0),), (1800, 7200)),
        "credit_b": S("Check credit history", (("risk_b", 1.0),), (900, 3600)),
        "risk_b": S("Assess loan risk", (("eligibility", 1.0),), (600, 2400)),
        "eligibility": S("Assess eligibility", (("reject", 0.15), ("prepare", 0.85)), (600, 3600)),
        "reject": S("Reject application", (("notify", 1.0),), (300, 1200)),
        "prepare": S("Prepare acceptance pack", (("quote_check", 1.0),), (600, 2400)),
        "quote_check": S("Check if home insurance quote is requested",
                         (("quote", 0.5), ("send_pack", 0.5)), (120, 600)),
        "quote": S("Send home insurance quote", (("send_pack", 1.0),), (300, 1800)),
        "send_pack": S("Send acceptance pack", (("verify", 1.0),), (300, 1800)),
        "verify": S("Verify repayment agreement", (("approve", 0.8), ("cancel", 0.2)), (3600, 10800)),
        "approve": S("Approve application", (("notify", 1.0),), (600, 2400)),
        "cancel": S("Cancel application", (("notify", 1.0),), (300, 1200)),
        "notify": S("Notify customer", (("archive", 1.0),), (120, 900)),
        "archive": S("Archive application", (), (300, 1800)),
    }
    return ProcessModel(states, (("receive", 1.0),), frozenset({("check", "request")}))


def walk(model: ProcessModel, rng: np.random.Generator) -> list[tuple[str, int]]:
    """One clean trace as (activity, seconds since previous event) pairs."""
    loops: dict[tuple[str, str], int] = defaultdict(int)
    names, probs = zip(*model.start)
    state = names[rng.choice(len(names), p=np.asarray(probs) / sum(probs))]
    trace = []
    while True:
        s = model.states[state]
        lo, hi = s.duration
        trace.append((s.activity, int(rng.integers(lo, hi + 1))))
        options = model.transitions(state, loops)
        if not options:
            return trace
        i = rng.choice(len(options), p=[p for _, p in options])
        nxt = options[i][0]
        if (state, nxt) in model.loop_edges:
            loops[(state, nxt)] += 1
        state = nxt


def _configs_after(model: ProcessModel, prefix: Sequence[str]):
    """Weighted (next state, loop usage) configurations consistent with ``prefix``.

    The empty prefix maps to the start distribution; the pseudo-state END
    marks a finished walk.
    """
    frontier: dict[tuple[str, tuple], float] = {}
    for name, p in model.start:
        frontier[(name, ())] = frontier.get((name, ()), 0.0) + p
    for act in prefix:
        nxt: dict[tuple[str, tuple], float] = {}
        for (state, loops), w in frontier.items():
            if state == END or model.states[state].activity != act:
                continue
            counts = dict(loops)
            for succ, p in model.transitions(state, counts):
                c2 = dict(counts)
                if (state, succ) in model.loop_edges:
                    c2[(state, succ)] = c2.get((state, succ), 0) + 1
                key = (succ, tuple(sorted(c2.items())))
                nxt[key] = nxt.get(key, 0.0) + w * p
            if not model.transitions(state, counts):
                nxt[(END, ())] = nxt.get((END, ()), 0.0) + w
        frontier = nxt
    return frontier


def next_activity_probability(model: ProcessModel, clean_prefix: Sequence[str], activity: str) -> float:
    """Exact probability of ``activity`` (or END) following ``clean_prefix`` in the clean process.

    Returns 0 when the prefix itself is impossible.
    """
    frontier = _configs_after(model, clean_prefix)
    total = sum(frontier.values())
    if total == 0:
        return 0.0
    hit = 0.0
    for (state, _), w in frontier.items():
        label = END if state == END else model.states[state].activity
        if label == activity:
            hit += w
    return hit / total


def is_valid_trace(model: ProcessModel, activities: Sequence[str]) -> bool:
    """True when ``activities`` is a complete path of the model."""
    return next_activity_probability(model, activities, END) > 0.0 if activities else False


def enumerate_variants(model: ProcessModel) -> set[tuple[str, ...]]:
    """All distinct complete activity sequences (loops are bounded)."""
    out: set[tuple[str, ...]] = set()

    def dfs(state: str, loops: dict, trace: tuple[str, ...]):
        trace = trace + (model.states[state].activity,)
        options = model.transitions(state, loops)
        if not options:
            out.add(trace)
            return
        for nxt, _ in options:
            l2 = dict(loops)
            if (state, nxt) in model.loop_edges:
                l2[(state, nxt)] = l2.get((state, nxt), 0) + 1
            dfs(nxt, l2, trace)

    for name, _ in model.start:
        dfs(name, {}, ())
    return out


@dataclass(frozen=True)
class GeneratorConfig:
    case_count: int = 500
    noise: float = 0.10
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.noise <= 1.0:
            raise ValueError(f"noise level must lie in [0, 1], got {self.noise}")
        if self.case_count < 1:
            raise ValueError("case_count must be >= 1")


@dataclass
class GeneratedLog:
    events: list[Event]  # stream order, END markers included
    config: GeneratorConfig
    model: ProcessModel
    cases: list[Case] = field(repr=False, default_factory=list)  # generation order

    @property
    def log(self) -> EventLog:
        return EventLog(self.cases)

    def non_marker_events(self) -> Iterator[Event]:
        return (e for e in self.events if not e.is_case_end)

    @property
    def n_events(self) -> int:
        return sum(1 for _ in self.non_marker_events())

    @property
    def n_anomalous(self) -> int:
        return sum(1 for e in self.non_marker_events() if e.truth == "anomalous")

    def metadata(self) -> dict:
        return {
            "seed": self.config.seed,
            "noise": self.config.noise,
            "case_count": self.config.case_count,
            "model_checksum": self.model.checksum(),
            "events": self.n_events,
            "anomalous_events": self.n_anomalous,
            "activities": len(self.model.activities),
        }

    def write(self, path: str | Path) -> Path:
        """Write the stream CSV and a ``<path>.meta.json`` sidecar; returns the sidecar path."""
        path = Path(path)
        path.write_text(emit_stream(self.events), encoding="utf-8", newline="")
        meta = path.with_name(path.name + ".meta.json")
        meta.write_text(json.dumps(self.metadata(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return meta


def generate(model: ProcessModel | None = None, config: GeneratorConfig | None = None) -> GeneratedLog:
    """Simulate ``case_count`` cases and inject noise at level ``config.noise``.

    Arrivals, clean walks and noise use independent RNG streams, so the
    clean backbone for a seed is the same at every noise level.
    """
    model = model or default_loan_model()
    config = config or GeneratorConfig()
    arrival_rng, walk_rng, noise_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(3)
    )
    alphabet = model.activities
    p = config.noise
    width = len(str(config.case_count))
    t = START_TIME
    cases: list[Case] = []
    stream: list[tuple[int, int, int, Event]] = []
    for i in range(config.case_count):
        if i:
            t += int(arrival_rng.integers(model.interarrival[0], model.interarrival[1] + 1))
        case_id = f"case{i + 1:0{width}d}"
        clean = []
        ts = t
        for activity, gap in walk(model, walk_rng):
            ts += gap
            clean.append((activity, ts))
        events: list[Event] = []
        for activity, ts in clean:
            if p > 0 and noise_rng.random() < p:
                injected = alphabet[int(noise_rng.integers(len(alphabet)))]
                prev = events[-1].timestamp if events else ts
                events.append(Event(case_id, injected, (prev + ts) // 2, "anomalous"))
            events.append(Event(case_id, activity, ts, "normal"))
        lo, hi = model.end_delay
        end_ts = events[-1].timestamp + int(arrival_rng.integers(lo, hi + 1))
        case = Case(case_id, events, completed=True)
        cases.append(case)
        for j, e in enumerate(events):
            stream.append((e.timestamp, i, j, e))
        stream.append((end_ts, i, len(events), Event(case_id, END, end_ts, None, True)))
    stream.sort(key=lambda r: r[:3])
    return GeneratedLog([r[3] for r in stream], config, model, cases)


def injection_report(generated: GeneratedLog) -> list[dict]:
    """Clean-process probability of every injected activity at its position.

    Probabilities are conditioned on the normal events that precede the
    injection in its case.
    """
    rows = []
    cache: dict[tuple, float] = {}
    for case in generated.cases:
        clean_prefix: list[str] = []
        for pos, e in enumerate(case.events, start=1):
            if e.truth == "anomalous":
                key = (tuple(clean_prefix), e.activity)
                if key not in cache:
                    cache[key] = next_activity_probability(generated.model, clean_prefix, e.activity)
                rows.append({"case_id": case.case_id, "position": pos,
                             "activity": e.activity, "clean_probability": cache[key]})
            else:
                clean_prefix.append(e.activity)
    return rows
