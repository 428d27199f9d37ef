"""Events, cases, logs and the line-oriented stream CSV format."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, TextIO

log = logging.getLogger(__name__)

END = "END"
HEADER = ("case_id", "activity", "timestamp", "truth", "end")
TRUTH_VALUES = ("normal", "anomalous")


class StreamFormatError(ValueError):
    """A stream line does not match the CSV schema."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class StreamValidationError(ValueError):
    """A well-formed stream violates an ordering invariant."""

    def __init__(self, case_id: str, message: str):
        super().__init__(f"case {case_id!r}: {message}")
        self.case_id = case_id


class StaleEventError(ValueError):
    """An event arrived for a case that has already completed."""

    def __init__(self, event: "Event"):
        super().__init__(f"event {event.activity!r} for completed case {event.case_id!r}")
        self.event = event


@dataclass(frozen=True)
class Event:
    case_id: str
    activity: str
    timestamp: int
    truth: str | None = None
    is_case_end: bool = False

    def __post_init__(self):
        if not self.activity:
            raise ValueError("activity must be non-empty")
        if self.timestamp < 0:
            raise ValueError("timestamp must be non-negative")
        if self.truth is not None and self.truth not in TRUTH_VALUES:
            raise ValueError(f"unknown truth label {self.truth!r}")


@dataclass
class Case:
    case_id: str
    events: list[Event] = field(default_factory=list)
    completed: bool = False

    def __len__(self) -> int:
        return len(self.events)

    @property
    def activities(self) -> tuple[str, ...]:
        return tuple(e.activity for e in self.events)

    def append(self, event: Event) -> None:
        if event.case_id != self.case_id:
            raise ValueError(f"event for {event.case_id!r} appended to case {self.case_id!r}")
        if self.events and event.timestamp < self.events[-1].timestamp:
            raise StreamValidationError(self.case_id, "timestamp regression")
        self.events.append(event)


@dataclass
class EventLog:
    """A collection of completed cases."""

    cases: list[Case]

    @property
    def activity_alphabet(self) -> tuple[str, ...]:
        # sorted so the alphabet does not depend on case order
        labels = {e.activity for c in self.cases for e in c.events}
        labels.discard(END)
        return tuple(sorted(labels))

    def __len__(self) -> int:
        return len(self.cases)

    @property
    def n_events(self) -> int:
        return sum(len(c) for c in self.cases)


def _lines(source: str | TextIO | Iterable[str]) -> Iterator[str]:
    if isinstance(source, str):
        source = io.StringIO(source)
    for line in source:
        yield line.rstrip("\r\n")


def parse_stream(source: str | TextIO | Iterable[str]) -> list[Event]:
    """Parse stream CSV text (header optional) into events in file order.

    Raises StreamFormatError for malformed lines and StreamValidationError
    when timestamps regress within a case.
    """
    events: list[Event] = []
    last_ts: dict[str, int] = {}
    for lineno, line in enumerate(_lines(source), start=1):
        if not line.strip():
            continue
        try:
            row = next(csv.reader([line]))
        except csv.Error as exc:
            raise StreamFormatError(lineno, str(exc)) from None
        if lineno == 1 and tuple(row) == HEADER:
            continue
        if len(row) != len(HEADER):
            raise StreamFormatError(lineno, f"expected {len(HEADER)} fields, got {len(row)}")
        case_id, activity, ts, truth, end = row
        if not case_id or not activity:
            raise StreamFormatError(lineno, "empty case_id or activity")
        try:
            timestamp = int(ts)
        except ValueError:
            raise StreamFormatError(lineno, f"bad timestamp {ts!r}") from None
        if timestamp < 0:
            raise StreamFormatError(lineno, "negative timestamp")
        if truth not in ("", *TRUTH_VALUES):
            raise StreamFormatError(lineno, f"bad truth {truth!r}")
        if end not in ("0", "1"):
            raise StreamFormatError(lineno, f"bad end flag {end!r}")
        is_end = end == "1"
        if is_end != (activity == END):
            raise StreamFormatError(lineno, "END activity and end flag disagree")
        if case_id in last_ts and timestamp < last_ts[case_id]:
            raise StreamValidationError(case_id, f"timestamp regression at line {lineno}")
        last_ts[case_id] = timestamp
        events.append(Event(case_id, activity, timestamp, truth or None, is_end))
    return events


def emit_stream(events: Iterable[Event]) -> str:
    """Canonical stream CSV text for ``events``, header included."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    for e in events:
        writer.writerow([e.case_id, e.activity, e.timestamp, e.truth or "", int(e.is_case_end)])
    return buf.getvalue()


def read_stream(path: str | Path) -> list[Event]:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_stream(fh)


def write_stream(path: str | Path, events: Iterable[Event]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(emit_stream(events))


class CaseAssembler:
    """Incrementally groups events into open and completed cases."""

    def __init__(self) -> None:
        self.open: dict[str, Case] = {}
        self.completed_ids: set[str] = set()

    def push(self, event: Event) -> Case | None:
        """Add ``event``; return the case if this event completed it."""
        if event.case_id in self.completed_ids:
            raise StaleEventError(event)
        case = self.open.get(event.case_id)
        if event.is_case_end:
            if case is None:
                raise StreamValidationError(event.case_id, "end marker for a case without events")
            case.completed = True
            self.open.pop(event.case_id, None)
            self.completed_ids.add(event.case_id)
            return case
        if case is None:
            case = self.open[event.case_id] = Case(event.case_id)
        case.append(event)
        return None


def assemble_cases(
    events: Iterable[Event], stale: list[Event] | None = None
) -> tuple[list[Case], dict[str, Case]]:
    """Split events into completed cases (completion order) and open ones.

    Stale events are dropped with a warning and appended to ``stale`` when
    a list is given.
    """
    asm = CaseAssembler()
    completed: list[Case] = []
    for event in events:
        try:
            done = asm.push(event)
        except StaleEventError as exc:
            log.warning("dropping stale event: %s", exc)
            if stale is not None:
                stale.append(event)
            continue
        if done is not None:
            completed.append(done)
    return completed, asm.open


def log_from_events(events: Iterable[Event]) -> EventLog:
    completed, _ = assemble_cases(events)
    return EventLog(completed)
