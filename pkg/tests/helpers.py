"""Small builders shared by the test modules."""

from __future__ import annotations

from padstream.events import END, Event


def case_events(case_id, activities, start=0, step=10, truth="normal"):
    """Events of one case with evenly spaced timestamps."""
    return [Event(case_id, a, start + i * step, truth) for i, a in enumerate(activities)]


def sequential_stream(traces, gap=1000, step=10):
    """Cases one after another, each followed by its END marker.

    ``traces`` is a list of activity sequences; case ids are c01, c02, ...
    """
    events = []
    t = 0
    for i, acts in enumerate(traces):
        cid = f"c{i + 1:02d}"
        evs = case_events(cid, acts, t, step)
        events += evs
        events.append(Event(cid, END, evs[-1].timestamp + 1, None, True))
        t = evs[-1].timestamp + gap
    return events
