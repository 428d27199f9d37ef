import io

import pytest
from hypothesis import given, strategies as st

from padstream.events import (
    END, HEADER, Case, CaseAssembler, Event, EventLog, StaleEventError, StreamFormatError,
    StreamValidationError, assemble_cases, emit_stream, log_from_events, parse_stream,
    read_stream, write_stream,
)

from helpers import sequential_stream

SAMPLE = """case_id,activity,timestamp,truth,end
c1,A,10,normal,0
c2,A,11,anomalous,0
c1,B,20,normal,0
c1,END,21,,1
c2,C,30,normal,0
c2,END,31,,1
"""


def test_parse_sample():
    events = parse_stream(SAMPLE)
    assert len(events) == 6
    assert events[1] == Event("c2", "A", 11, "anomalous")
    assert events[3].is_case_end and events[3].activity == END and events[3].truth is None


def test_roundtrip_is_byte_identical():
    assert emit_stream(parse_stream(SAMPLE)) == SAMPLE


def test_header_is_optional():
    body = SAMPLE.split("\n", 1)[1]
    assert parse_stream(body) == parse_stream(SAMPLE)


def test_file_roundtrip(tmp_path):
    path = tmp_path / "s.csv"
    events = parse_stream(SAMPLE)
    write_stream(path, events)
    assert path.read_bytes() == SAMPLE.encode()
    assert read_stream(path) == events


@pytest.mark.parametrize(
    "line, needle",
    [
        ("c1,A,10,normal", "expected 5 fields"),
        ("c1,A,ten,normal,0", "bad timestamp"),
        ("c1,A,-1,normal,0", "negative"),
        ("c1,A,10,weird,0", "bad truth"),
        ("c1,A,10,normal,2", "bad end flag"),
        ("c1,END,10,,0", "disagree"),
        ("c1,A,10,,1", "disagree"),
        (",A,10,normal,0", "empty"),
    ],
)
def test_format_errors_carry_line_numbers(line, needle):
    text = "case_id,activity,timestamp,truth,end\nc0,A,1,normal,0\n" + line + "\n"
    with pytest.raises(StreamFormatError) as exc:
        parse_stream(text)
    assert exc.value.lineno == 3
    assert needle in str(exc.value)


def test_timestamp_regression_within_case_rejected():
    text = "c1,A,10,normal,0\nc2,A,5,normal,0\nc1,B,9,normal,0\n"
    with pytest.raises(StreamValidationError) as exc:
        parse_stream(text)
    assert exc.value.case_id == "c1"


def test_interleaving_across_cases_allowed():
    text = "c1,A,10,normal,0\nc2,A,5,normal,0\nc1,B,10,normal,0\n"
    assert len(parse_stream(text)) == 3


def test_assembler_completes_cases_in_order():
    asm = CaseAssembler()
    done = [asm.push(e) for e in parse_stream(SAMPLE)]
    completed = [c for c in done if c is not None]
    assert [c.case_id for c in completed] == ["c1", "c2"]
    assert completed[0].activities == ("A", "B")
    assert all(c.completed for c in completed)
    assert not asm.open


def test_stale_event_rejected():
    asm = CaseAssembler()
    for e in parse_stream(SAMPLE):
        asm.push(e)
    with pytest.raises(StaleEventError):
        asm.push(Event("c1", "Z", 99, "normal"))


def test_end_without_events_rejected():
    with pytest.raises(StreamValidationError):
        CaseAssembler().push(Event("c9", END, 1, None, True))


def test_assemble_cases_drops_stale_and_keeps_open():
    events = parse_stream(SAMPLE) + [Event("c1", "Z", 99, "normal"), Event("c3", "A", 100, "normal")]
    stale = []
    completed, open_cases = assemble_cases(events, stale)
    assert [c.case_id for c in completed] == ["c1", "c2"]
    assert list(open_cases) == ["c3"]
    assert stale == [Event("c1", "Z", 99, "normal")]


def test_case_rejects_foreign_and_regressing_events():
    case = Case("c1")
    case.append(Event("c1", "A", 5))
    with pytest.raises(ValueError):
        case.append(Event("c2", "A", 6))
    with pytest.raises(StreamValidationError):
        case.append(Event("c1", "B", 4))


def test_event_validation():
    with pytest.raises(ValueError):
        Event("c", "", 1)
    with pytest.raises(ValueError):
        Event("c", "A", -1)
    with pytest.raises(ValueError):
        Event("c", "A", 1, "maybe")


def test_log_alphabet_excludes_end():
    log = log_from_events(parse_stream(SAMPLE))
    assert isinstance(log, EventLog)
    assert log.activity_alphabet == ("A", "B", "C")
    assert log.n_events == 4 and len(log) == 2


label = st.text(alphabet="abcxyz_ ", min_size=1, max_size=6).filter(lambda s: s.strip() and s != END)


@given(st.lists(st.lists(label, min_size=1, max_size=5), min_size=1, max_size=6))
def test_emit_parse_roundtrip_property(traces):
    events = sequential_stream(traces)
    text = emit_stream(events)
    assert text.splitlines()[0] == ",".join(HEADER)
    assert parse_stream(io.StringIO(text)) == events
    completed, open_cases = assemble_cases(events)
    assert [c.activities for c in completed] == [tuple(t) for t in traces]
    assert not open_cases
