import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from padstream.encoding import bucketize
from padstream.events import END, Case, Event
from padstream.pad import (
    ANOMALOUS, NORMAL, UNSCORED, check_threshold, decide, detect, score_end, verdicts_csv,
)
from padstream.predictors import Hyperparameters, train
from padstream.synthlog import GeneratorConfig, default_loan_model, generate


def make_cases(traces):
    return [Case(f"t{i}", [Event(f"t{i}", a, 10 * j) for j, a in enumerate(t)], True) for i, t in enumerate(traces)]


@pytest.fixture
def model():
    # after A: B nine times, D once
    return train(bucketize(make_cases(["AB"] * 9 + ["AD"])), "frequency")


def test_rare_successor_flagged(model):
    case = make_cases(["A"])[0]
    v = detect(model, case, Event("t0", "D", 10), 0.15)
    assert v.score == pytest.approx(0.1)
    assert v.decision == ANOMALOUS and v.position == 2 and v.model_version == 1
    assert detect(model, case, Event("t0", "B", 10), 0.15).decision == NORMAL


def test_score_equal_to_threshold_is_normal(model):
    case = make_cases(["A"])[0]
    v = detect(model, case, Event("t0", "D", 10), 0.1)
    assert v.score == 0.1 and v.decision == NORMAL
    assert decide(0.1, 0.1) == NORMAL and decide(0.0999, 0.1) == ANOMALOUS


def test_first_event_scored_against_first_activity_prior(model):
    assert detect(model, None, Event("x", "A", 0), 0.05).score == 1.0
    assert detect(model, None, Event("x", "B", 0), 0.05).decision == ANOMALOUS


def test_unseen_bucket_is_uniform_over_alphabet_and_end():
    gen = generate(default_loan_model(), GeneratorConfig(5, 0.0, 0))
    alphabet = default_loan_model().activities
    assert len(alphabet) == 18
    model = train(bucketize(gen.cases, max_prefix=60), "frequency", alphabet=alphabet)
    prefix = [Event("x", alphabet[0], i) for i in range(59)]
    v = detect(model, prefix, Event("x", alphabet[1], 60), 0.01)
    assert v.score == pytest.approx(1 / 19)
    assert v.decision == NORMAL
    assert detect(model, prefix, Event("x", alphabet[1], 60), 0.06).decision == ANOMALOUS


def test_cold_start_is_unscored():
    v = detect(None, None, Event("x", "A", 0), 0.05)
    assert v.decision == UNSCORED and v.score is None and not v.scored


def test_end_scoring(model):
    case = make_cases(["AB"])[0]
    v = score_end(model, case, 0.05)
    assert v.event.activity == END and v.event.is_case_end
    assert v.score == 1.0 and v.position == 3


def test_threshold_range():
    for bad in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            check_threshold(bad)


def test_verdict_csv(model):
    case = make_cases(["A"])[0]
    text = verdicts_csv([detect(model, case, Event("t0", "D", 10), 0.15)], with_detector=True)
    assert text == (
        "case_id,position,activity,score,threshold,decision,model_version,detector\n"
        "t0,2,D,0.1,0.15,anomalous,1,pad\n"
    )


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 500), st.sampled_from(["frequency", "random_forest"]))
def test_flags_are_monotone_in_threshold(seed, kind):
    gen = generate(default_loan_model(), GeneratorConfig(20, 0.15, seed))
    model = train(bucketize(gen.cases[:12]), kind, Hyperparameters(n_trees=5), seed=seed)
    taus = np.linspace(0.01, 0.99, 15)
    for case in gen.cases[12:]:
        for i, e in enumerate(case.events):
            flags = [detect(model, case.events[:i], e, t).decision == ANOMALOUS for t in taus]
            # once flagged at some tau, flagged at every larger tau
            assert flags == sorted(flags)
