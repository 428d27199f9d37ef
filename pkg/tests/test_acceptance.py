"""Acceptance gate: the eight primary criteria at their stated tolerances.

Every criterion records a PASS/FAIL line that is printed in the pytest
terminal summary. Stream runs are cached per (detector, predictor, noise,
W, R) for the session; one run yields the F1 for every threshold.
"""

import time
from statistics import mean

import numpy as np
import pytest
from scipy.stats import binom

from conftest import record
from helpers import sequential_stream
from padstream.cli import main
from padstream.encoding import bucketize
from padstream.evalkit import score_run
from padstream.outliers import LocalOutlierFactor
from padstream.pad import ANOMALOUS, detect
from padstream.predictors import Hyperparameters, predict, predict_activities, train
from padstream.encoding import encode_prefix
from padstream.streaming import StreamConfig, count_cases, run_stream, score_stream
from padstream.synthlog import PAPER_NOISE_LEVELS, GeneratorConfig, default_loan_model, generate
from padstream.unsupervised import OutlierHyperparameters, fit, score_event

from test_evalkit import SMALL_GRID
from test_predictors import brute_force
from test_unsupervised import naive_lof

TAUS = (0.01, 0.05, 0.10, 0.15, 0.20, 0.25)
RETRAINS = ("0%", "10%", "20%", "30%", "40%", "50%")
CASES = 500
SEED = 0


class Runs:
    def __init__(self):
        self.logs = {
            p: generate(default_loan_model(), GeneratorConfig(CASES, p, SEED)).events for p in PAPER_NOISE_LEVELS
        }
        self.cache = {}
        self.seconds = {}

    def f1(self, detector, predictor, noise, window, retrain):
        """Anomalous-class F1 for every threshold of the grid."""
        key = (detector, predictor, noise, window, retrain)
        if key not in self.cache:
            events = self.logs[noise]
            cfg = StreamConfig(window=window, retrain=retrain, detector=detector, predictor=predictor, seed=SEED)
            t0 = time.perf_counter()
            res = score_stream(cfg, events, count_cases(events))
            self.cache[key] = {tau: score_run(res.verdicts(tau), events).f1(ANOMALOUS) for tau in TAUS}
            self.seconds[key] = time.perf_counter() - t0
        return self.cache[key]


@pytest.fixture(scope="session")
def runs():
    return Runs()


def fmt(x):
    return f"{x:.3f}"


def test_criterion_1_pad_beats_unsupervised_baselines(runs):
    lines, ok = [], True
    for p in PAPER_NOISE_LEVELS:
        best = {
            name: max(runs.f1(det, pred, p, "10%", "20%").values())
            for name, det, pred in [("rf", "pad", "random_forest"), ("iforest", "iforest", "frequency"),
                                    ("lof", "lof", "frequency")]
        }
        ok &= best["rf"] > best["iforest"] and best["rf"] > best["lof"]
        lines.append(f"p={p}: rf {fmt(best['rf'])} if {fmt(best['iforest'])} lof {fmt(best['lof'])}")
    comparison = sum(s for k, s in runs.seconds.items() if k[3:] == ("10%", "20%"))
    # the slowest grid cell: largest window, retraining after every case, random forest
    t0 = time.perf_counter()
    runs.f1("pad", "random_forest", 0.15, "20%", "0%")
    worst_cell = time.perf_counter() - t0
    ok &= worst_cell < 60 and comparison < 30 * 60
    record(1, ok, "; ".join(lines) + f"; comparison {comparison:.0f}s, slowest cell {worst_cell:.1f}s")
    assert ok


def test_criterion_2_lowest_threshold_is_best(runs):
    lines, ok = [], True
    for pred in ("frequency", "random_forest"):
        for p in (0.025, 0.05, 0.075):
            f = runs.f1("pad", pred, p, "10%", "20%")
            ok &= f[0.01] >= f[0.25]
            lines.append(f"{pred} p={p}: {fmt(f[0.01])} vs {fmt(f[0.25])}")
    record(2, ok, "F1(0.01) vs F1(0.25): " + "; ".join(lines))
    assert ok


def test_criterion_3_larger_windows_do_not_hurt(runs):
    lines, ok = [], True
    for pred in ("frequency", "random_forest"):
        m = {w: mean(runs.f1("pad", pred, p, w, "20%")[0.05] for p in PAPER_NOISE_LEVELS) for w in ("5%", "10%", "20%")}
        ok &= m["10%"] >= m["5%"] - 0.02 and m["20%"] >= m["10%"] - 0.02
        lines.append(f"{pred}: " + " -> ".join(fmt(m[w]) for w in ("5%", "10%", "20%")))
    record(3, ok, "mean F1 at W=5/10/20%: " + "; ".join(lines))
    assert ok


def test_criterion_4_retraining_interval_insensitive(runs):
    worst, ok = {}, True
    for pred in ("frequency", "random_forest"):
        spreads = []
        for p in PAPER_NOISE_LEVELS:
            vals = [runs.f1("pad", pred, p, "10%", r)[0.05] for r in RETRAINS]
            spreads.append(max(vals) - min(vals))
        worst[pred] = max(spreads)
        ok &= worst[pred] < 0.05
    record(4, ok, "max F1 spread over R=0..50%: " + "; ".join(f"{k} {fmt(v)}" for k, v in worst.items()))
    assert ok


def test_criterion_5_sliding_window_mechanics():
    events = sequential_stream(["ABC", "ABD", "AC", "ABC", "AD", "ABCD"] * 5)
    res = score_stream(StreamConfig(window="10%", retrain="66.7%", predictor="frequency"), events)
    versions = {}
    for s in res.scored:
        versions.setdefault(s.event.case_id, set()).add(s.model_version)
    ok = (
        (res.window, res.retrain_interval) == (3, 2)
        and [r.completed_cases for r in res.retrains][:2] == [3, 5]
        and res.n_retrains == 14
        and res.retrains[0].window_case_ids == ("c01", "c02", "c03")
        and versions["c04"] == versions["c05"] == {1}
        and versions["c06"] == versions["c07"] == {2}
    )
    record(5, ok, f"W={res.window} R_abs={res.retrain_interval} retrains={res.n_retrains} "
                  f"first two after cases {[r.completed_cases for r in res.retrains][:2]}")
    assert ok


def test_criterion_6_oracle_equivalences():
    # frequency predictor vs brute-force counting on a 50-case log
    cases = generate(default_loan_model(), GeneratorConfig(50, 0.15, 11)).cases
    model = train(bucketize(cases), "frequency")
    mismatches = 0
    for q in {c.activities[:n] for c in cases for n in range(1, len(c) + 1)}:
        want = brute_force(cases, q)
        got = predict_activities(model, q)
        mismatches += sum(got[a] != want.get(a, 0.0) for a in model.labels)
    # LOF vs naive reference on a 200-vector bucket
    X = bucketize(generate(default_loan_model(), GeneratorConfig(200, 0.1, 12)).cases)[4].matrix[:200]
    lof = LocalOutlierFactor(10).fit(X)
    ref, qref = naive_lof(X, X[:20] + 1.0, 10)
    lof_err = max(np.max(np.abs(lof.train_scores_ - ref) / np.maximum(1, np.abs(ref))),
                  np.max(np.abs(lof.score(X[:20] + 1.0) - qref) / np.maximum(1, np.abs(qref))))
    # score_run vs a hand tally on a run of <= 1000 events
    gen = generate(default_loan_model(), GeneratorConfig(60, 0.1, 13))
    verdicts = run_stream(StreamConfig(window="10c", predictor="frequency", threshold=0.1), gen.events)
    truth = [e for e in gen.events if not e.is_case_end]
    tp = sum(v.decision == ANOMALOUS and e.truth == ANOMALOUS for v, e in zip(verdicts, truth))
    fp = sum(v.decision == ANOMALOUS and e.truth != ANOMALOUS for v, e in zip(verdicts, truth))
    fn = sum(v.decision == "normal" and e.truth == ANOMALOUS for v, e in zip(verdicts, truth))
    c = score_run(verdicts, gen.events).counts[ANOMALOUS]
    ok = mismatches == 0 and lof_err <= 1e-9 and (c.tp, c.fp, c.fn) == (tp, fp, fn) and len(truth) <= 1000
    record(6, ok, f"frequency mismatches {mismatches}, LOF max rel err {lof_err:.1e}, "
                  f"tally tp/fp/fn {c.tp}/{c.fp}/{c.fn} vs {tp}/{fp}/{fn}")
    assert ok


def test_criterion_7_invariants(tmp_path):
    failures = []
    gen = generate(default_loan_model(), GeneratorConfig(40, 0.15, 21))
    alphabet = default_loan_model().activities
    buckets = bucketize(gen.cases, alphabet=alphabet)
    k = len(alphabet) + 1
    for n, b in buckets.items():
        for row in b.matrix:
            if not np.array_equal(row[: n * k].reshape(n, k).sum(axis=1), np.ones(n)):
                failures.append(f"one-hot bucket {n}")
            dur, cum = row[n * k: n * k + n], row[n * k + n:]
            if dur[0] != 0 or not np.allclose(cum, np.cumsum(dur)):
                failures.append(f"cumdur bucket {n}")
    rf = train(buckets, "rf", Hyperparameters(n_trees=10), alphabet=alphabet)
    freq = train(buckets, "frequency", alphabet=alphabet)
    iforest = fit(bucketize(gen.cases[:30], alphabet=alphabet), "iforest", OutlierHyperparameters(n_trees=20),
                  alphabet=alphabet)
    for case in gen.cases[30:]:
        for i, e in enumerate(case.events):
            prefix = case.events[:i]
            for m in (rf, freq):
                if prefix and i <= m.max_bucket:
                    d = predict(m, encode_prefix(prefix, m.alphabet))
                    if abs(d.probs.sum() - 1) > 1e-9:
                        failures.append("normalization")
                flags = [detect(m, prefix, e, t).decision == ANOMALOUS for t in TAUS]
                if flags != sorted(flags):
                    failures.append("pad monotonicity")
            flags = [score_event(iforest, prefix, e, t).decision == ANOMALOUS for t in TAUS]
            if flags != sorted(flags):
                failures.append("iforest monotonicity")
    res = score_stream(StreamConfig(window="6c", retrain="2c", predictor="frequency"), gen.events)
    completions = [e.case_id for e in gen.events if e.is_case_end]
    for r in res.retrains:
        if r.window_case_ids != tuple(completions[r.completed_cases - 6: r.completed_cases]):
            failures.append("window replay")
    # byte-level determinism of the three CLI commands
    for name in ("a", "b"):
        d = tmp_path / name
        d.mkdir()
        assert main(["generate", "--noise", "0.1", "--cases", "60", "--seed", "4", "--out", str(d / "log.csv")]) == 0
        assert main(["run", "--in", str(d / "log.csv"), "--n-trees", "10", "--out", str(d / "v.csv")]) == 0
        grid = d / "g.toml"
        grid.write_text("\n".join(f"{k} = {list(v) if isinstance(v, tuple) else v}".replace("'", '"')
                                  for k, v in SMALL_GRID.items()) + "\n")
        assert main(["sweep", "--grid", str(grid), "--out", str(d / "r.csv")]) == 0
    for f in ("log.csv", "log.csv.meta.json", "v.csv", "r.csv"):
        if (tmp_path / "a" / f).read_bytes() != (tmp_path / "b" / f).read_bytes():
            failures.append(f"determinism {f}")
    ok = not failures
    record(7, ok, "one-hot, CumDur, normalization, monotonicity (pad, iforest), window replay, "
                  "CLI determinism" + ("" if ok else f"; failures: {sorted(set(failures))}"))
    assert ok


def test_criterion_8_generator_statistics():
    lines, ok = [], True
    for p in PAPER_NOISE_LEVELS:
        gen = generate(default_loan_model(), GeneratorConfig(CASES, p, SEED))
        normal = gen.n_events - gen.n_anomalous
        lo, hi = binom.interval(0.99, normal, p)
        ok &= lo <= gen.n_anomalous <= hi and 5_000 <= gen.n_events <= 12_000
        lines.append(f"p={p}: {gen.n_anomalous} in [{lo:.0f}, {hi:.0f}], {gen.n_events} events")
    record(8, ok, "; ".join(lines))
    assert ok
