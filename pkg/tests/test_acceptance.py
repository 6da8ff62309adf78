"""Acceptance criteria, each checked at its stated tolerance and time limit."""

import random
import time

import numpy as np
import pytest

from conftest import GRAMMARS
from nnpda.cli import main
from nnpda.grammars import builtin, gen_corpus, random_spec
from nnpda.network import nn_classify
from nnpda.stability import (
    adversarial_words,
    calibration_words,
    deviation_trace,
    find_min_H,
    lemma_suite,
    perturbation_step_check,
)
from nnpda.tensors import encode_weights, extract_rules, weight_counts

pytestmark = pytest.mark.acceptance

EPS = 0.01
STEP_TRIALS = 20_000  # corner-perturbed single steps required during calibration


class Calibration:
    """Calibrated H per grammar, computed on first use and shared by C2-C4."""

    def __init__(self):
        self.results = {}

    def H(self, name):
        if name not in self.results:
            spec = builtin(name)
            self.results[name] = find_min_H(spec, calibration_words(spec), EPS, step_trials=STEP_TRIALS, seed=0)
        return self.results[name].H_star


@pytest.fixture(scope="session")
def calibration():
    return Calibration()


# Golden state-transition matrices for balanced parentheses, keyed by
# (input k, reading l); rows are the next state i, columns the current state j.
_I2 = np.eye(2)
_FROWN = np.array([[0.0, 0.0], [1.0, 1.0]])
GOLDEN_WQ = {(0, 0): _I2, (0, 1): _I2, (1, 0): _I2, (1, 1): _FROWN, (2, 0): _FROWN, (2, 1): _I2}


def test_c1_golden_tensors(criterion):
    t0 = time.perf_counter()
    T = encode_weights(builtin("parens"))
    W_Q = np.zeros((2, 2, 3, 2))
    for (k, l), M in GOLDEN_WQ.items():
        W_Q[:, :, k, l] = M
    _, k, _ = np.indices((2, 3, 2))
    ok = (
        np.array_equal(T.W_Q, W_Q)
        and np.array_equal(T.W_p_plus, (k == 0).astype(float))
        and np.array_equal(T.W_p_minus, (k == 1).astype(float))
        and np.array_equal(T.W_C, (k == 0).astype(float)[None])
    )
    elapsed = time.perf_counter() - t0
    criterion("C1 golden tensors", ok and elapsed < 1.0, f"exact match={ok}, {elapsed:.3f}s < 1s")


def test_c2_oracle_equivalence(criterion, calibration):
    t0 = time.perf_counter()
    details, mismatches = [], 0
    for name in GRAMMARS:
        spec = builtin(name)
        H = calibration.H(name)
        corpora = [gen_corpus(spec, count=1000, max_len=200, seed=2024)]
        if name == "parens":
            corpora.append(gen_corpus(spec, exhaustive=14))
        for corpus in corpora:
            words = [w for w, _ in corpus.entries]
            reports = nn_classify(encode_weights(spec), words, H, spec.start_state, spec.accept_states)
            bad = sum(r.accept != label for r, (_, label) in zip(reports, corpus.entries))
            mismatches += bad
            details.append(f"{name} H={H:g} {corpus.provenance}: {bad}/{len(words)}")
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 300
    criterion(
        "C2 oracle equivalence",
        ok,
        f"{mismatches} mismatches [{'; '.join(details)}], {elapsed:.1f}s < 300s (calibration included)",
    )


def test_c3_orbital_stability(criterion, calibration):
    Hs = {name: calibration.H(name) for name in GRAMMARS}
    t0 = time.perf_counter()
    worst, details = 0.0, []
    for name in GRAMMARS:
        spec = builtin(name)
        for kind, w in adversarial_words(spec, 10_000, seed=0).items():
            trace = deviation_trace(spec, w, Hs[name], capacity=10_000, word_id=kind)
            worst = max(worst, trace.worst)
            details.append(f"{name}/{kind} {trace.worst:.5f}")
    elapsed = time.perf_counter() - t0
    ok = worst <= EPS and elapsed < 120
    criterion("C3 orbital stability", ok, f"max deviation {worst:.6g} <= {EPS} [{', '.join(details)}], {elapsed:.1f}s < 120s")


def test_c4_single_step_contraction(criterion, calibration):
    Hs = {name: calibration.H(name) for name in GRAMMARS}
    t0 = time.perf_counter()
    failures, details = 0, []
    for name in GRAMMARS:
        # a seed distinct from the one used while calibrating
        report = perturbation_step_check(builtin(name), EPS, Hs[name], 10_000, seed=1)
        failures += report.failures
        details.append(f"{name} H={report.H:g} {report.failures}/{report.trials} worst={max(report.worst_q, report.worst_k):.5f}")
    elapsed = time.perf_counter() - t0
    ok = failures == 0 and elapsed < 60
    criterion("C4 single-step contraction", ok, f"{failures} failures [{'; '.join(details)}], {elapsed:.1f}s < 60s")


def test_c5_lemma_suite(criterion):
    t0 = time.perf_counter()
    r = lemma_suite(samples=100_000, seed=0)
    elapsed = time.perf_counter() - t0
    ok = r.passed and elapsed < 60
    criterion(
        "C5 lemma suite",
        ok,
        f"blend ratio {r.blend_worst_ratio:.4f} <= 7; isometry gaps {r.isometry_one_hot_gap:g} (one-hot), "
        f"{r.isometry_zero_gap:g} (zero top); saturation {r.sat_worst_gap:.6g} <= {r.sat_bound:.6g} + 1ulp; "
        f"{elapsed:.1f}s < 60s",
    )


def test_c6_extraction_round_trip(criterion):
    t0 = time.perf_counter()
    rng = random.Random(6)
    noise = np.random.default_rng(6)
    clean = noisy = 0
    for _ in range(200):
        spec = random_spec(rng, max_states=5, max_inputs=4, max_stack=3)
        T = encode_weights(spec)
        clean += extract_rules(T, spec) == spec
        noisy += extract_rules(T.with_noise(0.3, noise), spec) == spec
    elapsed = time.perf_counter() - t0
    ok = clean == noisy == 200 and elapsed < 60
    criterion("C6 extraction round trip", ok, f"{clean}/200 exact, {noisy}/200 under noise 0.3, {elapsed:.2f}s < 60s")


def test_c7_weight_counts(criterion):
    rng = random.Random(7)
    specs = [builtin(name) for name in GRAMMARS] + [random_spec(rng) for _ in range(50)]
    bad = 0
    for spec in specs:
        cells = spec.n * spec.m1 * (spec.m2 + 1)
        budget = weight_counts(spec)
        bad += not (budget.total_weights == encode_weights(spec).size() == (spec.n + 2 + spec.m2) * cells)
        bad += budget.state_neurons != spec.n
    parens = weight_counts(builtin("parens")).total_weights
    criterion("C7 weight counts", bad == 0 and parens == 60, f"parens {parens} == 60, {bad} mismatches over {len(specs)} specs")


def test_c8_verify_is_deterministic(criterion, tmp_path, capsys):
    flags = [
        "verify", "--builtin", "dyck2", "--seed", "5", "--max-exhaustive", "400", "--calibration-random", "8",
        "--random-count", "50", "--adversarial-len", "500", "--trials", "500", "--step-trials", "500",
        "--lemma-samples", "5000",
    ]
    codes = [main([*flags, "--out", str(tmp_path / d)]) for d in ("a", "b")]
    capsys.readouterr()
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    same = names == sorted(p.name for p in (tmp_path / "b").iterdir()) and all(
        (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in names
    )
    criterion("C8 deterministic reports", same and codes[0] == codes[1], f"{len(names)} files byte-identical={same}, exit codes {codes}")
