"""Empirical stability checks: neural vs idealized orbits, sensitivity calibration,
single-step perturbation tests, the supporting lemma checks, and weight-noise sweeps.
"""

from __future__ import annotations

import io
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

from nnpda.automata import (
    IdealState,
    PdaSpec,
    encode_ideal,
    ideal_reading,
    initial_ideal_state,
    one_hot,
    run_classical,
    step_classical,
    step_ideal_vectorized,
)
from nnpda.diffstack import DEFAULT_CAPACITY, DiffStack, reading, sigmoid, stack_distance
from nnpda.grammars import end_symbol, exhaustive_words, gen_corpus
from nnpda.network import NeuralState, _step, initial_state, nn_classify
from nnpda.tensors import WeightTensors, encode_weights, extract_rules

__all__ = [
    "CalibrationResult",
    "DeviationTrace",
    "EPS_CEILING",
    "LemmaReport",
    "NotFound",
    "PerturbationReport",
    "SweepRow",
    "adversarial_words",
    "calibration_words",
    "deviation_trace",
    "find_min_H",
    "lemma_suite",
    "perturbation_step_check",
    "weight_noise_sweep",
    "worst_deviation",
]

EPS_CEILING = 1.0 / 14.0
H_CEILING = 1e4


class NotFound(RuntimeError):
    pass


def _check_eps(eps: float) -> None:
    if not 0 < eps < EPS_CEILING:
        raise ValueError(f"eps must lie in (0, 1/14), got {eps}")


# -- lockstep orbits ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DeviationTrace:
    q_dev: np.ndarray
    k_dev: np.ndarray
    H: float
    word_id: str = ""

    @property
    def max_q(self) -> float:
        return float(self.q_dev.max())

    @property
    def max_k(self) -> float:
        return float(self.k_dev.max())

    @property
    def worst(self) -> float:
        return max(self.max_q, self.max_k)

    def __len__(self) -> int:
        return len(self.q_dev)


def _lockstep(
    ideal_T: WeightTensors, neural_T: WeightTensors, ideal: IdealState, state: NeuralState, I: np.ndarray, H: float
) -> tuple[IdealState, NeuralState, float, float]:
    ideal = step_ideal_vectorized(ideal_T, ideal, I)
    state = _step(neural_T, state, I, H)[0]
    return ideal, state, float(np.abs(state.Q - ideal.Q).max()), stack_distance(state.K, ideal.K)


def deviation_trace(
    spec: PdaSpec,
    word: Sequence[int],
    H: float,
    *,
    tensors: WeightTensors | None = None,
    capacity: int = DEFAULT_CAPACITY,
    word_id: str = "",
) -> DeviationTrace:
    """Per-step sup-norm gaps between the neural and idealized runs from the same start.

    ``tensors`` overrides the network weights (e.g. noisy copies); the
    idealized run always uses the exact encoding of ``spec``.
    """
    ideal_T = encode_weights(spec)
    neural_T = tensors if tensors is not None else ideal_T
    ideal = initial_ideal_state(spec)
    state = initial_state(neural_T, spec.start_state, capacity)
    q_dev, k_dev = [0.0], [0.0]
    for a in word:
        ideal, state, dq, dk = _lockstep(ideal_T, neural_T, ideal, state, one_hot(a, spec.m1), H)
        q_dev.append(dq)
        k_dev.append(dk)
    return DeviationTrace(np.array(q_dev), np.array(k_dev), H, word_id)


def worst_deviation(
    spec: PdaSpec,
    words: Iterable[Sequence[int]],
    H: float,
    *,
    tensors: WeightTensors | None = None,
    capacity: int = DEFAULT_CAPACITY,
    stop_above: float = math.inf,
) -> float:
    """Largest deviation over every prefix of every word.

    Words are visited in sorted order so shared prefixes are simulated once.
    Returns early as soon as the running maximum exceeds ``stop_above``.
    """
    ideal_T = encode_weights(spec)
    neural_T = tensors if tensors is not None else ideal_T
    inputs = [one_hot(a, spec.m1) for a in range(spec.m1)]
    root = (initial_ideal_state(spec), initial_state(neural_T, spec.start_state, capacity))
    path: list[tuple[IdealState, NeuralState]] = [root]
    prev: tuple[int, ...] = ()
    worst = 0.0
    for word in sorted(set(map(tuple, words))):
        common = 0
        for x, y in zip(prev, word):
            if x != y:
                break
            common += 1
        del path[common + 1 :]
        for a in word[common:]:
            ideal, state, dq, dk = _lockstep(ideal_T, neural_T, *path[-1], inputs[a], H)
            path.append((ideal, state))
            worst = max(worst, dq, dk)
            if worst > stop_above:
                return worst
        prev = word
    return worst


# -- corpora for calibration ---------------------------------------------------------------


def calibration_words(
    spec: PdaSpec,
    *,
    max_exhaustive: int = 8192,
    exhaustive_len: int | None = None,
    n_random: int = 64,
    max_len: int = 200,
    seed: int = 0,
) -> list[tuple[int, ...]]:
    """Exhaustive short strings plus random long ones (half of them accepted).

    Without ``exhaustive_len`` the longest exhaustive length keeping at most
    ``max_exhaustive`` strings is used.
    """
    body = spec.m1 - 1
    if exhaustive_len is None:
        exhaustive_len, total = 0, 1
        while total + body ** (exhaustive_len + 1) <= max_exhaustive:
            exhaustive_len += 1
            total += body**exhaustive_len
    words = exhaustive_words(spec, exhaustive_len)
    if n_random:
        words += [w for w, _ in gen_corpus(spec, count=n_random, max_len=max_len, seed=seed).entries]
    return words


def adversarial_words(spec: PdaSpec, length: int, *, seed: int = 0) -> dict[str, tuple[int, ...]]:
    """Long stress strings of ``length`` symbols (end marker included).

    Deep nesting pushes to depth ~length/2 and unwinds; alternation keeps the
    stack shallow while switching actions every step; the random walk mixes
    both. Open/close pairs are symbols ``a`` that push from the start state
    and ``b`` such that ``a b <end>`` is accepted.
    """
    end = end_symbol(spec)
    q0 = spec.start_state
    pushers = sorted({a for (q, a, r), (_, op) in spec.transitions.items() if q == q0 and op.kind == "push" and a != end})
    openers, closers = [], []
    for a in pushers:
        for b in range(spec.m1):
            if b != end and run_classical(spec, (a, b, end)).accept:
                openers.append(a)
                closers.append(b)
                break
    if not openers:
        raise ValueError("could not find a push/pop symbol pair from the start state")
    rng = np.random.default_rng(seed)
    body = length - 1
    half = body // 2
    nest = [openers[0]] * half + [closers[0]] * half
    alt: list[int] = []
    for i in range(body // 2):
        alt += [openers[i % len(openers)], closers[i % len(openers)]]
    walk: list[int] = []
    pending: list[int] = []
    for _ in range(body):
        room = body - len(walk)
        if pending and (room <= len(pending) or rng.random() < 0.45):
            walk.append(pending.pop())
        else:
            i = int(rng.integers(len(openers)))
            walk.append(openers[i])
            pending.append(closers[i])
    words = {
        "deep_nesting": nest,
        "alternation": alt,
        "random_walk": walk[:body],
        "uniform_random": [int(x) for x in rng.choice([a for a in range(spec.m1) if a != end], body)],
    }
    return {k: (*(v + [openers[0]] * (body - len(v))), end) for k, v in words.items()}


# -- calibration ------------------------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationResult:
    H_star: float
    eps: float
    evidence: float
    history: tuple[tuple[float, float], ...] = field(default=(), repr=False)


def _round_up_3sf(x: float) -> tuple[float, float]:
    unit = 10.0 ** (math.floor(math.log10(x)) - 2)
    return round(math.ceil(x / unit - 1e-9) * unit, 12), unit


def find_min_H(
    spec: PdaSpec,
    words: Iterable[Sequence[int]],
    eps: float,
    *,
    step_trials: int = 0,
    seed: int = 0,
    ceiling: float = H_CEILING,
    capacity: int = DEFAULT_CAPACITY,
) -> CalibrationResult:
    """Smallest H (to 3 significant figures) keeping every orbit within ``eps``.

    H doubles from 1 until the corpus passes, then the last failing/passing
    bracket is bisected. Deviation is not assumed monotone in H: the rounded
    result is re-checked and nudged upward if needed.

    With ``step_trials > 0`` an H must also pass
    :func:`perturbation_step_check` with that many corner-perturbed trials
    (seeded by ``seed``); orbits from exact starts alone can settle on an H slightly too
    small for the one-step inductive bound.
    """
    _check_eps(eps)
    words = sorted(set(map(tuple, words)))
    history: list[tuple[float, float]] = []

    def worst(H: float, stop: float = eps) -> float:
        w = worst_deviation(spec, words, H, capacity=capacity, stop_above=stop)
        if step_trials and w <= eps:
            report = perturbation_step_check(
                spec, eps, H, step_trials, seed=seed, corners=True, stop_at_first=stop < math.inf
            )
            w = max(w, report.worst_q, report.worst_k)
        history.append((H, w))
        return w

    lo, hi = 0.0, 1.0
    while worst(hi) > eps:
        lo, hi = hi, hi * 2
        if hi > ceiling:
            raise NotFound(f"no H <= {ceiling:g} keeps deviations within {eps:g}")
    while True:
        _, unit = _round_up_3sf(hi)
        if hi - lo <= unit:
            break
        mid = 0.5 * (lo + hi)
        if worst(mid) <= eps:
            hi = mid
        else:
            lo = mid
    H_star, unit = _round_up_3sf(hi)
    while (evidence := worst(H_star, math.inf)) > eps:
        H_star = round(H_star + unit, 12)
        if H_star > ceiling:
            raise NotFound(f"no H <= {ceiling:g} keeps deviations within {eps:g}")
    return CalibrationResult(H_star, eps, evidence, tuple(history))


# -- single-step perturbations --------------------------------------------------------------


@dataclass(frozen=True)
class PerturbationReport:
    trials: int
    failures: int
    worst_q: float
    worst_k: float
    eps: float
    H: float
    seed: int

    @property
    def passed(self) -> bool:
        return self.failures == 0


def random_configuration(spec: PdaSpec, rng: np.random.Generator, max_len: int) -> tuple[int, tuple[int, ...]]:
    """A reachable configuration: the classical run on a random prefix."""
    q, stack = spec.start_state, ()
    for a in rng.integers(0, spec.m1, int(rng.integers(0, max_len + 1))):
        q, stack = step_classical(spec, q, stack, int(a))
    return q, stack


def perturbation_step_check(
    spec: PdaSpec,
    eps: float,
    H: float,
    trials: int,
    *,
    seed: int = 0,
    max_len: int = 40,
    perturb: float | None = None,
    corners: bool = False,
    stop_at_first: bool = False,
) -> PerturbationReport:
    """Perturb a reachable idealized configuration, take one step, compare.

    Every state component and every component of each live stack level is
    shifted by an independent ``U(-perturb, perturb)`` amount (default
    ``eps``), clipped to ``[0, 1]``. A trial fails when either post-step
    deviation exceeds ``eps``.

    ``corners=True`` draws each shift from ``{-perturb, +perturb}`` instead.
    The one-step map is monotone in every input component, so the worst case
    over the box sits at one of these corners.
    """
    T = encode_weights(spec)
    rng = np.random.default_rng(seed)
    amp = eps if perturb is None else perturb
    failures = 0
    worst_q = worst_k = 0.0
    words = [random_configuration(spec, rng, max_len) for _ in range(trials)]
    symbols = rng.integers(0, spec.m1, trials)

    def shift(shape: tuple[int, ...]) -> np.ndarray:
        if corners:
            return amp * rng.choice((-1.0, 1.0), shape)
        return rng.uniform(-amp, amp, shape)

    for (q, stack), a in zip(words, symbols):
        ideal = encode_ideal(spec, q, stack)
        Q = np.clip(ideal.Q + shift(ideal.Q.shape), 0.0, 1.0)
        K = np.clip(ideal.K + shift(ideal.K.shape), 0.0, 1.0)
        state = NeuralState(Q, DiffStack(K, max(DEFAULT_CAPACITY, K.shape[0] + 1)))
        I = one_hot(int(a), spec.m1)
        _, _, dq, dk = _lockstep(T, T, ideal, state, I, H)
        worst_q, worst_k = max(worst_q, dq), max(worst_k, dk)
        if dq > eps or dk > eps:
            failures += 1
            if stop_at_first:
                break
    return PerturbationReport(trials, failures, worst_q, worst_k, eps, H, seed)


# -- lemma checks ------------------------------------------------------------------------------


@dataclass(frozen=True)
class LemmaReport:
    samples: int
    seed: int
    # blend bound: worst observed ||err|| / eps, must stay <= 7
    blend_eps: float
    blend_worst_ratio: float
    # reading isometry: worst |d(K0) - d(R)| for one-hot and for zero ideal tops
    isometry_one_hot_gap: float
    isometry_zero_gap: float
    # sigmoid saturation
    sat_eps0: float
    sat_H: float
    sat_worst_gap: float
    sat_bound: float

    @property
    def blend_ok(self) -> bool:
        return self.blend_worst_ratio <= 7.0

    @property
    def isometry_ok(self) -> bool:
        # One-hot tops are exact; zero tops carry the rounding of 1 - ||K0||.
        return self.isometry_one_hot_gap == 0.0 and self.isometry_zero_gap <= 2.0**-53

    @property
    def saturation_ok(self) -> bool:
        return self.sat_worst_gap <= np.nextafter(self.sat_bound, np.inf)

    @property
    def passed(self) -> bool:
        return self.blend_ok and self.isometry_ok and self.saturation_ok


def _blend_ratio(rng: np.random.Generator, samples: int, eps: float, m: int = 4) -> float:
    def near(bar: np.ndarray) -> np.ndarray:
        return np.clip(bar + rng.uniform(-eps, eps, bar.shape), 0.0, 1.0)

    # Half the samples uniform in [0,1], half at the corners {0,1} where the
    # bound is tightest.
    half = samples // 2

    def bars(shape: tuple[int, ...]) -> np.ndarray:
        out = rng.uniform(0, 1, shape)
        out[:half] = rng.integers(0, 2, out[:half].shape)
        return out

    xb, yb = bars((samples, 1)), bars((samples, 1))
    Xb, Yb, Zb = bars((samples, m)), bars((samples, m)), bars((samples, m))
    x, y, X, Y, Z = near(xb), near(yb), near(Xb), near(Yb), near(Zb)
    blended = x * X + y * Y + (1 - x - y) * Z
    ideal = xb * Xb + yb * Yb + (1 - xb - yb) * Zb
    return float(np.abs(blended - ideal).max() / eps)


def _isometry_gaps(rng: np.random.Generator, samples: int, m2: int = 3, radius: float = 0.4) -> tuple[float, float]:
    one_hot_gap = zero_gap = 0.0
    for i in range(samples):
        top_bar = np.zeros(m2)
        if i % 2 == 0:
            top_bar[rng.integers(m2)] = 1.0
        top = np.clip(top_bar + rng.uniform(-radius, radius, m2), 0.0, 1.0)
        R = reading(DiffStack(top[None, :]))
        R_bar = ideal_reading(top_bar[None, :], m2)
        gap = abs(float(np.abs(top - top_bar).max()) - float(np.abs(R - R_bar).max()))
        if i % 2 == 0:
            one_hot_gap = max(one_hot_gap, gap)
        else:
            zero_gap = max(zero_gap, gap)
    return one_hot_gap, zero_gap


def _saturation_gap(rng: np.random.Generator, samples: int, eps0: float, H: float, m: int = 4) -> float:
    V_bar = rng.integers(0, 2, (samples, m)).astype(float)
    V = V_bar + rng.uniform(-eps0, eps0, V_bar.shape)
    V[0] = V_bar[0] + np.where(V_bar[0] == 1, -eps0, eps0)  # the extreme corner
    return float(np.abs(V_bar - sigmoid(V - 0.5, H)).max())


def lemma_suite(
    *,
    samples: int = 100_000,
    seed: int = 0,
    eps: float = 0.01,
    eps0: float = 0.1,
    H: float = 100.0,
    isometry_samples: int | None = None,
) -> LemmaReport:
    rng = np.random.default_rng(seed)
    ratio = _blend_ratio(rng, samples, eps)
    iso_one, iso_zero = _isometry_gaps(rng, isometry_samples or min(samples, 20_000))
    sat = _saturation_gap(rng, samples, eps0, H)
    return LemmaReport(
        samples=samples,
        seed=seed,
        blend_eps=eps,
        blend_worst_ratio=ratio,
        isometry_one_hot_gap=iso_one,
        isometry_zero_gap=iso_zero,
        sat_eps0=eps0,
        sat_H=H,
        sat_worst_gap=sat,
        sat_bound=sigmoid(-(0.5 - eps0), H),
    )


# -- weight noise ----------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    amplitude: float
    accuracy: float
    max_deviation: float
    extraction_ok: bool


def weight_noise_sweep(
    spec: PdaSpec,
    amplitudes: Sequence[float],
    words: Sequence[Sequence[int]],
    H: float,
    *,
    seed: int = 0,
    capacity: int = DEFAULT_CAPACITY,
) -> list[SweepRow]:
    """Classification accuracy and orbit deviation under uniform weight noise.

    Each amplitude gets its own noise draw from a generator seeded by
    ``(seed, index)``, so rows are reproducible independently.
    """
    clean = encode_weights(spec)
    labels = [run_classical(spec, w).accept for w in words]
    rows = []
    for idx, amp in enumerate(amplitudes):
        rng = np.random.default_rng([seed, idx])
        noisy = clean.with_noise(amp, rng) if amp > 0 else clean
        reports = nn_classify(noisy, words, H, spec.start_state, spec.accept_states, capacity=capacity)
        correct = sum(r.accept == label for r, label in zip(reports, labels))
        try:
            extraction_ok = extract_rules(noisy, spec) == spec
        except ValueError:
            extraction_ok = False
        rows.append(
            SweepRow(
                amplitude=amp,
                accuracy=correct / len(words) if words else 1.0,
                max_deviation=worst_deviation(spec, words, H, tensors=noisy, capacity=capacity),
                extraction_ok=extraction_ok,
            )
        )
    return rows


def sweep_tsv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    buf.write("amplitude\taccuracy\tmax_deviation\textraction_ok\n")
    for r in rows:
        buf.write(f"{r.amplitude!r}\t{r.accuracy!r}\t{r.max_deviation!r}\t{int(r.extraction_ok)}\n")
    return buf.getvalue()
