"""The neural network pushdown automaton: sigmoid state update coupled to the differentiable stack."""

from __future__ import annotations

import io
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from nnpda.automata import one_hot
from nnpda.diffstack import (
    DEFAULT_CAPACITY,
    DiffStack,
    StackAction,
    apply_operator,
    empty_stack,
    reading,
    sigmoid,
)
from nnpda.tensors import WeightTensors

__all__ = [
    "DEFAULT_ACCEPT_EPS",
    "DegenerateInput",
    "DimensionMismatch",
    "LowConfidence",
    "NeuralState",
    "RunReport",
    "TraceRow",
    "initial_state",
    "nn_classify",
    "nn_run",
    "nn_step",
    "nn_trace",
    "stack_action",
    "trace_tsv",
]

DEFAULT_ACCEPT_EPS = 0.1


class DimensionMismatch(ValueError):
    pass


class DegenerateInput(ValueError):
    pass


class LowConfidence(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class NeuralState:
    Q: np.ndarray
    K: DiffStack
    t: int = 0


def initial_state(tensors: WeightTensors, q0: int, capacity: int = DEFAULT_CAPACITY) -> NeuralState:
    return NeuralState(one_hot(q0, tensors.n), empty_stack(tensors.m2, capacity), 0)


def _check_input(tensors: WeightTensors, I: np.ndarray) -> None:
    if I.shape != (tensors.m1,):
        raise DimensionMismatch(f"input has shape {I.shape}, expected ({tensors.m1},)")
    if not (np.all((I == 0) | (I == 1)) and I.sum() == 1):
        raise DegenerateInput(f"input vector is not one-hot: {I}")


def _contract(W: np.ndarray, R: np.ndarray, I: np.ndarray, Q: np.ndarray) -> np.ndarray:
    # sum over l, then k, then j
    return ((W @ R) @ I) @ Q


def stack_action(tensors: WeightTensors, R: np.ndarray, I: np.ndarray, Q: np.ndarray) -> StackAction:
    return StackAction(
        p_plus=float(_contract(tensors.W_p_plus, R, I, Q)),
        p_minus=float(_contract(tensors.W_p_minus, R, I, Q)),
        C=_contract(tensors.W_C, R, I, Q),
    )


def _step(
    tensors: WeightTensors, state: NeuralState, I: np.ndarray, H: float
) -> tuple[NeuralState, StackAction]:
    R = reading(state.K)
    V = _contract(tensors.W_Q, R, I, state.Q)
    action = stack_action(tensors, R, I, state.Q)
    Q_next = sigmoid(V - 0.5, H)
    return NeuralState(Q_next, apply_operator(state.K, action, H), state.t + 1), action


def nn_step(
    tensors: WeightTensors, state: NeuralState, I: np.ndarray, H: float, *, check: bool = True
) -> NeuralState:
    """Advance one input symbol.

    With ``check=False`` a non one-hot ``I`` is contracted as given. An all-zero
    input gives ``V = 0``, so every state neuron lands on ``h_H(-1/2)`` and no
    state can be decoded.
    """
    I = np.asarray(I, dtype=float)
    if state.Q.shape != (tensors.n,) or state.K.m2 != tensors.m2:
        raise DimensionMismatch(
            f"state has n={state.Q.shape}, m2={state.K.m2}; tensors need n={tensors.n}, m2={tensors.m2}"
        )
    if check:
        _check_input(tensors, I)
    elif I.shape != (tensors.m1,):
        raise DimensionMismatch(f"input has shape {I.shape}, expected ({tensors.m1},)")
    return _step(tensors, state, I, H)[0]


@dataclass(frozen=True)
class RunReport:
    accept: bool
    final_Q: tuple[float, ...]
    confidence: float
    steps: int
    low_confidence: bool


def _inputs(tensors: WeightTensors, word: Iterable[int | np.ndarray]) -> list[np.ndarray]:
    vectors = []
    for a in word:
        I = one_hot(int(a), tensors.m1) if np.ndim(a) == 0 else np.asarray(a, dtype=float)
        _check_input(tensors, I)
        vectors.append(I)
    return vectors


def nn_run(
    tensors: WeightTensors,
    word: Sequence[int | np.ndarray],
    H: float,
    q0: int,
    accept_states: Iterable[int],
    *,
    accept_eps: float = DEFAULT_ACCEPT_EPS,
    capacity: int = DEFAULT_CAPACITY,
    strict: bool = False,
) -> RunReport:
    """Run from the exact start configuration and classify by the decoded final state.

    ``word`` holds input indices or one-hot vectors. A run is accepted when the
    argmax of the final state vector is accepting and its value is at least
    ``1 - accept_eps``; below that the report is flagged ``low_confidence``
    (and never accepted), or :class:`LowConfidence` is raised if ``strict``.
    """
    state = initial_state(tensors, q0, capacity)
    for I in _inputs(tensors, word):
        state = _step(tensors, state, I, H)[0]
    return _report(state, frozenset(accept_states), accept_eps, strict)


def _report(state: NeuralState, accept_states: frozenset[int], accept_eps: float, strict: bool) -> RunReport:
    Q = state.Q
    confidence = float(Q.max())
    low = confidence < 1.0 - accept_eps
    if low and strict:
        raise LowConfidence(f"final state confidence {confidence:.6g} < {1.0 - accept_eps:.6g}")
    return RunReport(
        accept=(int(np.argmax(Q)) in accept_states) and not low,
        final_Q=tuple(float(x) for x in Q),
        confidence=confidence,
        steps=state.t,
        low_confidence=low,
    )


def nn_classify(
    tensors: WeightTensors,
    words: Sequence[Sequence[int]],
    H: float,
    q0: int,
    accept_states: Iterable[int],
    *,
    accept_eps: float = DEFAULT_ACCEPT_EPS,
    capacity: int = DEFAULT_CAPACITY,
) -> list[RunReport]:
    """:func:`nn_run` over many index strings, simulating shared prefixes once.

    Reports come back in input order and equal the per-string ``nn_run`` results.
    """
    accept_states = frozenset(accept_states)
    inputs = [one_hot(a, tensors.m1) for a in range(tensors.m1)]
    order = sorted(range(len(words)), key=lambda i: tuple(words[i]))
    path = [initial_state(tensors, q0, capacity)]
    prev: tuple[int, ...] = ()
    reports: list[RunReport | None] = [None] * len(words)
    for idx in order:
        word = tuple(int(a) for a in words[idx])
        common = 0
        for x, y in zip(prev, word):
            if x != y:
                break
            common += 1
        del path[common + 1 :]
        for a in word[common:]:
            if not 0 <= a < tensors.m1:
                raise DimensionMismatch(f"input index {a} outside 0..{tensors.m1 - 1}")
            path.append(_step(tensors, path[-1], inputs[a], H)[0])
        reports[idx] = _report(path[-1], accept_states, accept_eps, False)
        prev = word
    return reports  # type: ignore[return-value]


@dataclass(frozen=True, eq=False)
class TraceRow:
    t: int
    Q: np.ndarray
    K: DiffStack
    p_plus: float
    p_minus: float
    C: np.ndarray


def nn_trace(
    tensors: WeightTensors,
    word: Sequence[int | np.ndarray],
    H: float,
    q0: int,
    *,
    capacity: int = DEFAULT_CAPACITY,
    start: NeuralState | None = None,
) -> list[TraceRow]:
    """Per-step internals; row ``t`` holds the action that produced state ``t``.

    Row 0 is the start configuration with a zero action.
    """
    state = start if start is not None else initial_state(tensors, q0, capacity)
    rows = [TraceRow(state.t, state.Q, state.K, 0.0, 0.0, np.zeros(tensors.m2))]
    for I in _inputs(tensors, word):
        state, action = _step(tensors, state, I, H)
        rows.append(TraceRow(state.t, state.Q, state.K, action.p_plus, action.p_minus, action.C))
    return rows


def trace_tsv(rows: Sequence[TraceRow]) -> str:
    if not rows:
        return ""
    n, m2 = rows[0].Q.size, rows[0].C.size
    header = ["t", *(f"Q{i}" for i in range(n)), "p_plus", "p_minus", *(f"C{i}" for i in range(m2)), "s"]
    buf = io.StringIO()
    buf.write("\t".join(header) + "\n")
    for r in rows:
        cells = [str(r.t), *map(repr, map(float, r.Q)), repr(r.p_plus), repr(r.p_minus)]
        cells += [*map(repr, map(float, r.C)), str(r.K.s)]
        buf.write("\t".join(cells) + "\n")
    return buf.getvalue()
