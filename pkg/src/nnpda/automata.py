"""Classical pushdown automata, the exact simulator, and idealized one-hot encodings.

A PDA is stored with integer indices throughout; the name tuples only fix the
ordering used for every vector encoding. Stack readings use ``m2 + 1`` slots,
the last one standing for the empty-stack reading.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from nnpda.tensors import WeightTensors

__all__ = [
    "BadIndex",
    "BadInputSymbol",
    "ClassicalRun",
    "DuplicateName",
    "IdealState",
    "InvalidSpec",
    "NOOP",
    "NonTotalTransition",
    "POP",
    "PdaSpec",
    "SpecViolation",
    "StackOp",
    "decode_ideal",
    "encode_dfa",
    "encode_ideal",
    "ideal_operator",
    "ideal_reading",
    "initial_ideal_state",
    "one_hot",
    "read_stack",
    "run_classical",
    "step_classical",
    "step_dfa_vectorized",
    "step_ideal_vectorized",
    "validate_spec",
]

ClassicalStack = tuple[int, ...]
"""Stack contents as stack-symbol indices, ``stack[0]`` being the top."""


@dataclass(frozen=True)
class StackOp:
    kind: str  # "push" | "pop" | "noop"
    symbol: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("push", "pop", "noop"):
            raise ValueError(f"unknown stack operation {self.kind!r}")
        if (self.kind == "push") != (self.symbol is not None):
            raise ValueError("push must carry a symbol; pop/noop must not")

    @classmethod
    def push(cls, symbol: int) -> StackOp:
        return cls("push", symbol)

    def apply(self, stack: ClassicalStack) -> ClassicalStack:
        if self.kind == "push":
            return (self.symbol,) + stack
        if self.kind == "pop":
            return stack[1:]  # popping the empty stack leaves it empty
        return stack

    def __str__(self) -> str:
        return f"push:{self.symbol}" if self.kind == "push" else self.kind


POP = StackOp("pop")
NOOP = StackOp("noop")

Key = tuple[int, int, int]


@dataclass(frozen=True)
class PdaSpec:
    """A deterministic PDA over indexed states and alphabets.

    ``transitions`` maps ``(state, input, reading)`` to ``(next_state, op)``,
    where ``reading == m2`` is the empty-stack reading. Build with
    :meth:`from_rules` and check with :func:`validate_spec`.
    """

    states: tuple[str, ...]
    input_alphabet: tuple[str, ...]
    stack_alphabet: tuple[str, ...]
    start_state: int
    accept_states: frozenset[int]
    transitions: Mapping[Key, tuple[int, StackOp]] = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def m1(self) -> int:
        return len(self.input_alphabet)

    @property
    def m2(self) -> int:
        return len(self.stack_alphabet)

    @property
    def empty_reading(self) -> int:
        return len(self.stack_alphabet)

    @classmethod
    def from_rules(
        cls,
        states: Sequence[str],
        input_alphabet: Sequence[str],
        stack_alphabet: Sequence[str],
        start: str,
        accept: Iterable[str],
        rules: Iterable[tuple[str, str, str | None, str, str]],
    ) -> PdaSpec:
        """Build a spec from named rules.

        Each rule is ``(state, input, top, next_state, op)`` with ``top=None``
        for the empty reading and ``op`` one of ``"pop"``, ``"noop"`` or
        ``"push:X"``. Names are resolved here; totality is left to
        :func:`validate_spec`.
        """
        s_idx = {name: i for i, name in enumerate(states)}
        a_idx = {name: i for i, name in enumerate(input_alphabet)}
        g_idx = {name: i for i, name in enumerate(stack_alphabet)}
        transitions: dict[Key, tuple[int, StackOp]] = {}
        for q, a, top, q2, op in rules:
            r = len(stack_alphabet) if top is None else g_idx[top]
            if op.startswith("push:"):
                sop = StackOp.push(g_idx[op[5:]])
            else:
                sop = POP if op == "pop" else NOOP if op == "noop" else None
                if sop is None:
                    raise ValueError(f"unknown stack operation {op!r}")
            transitions[(s_idx[q], a_idx[a], r)] = (s_idx[q2], sop)
        return cls(
            states=tuple(states),
            input_alphabet=tuple(input_alphabet),
            stack_alphabet=tuple(stack_alphabet),
            start_state=s_idx[start],
            accept_states=frozenset(s_idx[name] for name in accept),
            transitions=transitions,
        )

    def rule(self, q: int, a: int, r: int) -> tuple[int, StackOp]:
        return self.transitions[(q, a, r)]


class SpecViolation(Exception):
    """One problem found while validating a :class:`PdaSpec`."""


class NonTotalTransition(SpecViolation):
    def __init__(self, q: int, a: int, r: int, names: tuple[str, str, str] | None = None) -> None:
        shown = names or (q, a, r)
        super().__init__(f"no transition for (state={shown[0]}, input={shown[1]}, reading={shown[2]})")
        self.key = (q, a, r)


class BadIndex(SpecViolation):
    pass


class DuplicateName(SpecViolation):
    pass


class InvalidSpec(ValueError):
    """Raised by :func:`validate_spec`; ``violations`` lists every problem."""

    def __init__(self, violations: list[SpecViolation]) -> None:
        self.violations = violations
        lines = "\n".join(f"  - {type(v).__name__}: {v}" for v in violations)
        super().__init__(f"invalid PDA spec ({len(violations)} violations):\n{lines}")


class BadInputSymbol(ValueError):
    pass


def _rule_names(spec: PdaSpec, q: int, a: int, r: int) -> tuple[str, str, str] | None:
    try:
        top = "EMPTY" if r == spec.m2 else spec.stack_alphabet[r]
        return spec.states[q], spec.input_alphabet[a], top
    except IndexError:
        return None


def find_violations(spec: PdaSpec) -> list[SpecViolation]:
    out: list[SpecViolation] = []
    n, m1, m2 = spec.n, spec.m1, spec.m2
    for label, size in (("states", n), ("input alphabet", m1), ("stack alphabet", m2)):
        if size < 1:
            out.append(BadIndex(f"{label} must be nonempty"))
    for label, names in (
        ("state", spec.states),
        ("input symbol", spec.input_alphabet),
        ("stack symbol", spec.stack_alphabet),
    ):
        seen: set[str] = set()
        for name in names:
            if name in seen:
                out.append(DuplicateName(f"duplicate {label} name {name!r}"))
            seen.add(name)
    if not 0 <= spec.start_state < n:
        out.append(BadIndex(f"start state {spec.start_state} not in 0..{n - 1}"))
    for f in sorted(spec.accept_states):
        if not 0 <= f < n:
            out.append(BadIndex(f"accept state {f} not in 0..{n - 1}"))
    for (q, a, r), (q2, op) in spec.transitions.items():
        if not (0 <= q < n and 0 <= a < m1 and 0 <= r <= m2):
            out.append(BadIndex(f"transition key {(q, a, r)} out of range"))
        if not 0 <= q2 < n:
            out.append(BadIndex(f"transition {(q, a, r)} targets state {q2}"))
        if op.kind == "push" and not 0 <= op.symbol < m2:
            out.append(BadIndex(f"transition {(q, a, r)} pushes symbol {op.symbol}"))
    for q in range(n):
        for a in range(m1):
            for r in range(m2 + 1):
                if (q, a, r) not in spec.transitions:
                    out.append(NonTotalTransition(q, a, r, _rule_names(spec, q, a, r)))
    return out


def validate_spec(spec: PdaSpec) -> PdaSpec:
    """Return ``spec`` unchanged if it is a total, in-range deterministic PDA."""
    violations = find_violations(spec)
    if violations:
        raise InvalidSpec(violations)
    return spec


# -- classical simulator ----------------------------------------------------


def read_stack(spec: PdaSpec, stack: ClassicalStack) -> int:
    return stack[0] if stack else spec.empty_reading


def step_classical(
    spec: PdaSpec, q: int, stack: ClassicalStack, a: int
) -> tuple[int, ClassicalStack]:
    q2, op = spec.transitions[(q, a, read_stack(spec, stack))]
    return q2, op.apply(stack)


@dataclass(frozen=True)
class ClassicalRun:
    accept: bool
    state: int
    stack: ClassicalStack
    trace: tuple[tuple[int, ClassicalStack], ...] | None = None


def run_classical(
    spec: PdaSpec, word: Sequence[int], *, keep_trace: bool = False
) -> ClassicalRun:
    """Run the exact PDA from ``(start, empty stack)``; accept by final state."""
    q, stack = spec.start_state, ()
    trace = [(q, stack)] if keep_trace else None
    for a in word:
        if not 0 <= a < spec.m1:
            raise BadInputSymbol(f"input symbol {a} not in 0..{spec.m1 - 1}")
        q, stack = step_classical(spec, q, stack, a)
        if trace is not None:
            trace.append((q, stack))
    return ClassicalRun(
        accept=q in spec.accept_states,
        state=q,
        stack=stack,
        trace=tuple(trace) if trace is not None else None,
    )


# -- idealized vector encodings ----------------------------------------------


def one_hot(index: int, size: int) -> np.ndarray:
    v = np.zeros(size)
    v[index] = 1.0
    return v


@dataclass(frozen=True, eq=False)
class IdealState:
    """One-hot state vector plus the ``s`` live one-hot stack levels (top first).

    Levels at depth ``>= s`` are implicitly the zero vector.
    """

    Q: np.ndarray
    K: np.ndarray  # shape (s, m2)

    @property
    def s(self) -> int:
        return self.K.shape[0]

    def is_valid(self) -> bool:
        def is_one_hot(v: np.ndarray) -> bool:
            return bool(np.all((v == 0) | (v == 1)) and v.sum() == 1)

        return is_one_hot(self.Q) and all(is_one_hot(row) for row in self.K)


def encode_ideal(spec: PdaSpec, q: int, stack: ClassicalStack) -> IdealState:
    K = np.zeros((len(stack), spec.m2))
    for depth, sym in enumerate(stack):
        K[depth, sym] = 1.0
    return IdealState(one_hot(q, spec.n), K)


def decode_ideal(state: IdealState) -> tuple[int, ClassicalStack]:
    if not state.is_valid():
        raise ValueError("not a valid idealized state")
    return int(np.argmax(state.Q)), tuple(int(np.argmax(row)) for row in state.K)


def initial_ideal_state(spec: PdaSpec) -> IdealState:
    return encode_ideal(spec, spec.start_state, ())


def ideal_reading(K: np.ndarray, m2: int) -> np.ndarray:
    """Top level followed by the empty indicator ``1 - max(top)``."""
    top = K[0] if K.shape[0] else np.zeros(m2)
    return np.concatenate((top, [1.0 - top.max()]))


def ideal_operator(p_plus: float, p_minus: float, C: np.ndarray, K: np.ndarray) -> np.ndarray:
    """Exact push / pop / identity on a one-hot stack, as a linear combination.

    ``(p_plus, p_minus)`` must be one of ``(1, 0)``, ``(0, 1)``, ``(0, 0)``.
    ``C`` is only used when pushing.
    """
    if (p_plus, p_minus) not in ((1.0, 0.0), (0.0, 1.0), (0.0, 0.0)):
        raise ValueError(f"idealized operator needs binary exclusive (p+, p-), got {(p_plus, p_minus)}")
    s, m2 = K.shape
    padded = np.zeros((s + 2, m2))
    padded[:s] = K
    below = np.concatenate((C[None, :], padded[:s]))  # level i-1, with C above the top
    above = padded[1 : s + 2]  # level i+1
    keep = 1.0 - p_plus - p_minus
    raw = p_plus * below + p_minus * above + keep * padded[: s + 1]
    live = np.flatnonzero(raw.max(axis=1) > 0)
    size = int(live[-1]) + 1 if live.size else 0
    return raw[:size].copy()


def step_ideal_vectorized(tensors: WeightTensors, state: IdealState, I: np.ndarray) -> IdealState:
    """One step of the vectorized PDA via tensor contraction of reading, input, state."""
    R = ideal_reading(state.K, tensors.m2)
    Q_next = ((tensors.W_Q @ R) @ I) @ state.Q
    p_plus = float(((tensors.W_p_plus @ R) @ I) @ state.Q)
    p_minus = float(((tensors.W_p_minus @ R) @ I) @ state.Q)
    C = ((tensors.W_C @ R) @ I) @ state.Q
    return IdealState(Q_next, ideal_operator(p_plus, p_minus, C, state.K))


# -- DFA special case -----------------------------------------------------------


def encode_dfa(delta: Sequence[Sequence[int]]) -> np.ndarray:
    """Transition tensor ``W[i, j, k] = 1`` iff ``delta[j][k] == i``."""
    n, m = len(delta), len(delta[0])
    W = np.zeros((n, n, m))
    for j, row in enumerate(delta):
        for k, i in enumerate(row):
            W[i, j, k] = 1.0
    return W


def step_dfa_vectorized(W: np.ndarray, Q: np.ndarray, I: np.ndarray) -> np.ndarray:
    return (W @ I) @ Q
