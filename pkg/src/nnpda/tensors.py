"""Compile a PDA into its four binary weight tensors, and read the rules back out.

Index convention, shared by every tensor: ``j`` current state, ``k`` input
symbol, ``l`` stack reading (``l == m2`` is the empty reading). The output
index ``i`` comes first where present, so ``W_Q[i, j, k, l]``.
"""

from __future__ import annotations

import io
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from nnpda.automata import NOOP, POP, PdaSpec, StackOp

__all__ = [
    "AmbiguousRule",
    "InconsistentStackOp",
    "TensorFormatError",
    "WeightBudget",
    "WeightTensors",
    "dumps_tensors",
    "encode_weights",
    "extract_rules",
    "loads_tensors",
    "read_tensors",
    "weight_counts",
    "write_tensors",
]


class AmbiguousRule(ValueError):
    pass


class InconsistentStackOp(ValueError):
    pass


class TensorFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class WeightTensors:
    W_Q: np.ndarray  # (n, n, m1, m2+1)
    W_p_plus: np.ndarray  # (n, m1, m2+1)
    W_p_minus: np.ndarray  # (n, m1, m2+1)
    W_C: np.ndarray  # (m2, n, m1, m2+1)

    def __post_init__(self) -> None:
        n, n2, m1, r = self.W_Q.shape
        m2 = r - 1
        expected = {
            "W_Q": (n, n, m1, r),
            "W_p_plus": (n, m1, r),
            "W_p_minus": (n, m1, r),
            "W_C": (m2, n, m1, r),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def n(self) -> int:
        return self.W_Q.shape[0]

    @property
    def m1(self) -> int:
        return self.W_Q.shape[2]

    @property
    def m2(self) -> int:
        return self.W_Q.shape[3] - 1

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "WQ": self.W_Q,
            "WPPLUS": self.W_p_plus,
            "WPMINUS": self.W_p_minus,
            "WC": self.W_C,
        }

    def size(self) -> int:
        return sum(a.size for a in self.arrays().values())

    def equals(self, other: WeightTensors) -> bool:
        return all(
            a.shape == b.shape and np.array_equal(a, b)
            for a, b in zip(self.arrays().values(), other.arrays().values())
        )

    def with_noise(self, amplitude: float, rng: np.random.Generator) -> WeightTensors:
        """Copy with i.i.d. ``U(-amplitude, amplitude)`` added to every entry."""
        noisy = [a + rng.uniform(-amplitude, amplitude, a.shape) for a in self.arrays().values()]
        return WeightTensors(*noisy)


def encode_weights(spec: PdaSpec) -> WeightTensors:
    n, m1, m2 = spec.n, spec.m1, spec.m2
    W_Q = np.zeros((n, n, m1, m2 + 1))
    W_pp = np.zeros((n, m1, m2 + 1))
    W_pm = np.zeros((n, m1, m2 + 1))
    W_C = np.zeros((m2, n, m1, m2 + 1))
    for (j, k, l), (i, op) in spec.transitions.items():
        W_Q[i, j, k, l] = 1.0
        if op.kind == "push":
            W_pp[j, k, l] = 1.0
            W_C[op.symbol, j, k, l] = 1.0
        elif op.kind == "pop":
            W_pm[j, k, l] = 1.0
    return WeightTensors(W_Q, W_pp, W_pm, W_C)


def extract_rules(tensors: WeightTensors, names: PdaSpec) -> PdaSpec:
    """Invert :func:`encode_weights`.

    Entries are rounded to ``{0, 1}`` at threshold 1/2 first, so any tensors
    within 1/2 of a valid encoding decode to the same rules. ``names`` only
    supplies the state/alphabet names and start/accept states; its own
    transitions are ignored.
    """
    n, m1, m2 = tensors.n, tensors.m1, tensors.m2
    if (names.n, names.m1, names.m2) != (n, m1, m2):
        raise ValueError(
            f"naming metadata has (n, m1, m2)={(names.n, names.m1, names.m2)}, "
            f"tensors have {(n, m1, m2)}"
        )
    W_Q, W_pp, W_pm, W_C = ((a >= 0.5).astype(np.int8) for a in tensors.arrays().values())
    transitions: dict[tuple[int, int, int], tuple[int, StackOp]] = {}
    for j in range(n):
        for k in range(m1):
            for l in range(m2 + 1):
                targets = np.flatnonzero(W_Q[:, j, k, l])
                if targets.size != 1:
                    raise AmbiguousRule(
                        f"W_Q column (j={j}, k={k}, l={l}) has {targets.size} ones after rounding"
                    )
                pushed = np.flatnonzero(W_C[:, j, k, l])
                push, pop = W_pp[j, k, l], W_pm[j, k, l]
                if push and pop:
                    raise InconsistentStackOp(f"both push and pop set at (j={j}, k={k}, l={l})")
                if pushed.size and not push:
                    raise InconsistentStackOp(f"W_C is set at (j={j}, k={k}, l={l}) without a push")
                if push:
                    if pushed.size != 1:
                        raise AmbiguousRule(
                            f"push at (j={j}, k={k}, l={l}) selects {pushed.size} stack symbols"
                        )
                    op = StackOp.push(int(pushed[0]))
                else:
                    op = POP if pop else NOOP
                transitions[(j, k, l)] = (int(targets[0]), op)
    return PdaSpec(
        states=names.states,
        input_alphabet=names.input_alphabet,
        stack_alphabet=names.stack_alphabet,
        start_state=names.start_state,
        accept_states=names.accept_states,
        transitions=transitions,
    )


@dataclass(frozen=True)
class WeightBudget:
    state_neurons: int
    total_weights: int
    stack_neurons_per_level: int
    capacity: int

    def stack_footprint(self, capacity: int | None = None) -> int:
        """Stack neurons needed for ``capacity`` levels (default: the budgeted capacity)."""
        return (self.capacity if capacity is None else capacity) * self.stack_neurons_per_level


def weight_counts(spec: PdaSpec, capacity: int = 4096) -> WeightBudget:
    n, m1, m2 = spec.n, spec.m1, spec.m2
    cells = n * m1 * (m2 + 1)
    return WeightBudget(
        state_neurons=n,
        total_weights=n * cells + 2 * cells + m2 * cells,
        stack_neurons_per_level=m2,
        capacity=capacity,
    )


# -- flat text format -------------------------------------------------------------
#
#   WQ n n m1 m2+1
#   i j k l value
#   ...
#   WPPLUS n m1 m2+1
#   j k l value
#
# Every entry is written (dense), values in shortest round-trip decimal.
# Lines starting with '#' are comments and carry optional naming metadata.

_ORDER = ("WQ", "WPPLUS", "WPMINUS", "WC")


def dumps_tensors(tensors: WeightTensors, header: Iterable[str] = ()) -> str:
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    for name, arr in tensors.arrays().items():
        buf.write(f"{name} {' '.join(map(str, arr.shape))}\n")
        for idx in np.ndindex(arr.shape):
            buf.write(f"{' '.join(map(str, idx))} {float(arr[idx])!r}\n")
    return buf.getvalue()


def loads_tensors(text: str) -> tuple[WeightTensors, list[str]]:
    """Parse the flat format; returns the tensors and the ``#`` comment lines."""
    comments: list[str] = []
    arrays: dict[str, np.ndarray] = {}
    current: np.ndarray | None = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            comments.append(line[1:].strip())
            continue
        parts = line.split()
        if parts[0] in _ORDER:
            if parts[0] in arrays:
                raise TensorFormatError(f"line {lineno}: duplicate block {parts[0]}")
            try:
                shape = tuple(int(p) for p in parts[1:])
            except ValueError as exc:
                raise TensorFormatError(f"line {lineno}: bad shape {parts[1:]}") from exc
            current = arrays[parts[0]] = np.full(shape, np.nan)
            continue
        if current is None:
            raise TensorFormatError(f"line {lineno}: entry before any block header")
        try:
            idx = tuple(int(p) for p in parts[:-1])
            value = float(parts[-1])
        except ValueError as exc:
            raise TensorFormatError(f"line {lineno}: cannot parse {line!r}") from exc
        if len(idx) != current.ndim or any(not 0 <= x < d for x, d in zip(idx, current.shape)):
            raise TensorFormatError(f"line {lineno}: index {idx} outside shape {current.shape}")
        current[idx] = value
    missing = [name for name in _ORDER if name not in arrays]
    if missing:
        raise TensorFormatError(f"missing tensor blocks: {', '.join(missing)}")
    for name, arr in arrays.items():
        if np.isnan(arr).any():
            raise TensorFormatError(f"block {name} has {int(np.isnan(arr).sum())} missing entries")
    try:
        tensors = WeightTensors(*(arrays[name] for name in _ORDER))
    except ValueError as exc:
        raise TensorFormatError(str(exc)) from exc
    return tensors, comments


def write_tensors(path: str | Path, tensors: WeightTensors, header: Iterable[str] = ()) -> None:
    Path(path).write_text(dumps_tensors(tensors, header))


def read_tensors(path: str | Path) -> tuple[WeightTensors, list[str]]:
    return loads_tensors(Path(path).read_text())
