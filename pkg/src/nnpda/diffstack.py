"""The differentiable stack: storage, the sigmoid stack operator, and the reading vector."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

__all__ = [
    "DEFAULT_CAPACITY",
    "DiffStack",
    "StackAction",
    "StackOverflow",
    "apply_operator",
    "dump_stack",
    "empty_stack",
    "reading",
    "sigmoid",
    "stack_distance",
]

DEFAULT_CAPACITY = 4096
LIVE_THRESHOLD = 0.5


class StackOverflow(RuntimeError):
    pass


def sigmoid(x, H: float):
    """Logistic ``1 / (1 + exp(-H x))``; saturates cleanly to 0 or 1."""
    if not H > 0:
        raise ValueError(f"sensitivity H must be positive, got {H}")
    return expit(H * np.asarray(x, dtype=float)) if np.ndim(x) else float(expit(H * x))


@dataclass(frozen=True, eq=False)
class DiffStack:
    """Live levels, top first; every deeper level is the zero vector."""

    levels: np.ndarray  # shape (s, m2)
    capacity: int = DEFAULT_CAPACITY

    @property
    def s(self) -> int:
        return self.levels.shape[0]

    @property
    def m2(self) -> int:
        return self.levels.shape[1]

    def level(self, i: int) -> np.ndarray:
        return self.levels[i] if i < self.s else np.zeros(self.m2)


def empty_stack(m2: int, capacity: int = DEFAULT_CAPACITY) -> DiffStack:
    return DiffStack(np.zeros((0, m2)), capacity)


@dataclass(frozen=True, eq=False)
class StackAction:
    p_plus: float
    p_minus: float
    C: np.ndarray


def apply_operator(K: DiffStack, action: StackAction, H: float) -> DiffStack:
    """Apply the sigmoid push/pop/identity blend to every level, then truncate.

    Raw levels are computed for depths ``0..s`` (the slot above the top is
    ``C``, everything below ``s`` is zero). The new size is one past the
    deepest raw level whose max component reaches 1/2; deeper levels are
    dropped, which keeps the stack finite.
    """
    s, m2 = K.levels.shape
    padded = np.zeros((s + 2, m2))
    padded[:s] = K.levels
    C = np.asarray(action.C, dtype=float)
    below = np.concatenate((C[None, :], padded[:s]))  # K_{i-1}, C at the top
    above = padded[1 : s + 2]  # K_{i+1}
    here = padded[: s + 1]
    p, q = action.p_plus, action.p_minus
    raw = sigmoid(p * below + q * above + (1.0 - p - q) * here - 0.5, H)
    live = np.flatnonzero(raw.max(axis=1) >= LIVE_THRESHOLD)
    size = int(live[-1]) + 1 if live.size else 0
    if size > K.capacity:
        raise StackOverflow(f"stack size {size} exceeds capacity {K.capacity}")
    return DiffStack(raw[:size], K.capacity)


def reading(K: DiffStack) -> np.ndarray:
    top = K.levels[0] if K.s else np.zeros(K.m2)
    return np.concatenate((top, [1.0 - top.max()]))


def stack_distance(K: np.ndarray | DiffStack, K_bar: np.ndarray | DiffStack) -> float:
    """``sup_i ||K_i - K_bar_i||_inf``, missing levels compared against zero."""
    a = K.levels if isinstance(K, DiffStack) else np.asarray(K, dtype=float)
    b = K_bar.levels if isinstance(K_bar, DiffStack) else np.asarray(K_bar, dtype=float)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"stack widths differ: {a.shape[1]} vs {b.shape[1]}")
    depth = max(a.shape[0], b.shape[0])
    if depth == 0:
        return 0.0
    pa = np.zeros((depth, a.shape[1]))
    pb = np.zeros_like(pa)
    pa[: a.shape[0]] = a
    pb[: b.shape[0]] = b
    return float(np.abs(pa - pb).max())


def dump_stack(K: DiffStack) -> str:
    """One line per level, top first, tab-separated round-trip decimals."""
    return "".join("\t".join(repr(float(x)) for x in row) + "\n" for row in K.levels)
