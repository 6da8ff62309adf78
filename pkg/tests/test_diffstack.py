import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nnpda.automata import ideal_operator, one_hot
from nnpda.diffstack import (
    DiffStack,
    StackAction,
    StackOverflow,
    apply_operator,
    dump_stack,
    empty_stack,
    reading,
    sigmoid,
    stack_distance,
)

# 1 / (1 + exp(-10)) evaluated with mpmath at 40 digits
SIGMOID_QUARTER_H40 = 0.9999546021312976


def one_hot_stack(rng, s, m2):
    return np.eye(m2)[rng.integers(m2, size=s)].reshape(s, m2)


# -- sigmoid ------------------------------------------------------------------------------


def test_sigmoid_values():
    assert sigmoid(0.0, 3.0) == 0.5
    assert sigmoid(0.25, 40) == pytest.approx(SIGMOID_QUARTER_H40, abs=1e-15)
    x = np.linspace(-2, 2, 41)
    np.testing.assert_allclose(sigmoid(x, 7.0) + sigmoid(-x, 7.0), 1.0, rtol=0, atol=1e-15)


def test_sigmoid_saturates_and_rejects_bad_H():
    assert sigmoid(-1e6, 50) == 0.0
    assert sigmoid(1e6, 50) == 1.0
    with pytest.raises(ValueError):
        sigmoid(0.1, 0.0)


# -- operator -----------------------------------------------------------------------------


def test_push_onto_five_levels():
    rng = np.random.default_rng(0)
    K = DiffStack(one_hot_stack(rng, 5, 4))
    C = one_hot(2, 4)
    H = 200.0
    out = apply_operator(K, StackAction(1.0, 0.0, C), H)
    assert out.s == 6
    assert np.abs(out.levels[0] - C).max() <= sigmoid(-0.5, H)
    np.testing.assert_allclose(out.levels[1:], K.levels, atol=sigmoid(-0.5, H))


def test_mixed_action_still_grows():
    rng = np.random.default_rng(1)
    K = DiffStack(one_hot_stack(rng, 5, 4))
    out = apply_operator(K, StackAction(0.7, 0.2, one_hot(0, 4)), 20.0)
    assert out.s == 6


def test_identity_at_high_H():
    rng = np.random.default_rng(2)
    K = DiffStack(one_hot_stack(rng, 7, 3))
    out = apply_operator(K, StackAction(0.0, 0.0, one_hot(1, 3)), 200.0)
    assert out.s == 7
    assert np.abs(out.levels - K.levels).max() <= 1e-40


def test_pop_last_level():
    K = DiffStack(np.array([[0.0, 1.0]]))
    out = apply_operator(K, StackAction(0.0, 1.0, np.zeros(2)), 100.0)
    assert out.s == 0
    assert ideal_operator(0, 1, np.zeros(2), K.levels).shape[0] == 0


def test_pop_on_empty_stays_empty():
    out = apply_operator(empty_stack(2), StackAction(0.0, 1.0, np.zeros(2)), 50.0)
    assert out.s == 0


def test_range_preserved():
    rng = np.random.default_rng(3)
    for _ in range(200):
        K = DiffStack(rng.uniform(0, 1, (int(rng.integers(0, 6)), 3)))
        p = rng.uniform(0, 1)
        q = rng.uniform(0, 1 - p)
        out = apply_operator(K, StackAction(p, q, rng.uniform(0, 1, 3)), float(rng.uniform(1, 100)))
        assert np.all((out.levels >= 0) & (out.levels <= 1))
        if out.s:
            assert out.levels[-1].max() >= 0.5


def test_capacity_overflow():
    K = DiffStack(np.ones((3, 1)), capacity=3)
    with pytest.raises(StackOverflow):
        apply_operator(K, StackAction(1.0, 0.0, np.ones(1)), 50.0)


def test_hundred_pushes():
    rng = np.random.default_rng(4)
    K, K_bar = empty_stack(3), np.zeros((0, 3))
    for _ in range(100):
        C = one_hot(int(rng.integers(3)), 3)
        K = apply_operator(K, StackAction(1.0, 0.0, C), 60.0)
        K_bar = ideal_operator(1, 0, C, K_bar)
    assert K.s == 100
    assert stack_distance(K, K_bar) < 0.01


# Smallest H for which the saturation argument closes: h_H(-(1/2 - 7 eps)) = eps.
def sufficient_H(eps):
    return math.log(1 / eps - 1) / (0.5 - 7 * eps)


@pytest.mark.parametrize("eps", [0.01, 0.003, 0.001])
@pytest.mark.parametrize("corners", [False, True])
def test_operator_approximation(eps, corners):
    H = sufficient_H(eps) * (1 + 1e-9)
    rng = np.random.default_rng(int(eps * 1e4) + corners)
    m2 = 3

    def jitter(x):
        d = eps * rng.choice((-1.0, 1.0), np.shape(x)) if corners else rng.uniform(-eps, eps, np.shape(x))
        return np.clip(x + d, 0.0, 1.0)

    worst = 0.0
    for trial in range(3000):
        s = int(rng.integers(0, 8))
        K_bar = one_hot_stack(rng, s, m2)
        p_bar, q_bar = [(1, 0), (0, 1), (0, 0)][trial % 3]
        C_bar = one_hot(int(rng.integers(m2)), m2)
        K = jitter(np.vstack((K_bar, np.zeros((1, m2)))))  # one dead level may carry noise too
        action = StackAction(float(jitter(p_bar)), float(jitter(q_bar)), jitter(C_bar))
        out = apply_operator(DiffStack(K), action, H)
        worst = max(worst, stack_distance(out, ideal_operator(p_bar, q_bar, C_bar, K_bar)))
    assert worst <= eps


# -- reading and distance ----------------------------------------------------------------


def test_reading_empty():
    assert np.array_equal(reading(empty_stack(3)), [0, 0, 0, 1])


def test_reading_formula():
    R = reading(DiffStack(np.array([[0.98, 0.01], [1.0, 0.0]])))
    np.testing.assert_allclose(R, [0.98, 0.01, 0.02], rtol=0, atol=1e-15)


@settings(max_examples=300, deadline=None)
@given(
    st.integers(0, 3),
    st.lists(st.floats(-0.4, 0.4), min_size=3, max_size=3),
)
def test_reading_isometry(top, noise):
    m2 = 3
    bar = one_hot(top, m2) if top < m2 else np.zeros(m2)
    K0 = np.clip(bar + np.array(noise), 0.0, 1.0)
    R = reading(DiffStack(K0[None, :]))
    R_bar = np.concatenate((bar, [1.0 - bar.max()]))
    lhs = np.abs(K0 - bar).max()
    rhs = np.abs(R - R_bar).max()
    if top < m2:
        assert lhs == rhs
    else:
        assert abs(lhs - rhs) <= 2.0**-53


def test_stack_distance_cases():
    K = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert stack_distance(K, K) == 0.0
    bumped = K.copy()
    bumped[1, 0] = 0.007
    assert stack_distance(bumped, K) == 0.007
    assert stack_distance(K[:1], K) == 1.0
    assert stack_distance(empty_stack(2), np.zeros((0, 2))) == 0.0
    with pytest.raises(ValueError):
        stack_distance(K, np.zeros((1, 3)))


def test_dump_round_trips():
    rng = np.random.default_rng(6)
    K = DiffStack(rng.uniform(0, 1, (3, 2)))
    rows = [[float(x) for x in line.split("\t")] for line in dump_stack(K).splitlines()]
    assert np.array_equal(np.array(rows), K.levels)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(0, 1), min_size=2, max_size=2),
    st.lists(st.floats(0, 1), min_size=9, max_size=9),
    st.lists(st.floats(-1, 1), min_size=11, max_size=11),
)
def test_blend_error_bound(scalars, vectors, shifts):
    eps = 0.01
    x_bar, y_bar = scalars
    X_bar, Y_bar, Z_bar = np.array(vectors).reshape(3, 3)
    d = eps * np.array(shifts)
    x, y = np.clip(x_bar + d[0], 0, 1), np.clip(y_bar + d[1], 0, 1)
    X, Y, Z = (np.clip(v + s, 0, 1) for v, s in zip((X_bar, Y_bar, Z_bar), d[2:].reshape(3, 3)))
    err = (x * X + y * Y + (1 - x - y) * Z) - (x_bar * X_bar + y_bar * Y_bar + (1 - x_bar - y_bar) * Z_bar)
    assert np.abs(err).max() <= 7 * eps * (1 + 1e-12)
