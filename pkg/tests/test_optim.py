import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dilconv.errors import ConfigError, ShapeError
from dilconv.optim import AdamState, TrainConfig, adam_step

CFG = TrainConfig()


def scalar_adam(p, grads, lr=1e-4, b1=0.9, b2=0.999, eps=1e-8):
    """Plain-float reference of the recurrence."""
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p = p - lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
    return p, m, v


def test_defaults():
    assert (CFG.learning_rate, CFG.beta1, CFG.beta2, CFG.epsilon, CFG.batch_size) == (1e-4, 0.9, 0.999, 1e-8, 256)


def test_zero_gradient_leaves_param():
    p = np.array([1.0, -2.0, 3.5])
    new, st_ = adam_step(p, np.zeros(3), AdamState.zeros_like(p), CFG)
    assert np.array_equal(new, p)
    assert st_.t == 1


def test_first_step_scalar():
    new, st_ = adam_step(np.array([1.0]), np.array([1.0]), AdamState.zeros_like(np.zeros(1)), CFG)
    assert new[0] == pytest.approx(1.0 - 1e-4 / (1 + 1e-8), abs=1e-15)
    assert round(new[0], 4) == 0.9999
    assert st_.m[0] == pytest.approx(0.1) and st_.v[0] == pytest.approx(0.001)


@pytest.mark.parametrize("g", [1.0, -0.3, 2.5])
def test_two_steps_match_scalar_recurrence(g):
    p = np.array([0.7])
    s = AdamState.zeros_like(p)
    for _ in range(2):
        p, s = adam_step(p, np.array([g]), s, CFG)
    want_p, want_m, want_v = scalar_adam(0.7, [g, g])
    assert p[0] == pytest.approx(want_p, abs=1e-15)
    assert s.m[0] == pytest.approx(want_m, abs=1e-15)
    assert s.v[0] == pytest.approx(want_v, abs=1e-15)
    assert s.t == 2


def test_varying_gradients_match_scalar_recurrence():
    grads = [0.5, -1.0, 3.0, 0.0, 1e-3]
    p, s = np.array([0.0]), AdamState.zeros_like(np.zeros(1))
    for g in grads:
        p, s = adam_step(p, np.array([g]), s, CFG)
    assert p[0] == pytest.approx(scalar_adam(0.0, grads)[0], abs=1e-15)


@given(st.lists(st.floats(-1e3, 1e3).filter(lambda x: abs(x) > 1e-3), min_size=1, max_size=20))
def test_first_step_is_signed_learning_rate(gs):
    g = np.array(gs)
    p = np.zeros_like(g)
    new, _ = adam_step(p, g, AdamState.zeros_like(p), CFG)
    # |g| / (|g| + eps) differs from 1 by at most eps / |g|
    np.testing.assert_allclose(new, -CFG.learning_rate * np.sign(g), rtol=1e-5, atol=0)


def test_inputs_untouched_and_v_nonnegative():
    p, g = np.array([1.0, 2.0]), np.array([-3.0, 4.0])
    s = AdamState.zeros_like(p)
    p0, g0 = p.copy(), g.copy()
    _, s2 = adam_step(p, g, s, CFG)
    assert np.array_equal(p, p0) and np.array_equal(g, g0) and not s.m.any() and s.t == 0
    assert np.all(s2.v >= 0)


def test_deterministic():
    rng = np.random.default_rng(0)
    grads = [rng.normal(size=(4, 3)) for _ in range(10)]

    def run():
        p, s = np.ones((4, 3)), AdamState.zeros_like(np.ones((4, 3)))
        for g in grads:
            p, s = adam_step(p, g, s, CFG)
        return p

    assert np.array_equal(run(), run())


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        adam_step(np.zeros(3), np.zeros(4), AdamState.zeros_like(np.zeros(3)), CFG)


@pytest.mark.parametrize("kw", [dict(beta1=1.0), dict(beta2=-0.1), dict(batch_size=0), dict(learning_rate=-1),
                                dict(l2_lambda=-1e-5), dict(selection="last")])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        TrainConfig(**kw)
