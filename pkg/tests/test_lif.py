import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from efflif.errors import ConfigError, DimensionError, NumericError
from efflif.lif import ArcTan, LifParams, Reset, lif_step, shared_step, surrogate_derivative

P = LifParams(0.5, 1.0)


def test_no_fire_exactly_at_threshold():
    u, o = lif_step(0.6, 0.7, P)
    assert o.unpack()[0] == 0
    assert u == pytest.approx(1.0)


def test_soft_and_hard_reset():
    u, o = lif_step(0.8, 0.9, P)
    assert o.unpack()[0] == 1
    assert u == pytest.approx(0.3)
    u, o = lif_step(0.8, 0.9, LifParams(0.5, 1.0, Reset.HARD))
    assert u == 0.0 and o.unpack()[0] == 1


def test_shared_step_examples():
    u, o = shared_step(1.3, 1, 0.4, P)
    assert u == pytest.approx(0.55) and o.unpack()[0] == 0
    u, _ = shared_step(0.7, 0, 0.2, P)
    assert u == pytest.approx(0.5 * 0.7 + 0.2)
    u, o = shared_step(0.0, 0, 0.0, P)
    assert u == 0.0 and o.count() == 0


def test_errors():
    with pytest.raises(DimensionError):
        lif_step(np.zeros(2), np.zeros(3))
    with pytest.raises(NumericError):
        lif_step(np.zeros(2), np.array([0.0, np.nan]))
    with pytest.raises(ConfigError):
        LifParams(decay=0.0)
    with pytest.raises(ConfigError):
        LifParams(threshold=-1.0)


@given(st.floats(-5, 5), st.floats(-5, 5), st.sampled_from([0.25, 0.5, 0.9, 1.0]))
def test_shared_step_matches_lif_step_on_post_reset(u_raw_prev, x, lam):
    # a shared step on (u_raw, o) equals lif_step on the already-reset membrane
    p = LifParams(lam, 1.0)
    o_prev = float(u_raw_prev > 1.0)
    u_shared, o_shared = shared_step(u_raw_prev, o_prev, x, p)
    u_post, o_lif = lif_step(u_raw_prev - o_prev, x, p)
    assert o_shared == o_lif
    assert u_shared - o_shared.unpack()[0] == pytest.approx(u_post)


def test_surrogate_values():
    assert surrogate_derivative(0.0) == 1.0
    assert surrogate_derivative(1 / math.pi) == pytest.approx(0.5)
    assert surrogate_derivative(1e9) < 1e-15
    assert surrogate_derivative(-1e9) < 1e-15


@given(st.floats(-3, 3))
def test_surrogate_derivative_is_slope_of_relaxation(x):
    s = ArcTan()
    h = 1e-5
    fd = (s.forward_relax(x + h) - s.forward_relax(x - h)) / (2 * h)
    assert s.derivative(x) == pytest.approx(fd, rel=1e-6, abs=1e-9)
