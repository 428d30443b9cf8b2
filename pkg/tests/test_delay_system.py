import math

import numpy as np
import pytest

from delaylin.delay_system import (
    LinearTapSystem,
    Nonlinearity,
    SemilinearSystem,
    TimeRule,
    apply_linear,
    apply_nonlinearity,
    lipschitz_certificate,
)
from delaylin.errors import ConfigurationError, ConsistencyError
from delaylin.phase_space import History, PhaseSpaceParams, gamma_embed, random_history


def test_time_rules():
    assert TimeRule.constant(2.0).at(17) == 2.0
    per = TimeRule("periodic", [1.0, 2.0, 3.0])
    assert [per.at(m) for m in range(5)] == [1.0, 2.0, 3.0, 1.0, 2.0]
    tab = TimeRule("tabulated", [1.0, 2.0])
    assert [tab.at(m) for m in range(4)] == [1.0, 2.0, 2.0, 2.0]
    with pytest.raises(ConfigurationError):
        TimeRule("weekly", [1.0])


def test_apply_linear_examples():
    p = PhaseSpaceParams(0.1, 2, 4)
    sys = LinearTapSystem.diagonal([0.5, 2.0])
    assert np.array_equal(apply_linear(sys, 0, History.zero(p)), np.zeros(2))
    e = np.zeros(p.shape)
    e[0] = [1.0, 1.0]
    assert np.allclose(apply_linear(sys, 3, History(e)), [0.5, 2.0])

    q = PhaseSpaceParams(0.1, 1, 5)
    taps = np.zeros((3, 1, 1))
    taps[0, 0, 0], taps[2, 0, 0] = 1.0, 2.0
    two = LinearTapSystem(taps)
    h = History(np.array([[1.0], [0.0], [3.0], [0.0], [0.0]]))
    assert apply_linear(two, 0, h)[0] == 7.0


def test_apply_linear_rejects_long_lag():
    p = PhaseSpaceParams(0.1, 1, 2)
    sys = LinearTapSystem(np.zeros((3, 1, 1)))
    with pytest.raises(ConfigurationError):
        apply_linear(sys, 0, History.zero(p))


def test_apply_linear_is_linear():
    rng = np.random.default_rng(0)
    p = PhaseSpaceParams(0.2, 2, 6)
    sys = LinearTapSystem(rng.standard_normal((4, 3, 2, 2)), "periodic")
    for _ in range(50):
        a, b = random_history(rng, p), random_history(rng, p)
        s, m = float(rng.standard_normal()), int(rng.integers(0, 9))
        lhs = apply_linear(sys, m, a * s + b)
        rhs = s * apply_linear(sys, m, a) + apply_linear(sys, m, b)
        assert np.allclose(lhs, rhs, rtol=1e-13, atol=1e-13)


def test_periodic_taps_follow_time():
    p = PhaseSpaceParams(0.1, 1, 2)
    sys = LinearTapSystem(np.array([[[[1.0]]], [[[3.0]]]]), "periodic")
    h = gamma_embed([1.0], p)
    assert [apply_linear(sys, m, h)[0] for m in range(4)] == [1.0, 3.0, 1.0, 3.0]


def test_apply_nonlinearity_examples():
    p = PhaseSpaceParams(0.1, 1, 4)
    nl = Nonlinearity(0.3, [0], [[1.0]], [1.0])
    assert apply_nonlinearity(nl, 0, History.zero(p))[0] == 0.0
    big = gamma_embed([10.0], p)
    val = apply_nonlinearity(nl, 0, big)[0]
    assert val == pytest.approx(0.3 * 0.5 * math.tanh(20.0))
    assert abs(val) <= 0.3
    off = nl.with_amplitude(0.0)
    assert apply_nonlinearity(off, 0, big)[0] == 0.0


@pytest.mark.parametrize("shape", ["tanh", "clip", "sin"])
def test_builtin_shapes_vanish_at_zero_and_saturate(shape):
    p = PhaseSpaceParams(0.1, 2, 4)
    nl = Nonlinearity(1.0, [0, 1], [[1.0, 0.0], [0.0, 1.0]], [1.0, 0.0], shape)
    assert np.all(apply_nonlinearity(nl, 0, History.zero(p)) == 0.0)
    s = np.linspace(-20, 20, 2001)
    vals = np.array([nl.shape(x) for x in s])
    assert np.max(np.abs(vals)) <= 0.5
    assert np.max(np.abs(np.diff(vals)) / np.diff(s)) <= 1.0 + 1e-9


def test_custom_shape_must_vanish_at_zero():
    with pytest.raises(ConfigurationError):
        Nonlinearity(0.1, [0], [[1.0]], [1.0], shape=lambda s: s + 1.0)


def test_lipschitz_constants_examples():
    p = PhaseSpaceParams(0.1, 1, 5)
    zero = lipschitz_certificate(Nonlinearity(0.0, [0], [[1.0]], [1.0]), p)
    assert np.all(zero.constants.values == 0.0)

    one = lipschitz_certificate(Nonlinearity(0.2, [0], [[1.0]], [1.0]), p, samples=1000)
    assert one.constants.at(0) == pytest.approx(0.2)
    assert one.max_ratio <= 1.0 + 1e-9

    two = lipschitz_certificate(Nonlinearity(0.1, [0, 2], [[1.0], [1.0]], [1.0]), p, samples=1000)
    assert two.constants.at(0) == pytest.approx(0.1 * (1 + math.exp(0.2)))
    assert two.max_ratio <= 1.0 + 1e-9


def test_lipschitz_probe_catches_bad_shape():
    p = PhaseSpaceParams(0.1, 1, 5)
    steep = Nonlinearity(0.2, [0], [[1.0]], [1.0], shape=lambda s: 3.0 * math.tanh(s))
    with pytest.raises(ConsistencyError):
        lipschitz_certificate(steep, p, samples=200)


def test_semilinear_c_rule_periodic():
    p = PhaseSpaceParams(0.5, 1, 6)
    nl = Nonlinearity(TimeRule("periodic", [0.1, 0.3]), [2], [[1.0]], [1.0])
    sys = SemilinearSystem(LinearTapSystem.diagonal([0.5]), nl, p)
    assert sys.c_at(0) == pytest.approx(0.1 * math.exp(1.0))
    assert sys.c_at(3) == pytest.approx(0.3 * math.exp(1.0))
    assert sys.c_max == pytest.approx(0.3 * math.exp(1.0))


def test_semilinear_rejects_lag_beyond_history():
    p = PhaseSpaceParams(0.5, 1, 3)
    nl = Nonlinearity(0.1, [5], [[1.0]], [1.0])
    with pytest.raises(ConfigurationError):
        SemilinearSystem(LinearTapSystem.diagonal([0.5]), nl, p)
