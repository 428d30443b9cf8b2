import math

import numpy as np
import pytest

from delaylin.errors import ConfigurationError
from delaylin.phase_space import (
    History,
    PhaseSpaceParams,
    assumption_A_constants,
    axiom_A_probe,
    gamma_embed,
    norm_beta,
    random_history,
    shift_append,
)


def hand_norm(entries, tail, beta):
    # independent loop, no vectorisation
    best = tail
    for k, row in enumerate(entries):
        best = max(best, math.sqrt(sum(float(v) ** 2 for v in row)) * math.exp(-beta * k))
    return best


def test_params_validation():
    with pytest.raises(ConfigurationError):
        PhaseSpaceParams(0.1, 0, 4)
    with pytest.raises(ConfigurationError):
        PhaseSpaceParams(0.1, 1, 0)
    with pytest.raises(ConfigurationError):
        PhaseSpaceParams(-0.2, 1, 4)
    p = PhaseSpaceParams(-0.2, 1, 4, allow_nonpositive_beta=True)
    assert p.beta == -0.2


def test_norm_of_zero_is_zero():
    for beta in (0.1, 1.0, 3.0):
        p = PhaseSpaceParams(beta, 2, 6)
        assert norm_beta(History.zero(p), p) == 0.0


def test_norm_single_unit_head():
    p = PhaseSpaceParams(0.1, 2, 6)
    e = np.zeros(p.shape)
    e[0] = [0.6, 0.8]
    assert norm_beta(History(e), p) == pytest.approx(1.0, abs=1e-15)


def test_norm_powers_of_two():
    p = PhaseSpaceParams(math.log(2), 1, 5)
    e = np.array([[2.0 ** k] for k in range(5)])
    assert norm_beta(History(e), p) == pytest.approx(1.0, rel=1e-14)
    assert hand_norm(e, 0.0, p.beta) == pytest.approx(1.0, rel=1e-14)


def test_norm_matches_hand_loop():
    rng = np.random.default_rng(1)
    p = PhaseSpaceParams(0.3, 3, 12)
    for _ in range(50):
        h = random_history(rng, p, tail=float(rng.uniform(0, 0.05)))
        assert norm_beta(h, p) == pytest.approx(hand_norm(h.entries, h.tail_bound, p.beta), rel=1e-14)


def test_norm_dimension_mismatch():
    p = PhaseSpaceParams(0.1, 2, 6)
    q = PhaseSpaceParams(0.1, 3, 6)
    with pytest.raises(ConfigurationError):
        norm_beta(History.zero(q), p)


def test_norm_axioms_on_random_pairs():
    rng = np.random.default_rng(2)
    p = PhaseSpaceParams(0.2, 2, 10)
    for _ in range(100):
        a, b = random_history(rng, p), random_history(rng, p)
        s = float(rng.standard_normal())
        assert norm_beta(a * s, p) == pytest.approx(abs(s) * norm_beta(a, p), rel=1e-14)
        assert norm_beta(a + b, p) <= norm_beta(a, p) + norm_beta(b, p) + 1e-14


def test_shift_append_definition():
    rng = np.random.default_rng(3)
    p = PhaseSpaceParams(0.5, 2, 5)
    h = random_history(rng, p, tail=0.01)
    v = np.array([3.0, -1.0])
    out = shift_append(h, v, p)
    assert np.array_equal(out.entries[0], v)
    assert np.array_equal(out.entries[1:], h.entries[:-1])
    expected_tail = max(0.01 * math.exp(-0.5), np.linalg.norm(h.entries[-1]) * math.exp(-0.5 * 5))
    assert out.tail_bound == pytest.approx(expected_tail, rel=1e-15)
    zero = History.zero(p)
    assert shift_append(zero, np.zeros(2), p).is_zero()


def test_shift_append_contracts_by_e_minus_beta():
    rng = np.random.default_rng(4)
    p = PhaseSpaceParams(0.1, 2, 8)
    for _ in range(100):
        h = random_history(rng, p, tail=float(rng.uniform(0, 1)))
        assert norm_beta(shift_append(h, np.zeros(2), p), p) <= math.exp(-p.beta) * norm_beta(h, p) * (1 + 1e-15)


def test_gamma_embed():
    p = PhaseSpaceParams(0.1, 3, 6)
    assert gamma_embed(np.zeros(3), p).is_zero()
    v = np.array([2.0, 1.0, 2.0])
    g = gamma_embed(v, p)
    assert norm_beta(g, p) == pytest.approx(3.0, rel=1e-15)
    assert np.array_equal(g.entries[1:], np.zeros((5, 3)))


def test_gamma_embed_is_first_segment_of_impulse():
    # x(j) = 0 for j <= 0 and x(1) = v gives x_1 = Gamma v
    p = PhaseSpaceParams(0.4, 2, 6)
    v = np.array([1.5, -2.0])
    x1 = shift_append(History.zero(p), v, p)
    g = gamma_embed(v, p)
    assert np.array_equal(x1.entries, g.entries) and x1.tail_bound == g.tail_bound == 0.0


def test_assumption_A_constants():
    assert assumption_A_constants(PhaseSpaceParams(0.1, 1, 3), 0) == (1.0, 1.0, 1.0)
    J, K, M = assumption_A_constants(PhaseSpaceParams(0.1, 1, 3), 1)
    assert (J, K) == (1.0, 1.0) and M == pytest.approx(math.exp(-0.1))
    J, K, M = assumption_A_constants(PhaseSpaceParams(-0.2, 1, 3, allow_nonpositive_beta=True), 2)
    assert J == 1.0 and K == pytest.approx(math.exp(0.4)) and M == pytest.approx(math.exp(0.4))


def test_axiom_A_zero_has_zero_slack():
    p = PhaseSpaceParams(0.1, 2, 6)
    rep = axiom_A_probe(np.zeros((4, 2)), History.zero(p), p, 3)
    assert rep.holds and rep.left_slack == 0.0 and rep.right_slack == 0.0


def test_axiom_A_impulse():
    p = PhaseSpaceParams(0.1, 2, 6)
    v = np.array([1.0, 2.0])
    x = np.zeros((4, 2))
    x[0] = v
    rep = axiom_A_probe(x, gamma_embed(v, p), p, 3)
    assert rep.holds
    # |x(3)| = 0; ||x_3|| = |v| e^{-0.3}
    assert rep.left_slack == pytest.approx(np.linalg.norm(v) * math.exp(-0.3))


def test_axiom_A_random():
    rng = np.random.default_rng(5)
    p = PhaseSpaceParams(0.25, 2, 30)
    for _ in range(50):
        n = int(rng.integers(0, 11))
        phi0 = random_history(rng, p, support=15, tail=float(rng.uniform(0, 0.1)))
        x = np.vstack([phi0.head[None], rng.standard_normal((n, 2))])
        assert axiom_A_probe(x, phi0, p, n).holds


def test_history_is_read_only():
    p = PhaseSpaceParams(0.1, 1, 3)
    h = History(np.ones(p.shape))
    with pytest.raises(ValueError):
        h.entries[0, 0] = 5.0
    with pytest.raises(ConfigurationError):
        History(np.ones(p.shape), -1.0)
