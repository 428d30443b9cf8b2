import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import diagonal_setup, random_tap_system
from delaylin.delay_system import Nonlinearity, apply_nonlinearity
from delaylin.evolution import EvolutionFamily, solve_forced, solve_linear, voc_sum
from delaylin.phase_space import (
    History,
    PhaseSpaceParams,
    entries_distance,
    gamma_embed,
    norm_beta,
    random_history,
    shift_append,
)

betas = st.floats(0.01, 2.0)
seeds = st.integers(0, 2 ** 32 - 1)
dims = st.integers(1, 3)


def params(beta, dim, L=12):
    return PhaseSpaceParams(beta, dim, L)


@settings(max_examples=60, deadline=None)
@given(betas, dims, seeds, st.floats(-5, 5))
def test_norm_homogeneity_and_triangle(beta, dim, seed, s):
    p = params(beta, dim)
    rng = np.random.default_rng(seed)
    a, b = random_history(rng, p, tail=0.1), random_history(rng, p)
    assert math.isclose(norm_beta(a * s, p), abs(s) * norm_beta(a, p), rel_tol=1e-13, abs_tol=1e-300)
    assert norm_beta(a + b, p) <= norm_beta(a, p) + norm_beta(b, p) + 1e-13


@settings(max_examples=60, deadline=None)
@given(betas, dims, seeds)
def test_shift_append_head_and_gamma_norm(beta, dim, seed):
    p = params(beta, dim)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    h = shift_append(random_history(rng, p), v, p)
    assert np.array_equal(h.head, v)
    assert math.isclose(norm_beta(gamma_embed(v, p), p), float(np.linalg.norm(v)), rel_tol=1e-15)


@settings(max_examples=40, deadline=None)
@given(betas, dims, seeds, st.integers(0, 6), st.integers(0, 6), st.integers(0, 6))
def test_cocycle_property(beta, dim, seed, a, b, c):
    n, k, m = sorted((a, b, c))
    p = params(beta, dim, L=24)
    rng = np.random.default_rng(seed)
    ev = EvolutionFamily(random_tap_system(rng, dim, 2, kind="periodic", times=2), p)
    phi = random_history(rng, p)
    direct = solve_linear(ev, n, phi, m)
    split = solve_linear(ev, k, solve_linear(ev, n, phi, k), m)
    assert entries_distance(direct, split, p) <= 1e-10 * (1 + norm_beta(phi, p))


@settings(max_examples=40, deadline=None)
@given(betas, dims, seeds, st.integers(1, 10))
def test_variation_of_constants(beta, dim, seed, m):
    p = params(beta, dim, L=24)
    rng = np.random.default_rng(seed)
    ev = EvolutionFamily(random_tap_system(rng, dim, 2), p)
    phi = random_history(rng, p)
    f = rng.standard_normal((m, dim))
    assert entries_distance(solve_forced(ev, phi, f, m), voc_sum(ev, phi, f, m), p) <= 1e-10


@settings(max_examples=80, deadline=None)
@given(st.sampled_from(["tanh", "clip", "sin"]), betas, seeds, st.floats(0.0, 1.0), st.floats(0.0, 30.0))
def test_nonlinearity_obeys_lipschitz_bound(shape, beta, seed, eps, far):
    p = params(beta, 2)
    rng = np.random.default_rng(seed)
    lags = [0, 3]
    nl = Nonlinearity(eps, lags, rng.standard_normal((2, 2)), rng.standard_normal(2), shape)
    c = eps * nl.lipschitz_factor(beta)
    phi = random_history(rng, p)
    psi = phi + random_history(rng, p, scale=far)
    lhs = float(np.linalg.norm(apply_nonlinearity(nl, 0, phi) - apply_nonlinearity(nl, 0, psi)))
    assert lhs <= c * min(1.0, norm_beta(phi - psi, p)) * (1 + 1e-12) + 1e-300
    assert np.all(apply_nonlinearity(nl, 0, History.zero(p)) == 0.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 1.5), seeds, st.integers(0, 30), st.integers(0, 20))
def test_diagonal_dichotomy_axioms(beta, seed, n, k):
    p, d, sys, ev = diagonal_setup(beta=beta, L=48)
    rng = np.random.default_rng(seed)
    h = random_history(rng, p, support=20)
    nh = norm_beta(h, p)
    Ph = d.project_P(n, h)
    assert entries_distance(d.project_P(n + k, solve_linear(ev, n, h, n + k)), solve_linear(ev, n, Ph, n + k), p) \
        <= 1e-10 * (1 + nh)
    assert norm_beta(solve_linear(ev, n, Ph, n + k), p) <= d.D * math.exp(-d.lam * k) * nh * (1 + 1e-12)
    back = d.backward_on_F(n + k, n, d.project_Q(n + k, h))
    assert norm_beta(back, p) <= d.D * math.exp(-d.lam * k) * nh * (1 + 1e-12)
