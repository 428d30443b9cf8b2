import math

import numpy as np
import pytest

from conftest import diagonal_setup
from delaylin.conjugacy import (
    apply_F_on_orbit,
    conjugacy_residual,
    conjugacy_table,
    dense_F_oracle,
    h_apply,
    injectivity_probe,
    linear_orbit,
    picard_iterations,
    solve_eta_on_orbit,
)
from delaylin.delay_system import Nonlinearity, TimeRule
from delaylin.dichotomy import contraction_certificate
from delaylin.errors import CertificateError, DomainError
from delaylin.phase_space import History, entries_distance, gamma_embed, norm_beta


def orbit_for(d, ev, n, v, horizon):
    return linear_orbit(d, ev, n, d.in_F(v), horizon)


def test_orbit_examples():
    p, d, sys, ev = diagonal_setup()
    v = np.array([0.0, 0.7])
    orb = orbit_for(d, ev, 5, v, 20)
    assert orb.base_drift == entries_distance(orb.psi[5], d.in_F(v), p) <= 1e-15
    for m in range(5, 21):
        assert np.allclose(orb.psi[m].head, v * 2.0 ** (m - 5), rtol=1e-15)
    for m in range(0, 5):
        assert np.allclose(orb.psi[m].head, v * 2.0 ** (m - 5), rtol=1e-15)
        back_forward = ev.step(m, orb.psi[m])
        assert entries_distance(back_forward, orb.psi[m + 1], p) <= 1e-12 * norm_beta(orb.psi[m + 1], p)
    assert orb.membership_defect <= 1e-10


def test_orbit_rejects_non_member():
    p, d, sys, ev = diagonal_setup()
    with pytest.raises(DomainError):
        linear_orbit(d, ev, 0, gamma_embed([1.0, 0.0], p), 10)


def test_orbit_overflow_flag():
    p, d, sys, ev = diagonal_setup()
    assert not orbit_for(d, ev, 0, [0.0, 1.0], 40).overflow
    assert orbit_for(d, ev, 0, [0.0, 1.0], 60).overflow


def test_F_of_zero_nonlinearity_is_zero():
    p, d, sys, ev = diagonal_setup(eps=0.0)
    orb = orbit_for(d, ev, 3, [0.0, 1.0], 12)
    out, _ = apply_F_on_orbit(sys, d, orb.psi, [History.zero(p)] * 13)
    assert all(x.is_zero() for x in out)
    oe = solve_eta_on_orbit(sys, d, orb)
    assert oe.iterations == 1 and oe.apriori_error == 0.0 and oe.exact
    assert all(entries_distance(h_apply(oe, m), orb.psi[m], p) == 0.0 for m in range(13))


def test_F_of_zero_bounded_by_K1q():
    p, d, sys, ev = diagonal_setup(eps=0.05)
    cert = contraction_certificate(sys, d)
    orb = orbit_for(d, ev, 10, [0.0, 1.0], 30)
    out, _ = apply_F_on_orbit(sys, d, orb.psi, [History.zero(p)] * 31)
    assert max(norm_beta(x, p) for x in out) <= cert.product


def test_one_iteration_is_F_of_zero():
    p, d, sys, ev = diagonal_setup(eps=0.05)
    orb = orbit_for(d, ev, 4, [0.0, 1.0], 15)
    oe = solve_eta_on_orbit(sys, d, orb, iterations=1)
    out, _ = apply_F_on_orbit(sys, d, orb.psi, [History.zero(p)] * 16)
    assert all(np.array_equal(a.entries, b.entries) for a, b in zip(oe.u, out))


def test_refuses_uncertified():
    p, d, sys, ev = diagonal_setup(eps=2.0)
    with pytest.raises(CertificateError):
        solve_eta_on_orbit(sys, d, orbit_for(d, ev, 0, [0.0, 1.0], 10))


def test_picard_iteration_count():
    assert picard_iterations(0.5, 1e-8) == 27
    assert 0.5 ** picard_iterations(0.5, 1e-8) <= 1e-8 < 0.5 ** 26
    assert picard_iterations(0.0) == 1


@pytest.mark.parametrize("n0", [0, 3, 6])
@pytest.mark.parametrize("depth", [1, 2, 3])
def test_dense_oracle_agrees(n0, depth):
    p, d, sys, ev = diagonal_setup(beta=1.0, L=24, eps=0.04, lags=(0, 1))
    orb = orbit_for(d, ev, n0, [0.0, 0.8], 6)
    oe = solve_eta_on_orbit(sys, d, orb, iterations=depth)
    dense = dense_F_oracle(sys, d, n0, orb.psi[n0], depth, 6)
    assert entries_distance(dense, oe.u[n0], p) <= 1e-12


def test_dense_oracle_refuses_large_horizon():
    p, d, sys, ev = diagonal_setup()
    with pytest.raises(DomainError):
        dense_F_oracle(sys, d, 0, d.in_F([0.0, 1.0]), 1, 9)
    assert dense_F_oracle(sys, d, 0, d.in_F([0.0, 1.0]), 0, 4).is_zero()


def test_eta_contracts_and_is_bounded():
    p, d, sys, ev = diagonal_setup(eps=0.01, lags=(0, 2))
    cert = contraction_certificate(sys, d)
    assert cert.product <= 0.5
    oe = solve_eta_on_orbit(sys, d, orbit_for(d, ev, 10, [0.0, 1.0], 40), certificate=cert)
    assert all(r <= cert.product for r in oe.step_ratios)
    assert oe.eta_sup <= oe.eta_bound()
    # fixed-point residual at termination
    nxt, _ = apply_F_on_orbit(sys, d, oe.psi, oe.u)
    resid = max(entries_distance(a, b, p) for a, b in zip(nxt, oe.u))
    assert resid <= (1 + cert.product) * oe.apriori_error + 1e-15


def test_conjugacy_identity_certified_instance():
    # eps = 0.05, horizon 40, K = 25
    p, d, sys, ev = diagonal_setup(eps=0.05)
    oe = solve_eta_on_orbit(sys, d, orbit_for(d, ev, 20, [0.0, 1.0], 40), iterations=25)
    rows = conjugacy_table(sys, oe)
    assert len(rows) == 41 * 42 // 2
    assert all(r.passed for r in rows)
    assert all(r.residual == 0.0 for r in rows if r.n == r.m)
    worst = max(rows, key=lambda r: r.residual)
    assert worst.residual <= worst.tolerance


def test_conjugacy_with_zero_f_is_exact():
    p, d, sys, ev = diagonal_setup(eps=0.0)
    oe = solve_eta_on_orbit(sys, d, orbit_for(d, ev, 7, [0.0, 1.0], 30))
    assert all(r.residual == 0.0 for r in conjugacy_table(sys, oe))


def test_conjugacy_residual_domain():
    p, d, sys, ev = diagonal_setup()
    oe = solve_eta_on_orbit(sys, d, orbit_for(d, ev, 0, [0.0, 1.0], 10))
    with pytest.raises(DomainError):
        conjugacy_residual(sys, oe, 5, 4)


def test_identity_violated_by_perturbed_eta():
    # a wrong eta must be caught by the budget
    p, d, sys, ev = diagonal_setup(eps=0.05)
    oe = solve_eta_on_orbit(sys, d, orbit_for(d, ev, 5, [0.0, 1.0], 20))
    bump = History(np.eye(1, p.trunc_len * 2).reshape(p.shape) * 1e-3)
    oe.u[8] = oe.u[8] + bump
    assert not all(r.passed for r in conjugacy_table(sys, oe, [(8, m) for m in range(8, 21)]))


def test_injectivity_distinct_generators():
    p, d, sys, ev = diagonal_setup(eps=0.05)
    phi1, phi2 = d.in_F([0.0, 1.0]), d.in_F([0.0, 0.9])
    rep = injectivity_probe(sys, d, 3, phi1, phi2, 40)
    assert rep.passed and not rep.vacuous
    assert np.allclose(rep.grow, 0.1 * 2.0 ** (rep.times - 3), rtol=1e-13)
    assert np.all(rep.lower <= rep.grow * (1 + 1e-12))
    delta = 0.1
    bound = math.ceil((math.log(rep.ceiling) - math.log(delta) + math.log(d.D)) / math.log(2.0)) + 1
    assert rep.crossing_time - 3 <= bound


def test_injectivity_equal_histories_vacuous():
    p, d, sys, ev = diagonal_setup(eps=0.05)
    phi = d.in_F([0.0, 1.0])
    rep = injectivity_probe(sys, d, 2, phi, phi, 30)
    assert rep.vacuous and rep.passed
    assert np.all(rep.grow == 0.0) and rep.h_separation == 0.0


def test_injectivity_refuses_varying_constants():
    p, d, sys, ev = diagonal_setup(eps=0.05)
    varying = sys.with_nonlinearity(sys.nonlinear.with_amplitude(TimeRule("periodic", [0.05, 0.02])))
    with pytest.raises(DomainError):
        injectivity_probe(varying, d, 0, d.in_F([0.0, 1.0]), d.in_F([0.0, 2.0]), 20)
