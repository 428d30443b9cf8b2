"""The conjugacy h^n = Id + eta^n, computed one linear orbit at a time.

The fixed-point operator

    F(eta)(n, phi) = sum_m G(n, m+1) Gamma f_m(A(m,n) phi + eta^m(A(m,n) phi))

only evaluates eta at points of the orbit {A(m, n) phi}, so restricted to one
orbit psi_0, ..., psi_N it is a contraction on N+1 histories.  The Green sum
is evaluated with a forward sweep over the E-part and a backward sweep over
the F-part, which costs O(N) history operations per Picard step.
"""

import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional

import numpy as np

from .delay_system import SemilinearSystem, apply_nonlinearity
from .dichotomy import ContractionCertificate, DichotomyData, contraction_certificate, green_apply
from .errors import CertificateError, ConsistencyError, DomainError
from .evolution import EvolutionFamily, solve_linear, solve_semilinear
from .phase_space import History, PhaseSpaceParams, entries_distance, gamma_embed, norm_beta

MEMBERSHIP_TOL = 1e-10
ORBIT_NORM_BUDGET = 1e14
DENSE_MAX_HORIZON = 8


@dataclass
class Orbit:
    base_time: int
    psi: List[History]
    membership_defect: float
    overflow: bool
    base_drift: float = 0.0

    @property
    def horizon(self) -> int:
        return len(self.psi) - 1


def linear_orbit(d: DichotomyData, ev: EvolutionFamily, n: int, phi: History, horizon: int) -> Orbit:
    """psi_m = A(m, n) phi for m = 0..horizon; backward on F for m < n.

    For n > 0 the orbit is rebuilt forward from psi_0, so psi_m = A(m, k) psi_k holds
    bit for bit for every k <= m; ``base_drift`` is the roundoff ||psi_n - phi||.
    """
    if not 0 <= n <= horizon:
        raise DomainError(f"base time {n} outside [0, {horizon}]")
    p = d.phase
    off = norm_beta(d.project_P(n, phi), p)
    if off > MEMBERSHIP_TOL * (1 + norm_beta(phi, p)):
        raise DomainError(f"phi is not in F_{n}: ||P_n phi|| = {off:.3g}")
    phi = d.project_Q(n, phi)
    psi: List[Optional[History]] = [None] * (horizon + 1)
    psi[n] = phi
    for k in range(n - 1, -1, -1):
        psi[k] = d.backward_on_F(k + 1, k, psi[k + 1])
    for k in range(0, n):
        psi[k + 1] = ev.step(k, psi[k])
    drift = entries_distance(psi[n], phi, p)
    for k in range(n, horizon):
        psi[k + 1] = ev.step(k, psi[k])
    defect = 0.0
    largest = 0.0
    for m, x in enumerate(psi):
        nx = norm_beta(x, p)
        largest = max(largest, nx)
        defect = max(defect, norm_beta(d.project_P(m, x), p) / (1 + nx))
    return Orbit(n, psi, defect, largest > ORBIT_NORM_BUDGET, drift)


def apply_F_on_orbit(sys: SemilinearSystem, d: DichotomyData, psi: List[History], u: List[History]):
    """u'_k = sum_{m=0}^{N} G(k, m+1) Gamma f_m(psi_m + u_m), and the per-index bound on the dropped m > N.

    Forward part S_k = sum_{j<=k} A(k,j) P_j Gamma g_{j-1} obeys S_{k+1} = A(k+1,k) S_k + P_{k+1} Gamma g_k;
    backward part T_k = sum_{j>k} A(k,j) Q_j Gamma g_{j-1} obeys T_k = A(k,k+1)(Q_{k+1} Gamma g_k + T_{k+1}).
    """
    if len(psi) != len(u):
        raise DomainError("orbit and iterate must share the horizon")
    p = sys.phase
    ev = EvolutionFamily.of(sys)
    N = len(psi) - 1
    g = [gamma_embed(apply_nonlinearity(sys.nonlinear, m, psi[m] + u[m]), p) for m in range(N + 1)]
    S = [History.zero(p)] * (N + 1)
    for k in range(N):
        S[k + 1] = ev.step(k, S[k]) + d.project_P(k + 1, g[k])
    T = [History.zero(p)] * (N + 1)
    T[N] = d.backward_on_F(N + 1, N, d.project_Q(N + 1, g[N]))
    for k in range(N - 1, -1, -1):
        T[k] = d.backward_on_F(k + 1, k, d.project_Q(k + 1, g[k]) + T[k + 1])
    out = [S[k] - T[k] for k in range(N + 1)]
    return out, sum_tail_bounds(sys, d, N)


def sum_tail_bounds(sys: SemilinearSystem, d: DichotomyData, N: int) -> np.ndarray:
    """K(1) c_max D e^{-lam (N+2-k)} / (1 - e^{-lam}) for k = 0..N: the omitted terms m > N."""
    K1 = 1.0 if sys.phase.beta >= 0 else math.exp(-sys.phase.beta)
    r = math.exp(-d.lam)
    k = np.arange(N + 1)
    return K1 * sys.c_max * d.D * r ** (N + 2 - k) / (1.0 - r)


def picard_iterations(kappa: float, target: float = 1e-8) -> int:
    """Smallest K >= 1 with kappa^K <= target."""
    if kappa <= 0:
        return 1
    if kappa >= 1:
        raise CertificateError(f"K(1) q = {kappa} >= 1: no contraction")
    return max(1, math.ceil(math.log(target) / math.log(kappa) - 1e-12))


@dataclass
class OrbitEta:
    base_time: int
    phi: History
    horizon: int
    psi: List[History]
    u: List[History]
    iterations: int
    contraction_factor: float
    apriori_error: float
    step_norms: List[float]
    step_ratios: List[float]
    sum_tail: np.ndarray
    certificate: ContractionCertificate
    phase: PhaseSpaceParams
    exact: bool = False
    overflow: bool = False
    membership_defect: float = 0.0
    roundoff_stop: bool = False
    kappa_power: float = 0.0
    local_tail: Optional[np.ndarray] = None

    @property
    def eta_sup(self) -> float:
        return max(norm_beta(x, self.phase) for x in self.u)

    @property
    def eta_error(self) -> float:
        """Bound on sup_m ||u_m - eta^m(psi_m)||: Picard error plus the truncated Green sum."""
        kappa = self.contraction_factor
        return self.apriori_error + float(self.sum_tail.max()) / (1.0 - kappa)

    def error_at(self, m: int) -> float:
        """Bound on ||u_m - eta^m(psi_m)|| at one index, using the componentwise truncation bound."""
        tail = self.local_tail if self.local_tail is not None else self.sum_tail / (1.0 - self.contraction_factor)
        return self.apriori_error + float(tail[m])

    def eta_bound(self) -> float:
        kappa = self.contraction_factor
        return kappa / (1.0 - kappa) + self.apriori_error


def solve_eta_on_orbit(sys: SemilinearSystem, d: DichotomyData, orbit: Orbit, iterations: Optional[int] = None,
                       target: float = 1e-8, certificate: Optional[ContractionCertificate] = None,
                       ratio_slack: float = 1e-13) -> OrbitEta:
    """Picard iteration u^(0) = 0, u^(k+1) = F(u^(k)) on one orbit.

    Runs K iterations, or fewer once a step drops below the floating-point
    floor 16 eps sup||u||: further steps are noise.  Step ratios are recorded
    only for steps above that floor.
    """
    cert = contraction_certificate(sys, d) if certificate is None else certificate
    if not cert.satisfied:
        raise CertificateError(f"K(1) q = {cert.product:.6g} >= 1: the contraction hypothesis fails")
    kappa = cert.product
    K = picard_iterations(kappa, target) if iterations is None else int(iterations)
    if K < 1:
        raise DomainError("need at least one Picard iteration")
    p = sys.phase
    psi = orbit.psi
    u = [History.zero(p)] * len(psi)
    steps: List[float] = []
    ratios: List[float] = []
    tails = None
    done = 0
    floor = 0.0
    eps = float(np.finfo(float).eps)
    for it in range(K):
        new, tails = apply_F_on_orbit(sys, d, psi, u)
        step = max(entries_distance(a, b, p) for a, b in zip(new, u))
        scale = max(norm_beta(x, p) for x in new)
        floor = 16.0 * eps * scale
        if steps:
            if step > kappa * steps[-1] + ratio_slack * (1 + scale):
                raise ConsistencyError(
                    f"Picard step {it}: ||u^(k+1)-u^(k)|| = {step:.3g} > K(1)q * previous = {kappa * steps[-1]:.3g}"
                )
            if step > floor:
                ratios.append(step / steps[-1])
        steps.append(step)
        u = new
        done = it + 1
        if step <= floor:
            break
    exact = steps[-1] == 0.0
    stopped = not exact and steps[-1] <= floor
    # kappa^K kappa/(1-kappa) bounds ||u^(K) - u*|| whether or not the loop stopped early
    kappa_power = 0.0 if exact or kappa == 0 else kappa ** done
    apriori = kappa_power * kappa / (1.0 - kappa)
    return OrbitEta(orbit.base_time, psi[orbit.base_time], orbit.horizon, psi, u, done, kappa, apriori, steps,
                    ratios, tails, cert, p, exact, orbit.overflow, orbit.membership_defect, stopped, kappa_power,
                    truncation_error_profile(sys, d, tails))


def truncation_error_profile(sys: SemilinearSystem, d: DichotomyData, tails: np.ndarray) -> np.ndarray:
    """Componentwise bound e on |u*_k - eta^k(psi_k)| for the truncated fixed point u*.

    e <= t + M e with M_{km} = K(1) D e^{-lam |k-m-1|} c_m >= 0 and row sums <= K(1)q < 1,
    so e <= (I - M)^{-1} t entrywise.  Far from the horizon this is much smaller
    than the uniform bound max t / (1 - K(1)q).
    """
    N = tails.size - 1
    K1 = 1.0 if sys.phase.beta >= 0 else math.exp(-sys.phase.beta)
    k = np.arange(N + 1)
    c = np.array([sys.c_at(m) for m in range(N + 1)])
    M = K1 * d.D * np.exp(-d.lam * np.abs(k[:, None] - k[None, :] - 1)) * c[None, :]
    e = np.linalg.solve(np.eye(N + 1) - M, tails)
    # the solve is accurate to a few ulps of the uniform bound; keep that as margin
    uniform = float(tails.max()) / max(1.0 - float(M.sum(axis=1).max()), 1e-300)
    return np.minimum(np.maximum(e, 0.0) + 64 * np.finfo(float).eps * (N + 1) * uniform, uniform)


def h_apply(oe: OrbitEta, m: int) -> History:
    """h^m(psi_m) = psi_m + eta^m(psi_m)."""
    if not 0 <= m <= oe.horizon:
        raise DomainError(f"time {m} outside the computed horizon [0, {oe.horizon}]")
    return oe.psi[m] + oe.u[m]


def step_lipschitz(sys: SemilinearSystem, k: int) -> float:
    """Lipschitz bound of R(k+1, k) on B^beta: max(||A_k|| + c_k, e^{-beta})."""
    p = sys.phase
    return max(sys.linear.operator_norm_bound(k, p.beta) + sys.c_at(k), math.exp(-p.beta))


class ConjugacyResidual(NamedTuple):
    n: int
    m: int
    residual: float
    tolerance: float
    picard: float
    roundoff: float
    truncation: float
    f_sum_tail: float
    passed: bool


class _Budget(NamedTuple):
    log_lip_cum: np.ndarray   # log_lip_cum[k] = sum_{j<k} log Lip_j
    lip: np.ndarray
    defect: np.ndarray        # K(1) c_k kappa^K
    local_round: np.ndarray   # rho (||h_{k+1}|| + Lip_k ||h_k|| + u_scale)


def _budget(sys: SemilinearSystem, oe: OrbitEta) -> _Budget:
    p = sys.phase
    N = oe.horizon
    K1 = 1.0 if p.beta >= 0 else math.exp(-p.beta)
    kappa = oe.contraction_factor
    defect_scale = oe.kappa_power
    rho = 64.0 * p.state_dim * (sys.linear.max_lag + 3) * float(np.finfo(float).eps)
    u_scale = (N + 2) * max(norm_beta(x, p) for x in oe.u)
    lip = np.array([step_lipschitz(sys, k) for k in range(N + 1)])
    hn = np.array([norm_beta(h_apply(oe, k), p) for k in range(N + 1)])
    c = np.array([sys.c_at(k) for k in range(N + 1)])
    local = np.zeros(N + 1)
    local[:N] = rho * (hn[1:] + lip[:N] * hn[:N] + u_scale)
    cum = np.concatenate([[0.0], np.cumsum(np.log(lip))])
    return _Budget(cum, lip, K1 * c * defect_scale, local)


def conjugacy_residual(sys: SemilinearSystem, oe: OrbitEta, n: int, m: int,
                       budget: Optional[_Budget] = None) -> ConjugacyResidual:
    """||h^m(A(m,n) phi) - R(m,n) h^n(phi)|| with its error budget.

    The residual is measured on stored lags; the budget is
      picard:     one-step defects K(1) c_k kappa^K propagated by the step Lipschitz bounds,
      roundoff:   a floating-point allowance for the same propagation,
      truncation: the tail bounds of both sides.
    The iterate of the truncated Green sum satisfies the one-step identity up
    to the Picard defect, so the dropped Green terms (``f_sum_tail``) measure
    the distance to the true eta but do not enter the identity budget.
    """
    if not 0 <= n <= m <= oe.horizon:
        raise DomainError(f"need 0 <= n <= m <= {oe.horizon}, got n={n}, m={m}")
    p = sys.phase
    b = _budget(sys, oe) if budget is None else budget
    left = h_apply(oe, m)
    right = solve_semilinear(sys, n, h_apply(oe, n), m)
    resid = entries_distance(left, right, p)
    # amplification of a defect injected at step k -> k+1 up to time m
    k = np.arange(n, m)
    amp = np.exp(b.log_lip_cum[m] - b.log_lip_cum[k + 1])
    picard = float(np.sum(amp * b.defect[k]))
    roundoff = float(np.sum(amp * b.local_round[k]))
    trunc = left.tail_bound + right.tail_bound
    tol = picard + roundoff + trunc
    return ConjugacyResidual(n, m, resid, tol, picard, roundoff, trunc, float(oe.sum_tail[m]), bool(resid <= tol))


def conjugacy_table(sys: SemilinearSystem, oe: OrbitEta, pairs=None) -> List[ConjugacyResidual]:
    if pairs is None:
        pairs = [(n, m) for n in range(oe.horizon + 1) for m in range(n, oe.horizon + 1)]
    b = _budget(sys, oe)
    return [conjugacy_residual(sys, oe, n, m, b) for n, m in pairs]


@dataclass
class InjectivityReport:
    base_time: int
    times: np.ndarray
    grow: np.ndarray
    lower: np.ndarray
    ceiling: float
    crossing_time: Optional[int]
    lower_bound_ok: bool
    h_separation: float
    solver_tolerance: float
    vacuous: bool

    @property
    def passed(self) -> bool:
        if self.vacuous:
            return self.h_separation <= self.solver_tolerance
        return self.crossing_time is not None and self.lower_bound_ok and self.h_separation > self.solver_tolerance

    def to_dict(self) -> dict:
        return {
            "base_time": self.base_time,
            "ceiling": self.ceiling,
            "crossing_time": self.crossing_time,
            "lower_bound_ok": self.lower_bound_ok,
            "h_separation": self.h_separation,
            "solver_tolerance": self.solver_tolerance,
            "vacuous": self.vacuous,
            "passed": self.passed,
        }


def injectivity_probe(sys: SemilinearSystem, d: DichotomyData, p_time: int, phi1: History, phi2: History,
                      horizon: int, target: float = 1e-8,
                      certificate: Optional[ContractionCertificate] = None) -> InjectivityReport:
    """Growth of ||A(n,p)(phi1 - phi2)|| against the ceiling 2 K(1)q/(1 - K(1)q) bounding 2||eta||."""
    c = sys.c_rule.values
    if not np.all(c == c[0]):
        raise DomainError(
            "injectivity needs a constant sequence of Lipschitz constants; the non-constant case is not covered"
        )
    ph = sys.phase
    cert = contraction_certificate(sys, d) if certificate is None else certificate
    if not cert.satisfied:
        raise CertificateError(f"K(1) q = {cert.product:.6g} >= 1")
    kappa = cert.product
    ev = EvolutionFamily.of(sys)
    delta = d.project_Q(p_time, phi1 - phi2)
    nd = norm_beta(delta, ph)
    times = np.arange(p_time, horizon + 1)
    grow = np.zeros(times.size)
    lower = np.zeros(times.size)
    x = delta
    for i, n in enumerate(times):
        if i:
            x = ev.step(int(n) - 1, x)
        grow[i] = norm_beta(x, ph)
        a = d.D * math.exp(-d.lam * (n - p_time))
        lower[i] = nd / a if n > p_time else 0.0
    ceiling = 2.0 * kappa / (1.0 - kappa)
    crossing = None
    if nd > 0:
        idx = np.nonzero(grow > ceiling)[0]
        crossing = int(times[idx[0]]) if idx.size else None
    lower_ok = bool(np.all(lower <= grow * (1 + 1e-12) + 1e-300))
    oe1 = solve_eta_on_orbit(sys, d, linear_orbit(d, ev, p_time, phi1, horizon), target=target, certificate=cert)
    oe2 = solve_eta_on_orbit(sys, d, linear_orbit(d, ev, p_time, phi2, horizon), target=target, certificate=cert)
    sep = entries_distance(h_apply(oe1, p_time), h_apply(oe2, p_time), ph)
    tol = oe1.error_at(p_time) + oe2.error_at(p_time)
    return InjectivityReport(p_time, times, grow, lower, ceiling, crossing, lower_ok, sep, tol, nd == 0)


def dense_F_oracle(sys: SemilinearSystem, d: DichotomyData, n: int, phi: History, depth: int,
                   horizon: int) -> History:
    """F^depth(0)(n, phi) by literal recursion over the definition, no orbit sharing.

    Every evaluation point A(m, n) phi is recomputed from its caller and every
    Green term goes through ``green_apply``; the cost is (horizon+1)^depth.
    """
    if horizon > DENSE_MAX_HORIZON:
        raise DomainError(f"dense oracle refuses horizon {horizon} > {DENSE_MAX_HORIZON}")
    ev = EvolutionFamily.of(sys)
    p = sys.phase

    def F_iter(level: int, t: int, x: History) -> History:
        if level == 0:
            return History.zero(p)
        total = History.zero(p)
        for m in range(horizon + 1):
            arg = solve_linear(ev, t, x, m) if m >= t else d.backward_on_F(t, m, x)
            inner = F_iter(level - 1, m, arg)
            g = apply_nonlinearity(sys.nonlinear, m, arg + inner)
            total = total + green_apply(d, ev, t, m + 1, gamma_embed(g, p))
        return total

    return F_iter(depth, n, phi)
