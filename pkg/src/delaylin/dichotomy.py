"""Projections commuting with the evolution, the Green operator and the contraction certificate.

The Green operator is

    G(m, n) = A(m, n) P_n      for m >= n,
    G(m, n) = -A(m, n) Q_n     for m <  n,

where for m < n the map A(m, n) is the inverse of the forward evolution
restricted to F_m = range(Q_m).
"""

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import _kernels
from .delay_system import LinearTapSystem, SemilinearSystem, TimeRule
from .errors import ConfigurationError, DomainError
from .evolution import EvolutionFamily, solve_linear
from .phase_space import (
    History,
    PhaseSpaceParams,
    assumption_A_constants,
    check_history,
    entries_distance,
    norm_beta,
    random_history,
)


class DichotomyData:
    """Splitting B = E_n (+) F_n with constants (D, lam).

    Subclasses provide ``project_Q`` and ``backward_on_F``; ``P_n = Id - Q_n``.
    """

    family_tag = "abstract"

    def __init__(self, phase: PhaseSpaceParams, D: float, lam: float):
        if not lam > 0:
            raise ConfigurationError(f"invalid dichotomy: lambda must be positive, got {lam}")
        if not D > 0:
            raise ConfigurationError(f"invalid dichotomy: D must be positive, got {D}")
        self.phase = phase
        self.D = float(D)
        self.lam = float(lam)

    def project_Q(self, n: int, h: History) -> History:
        raise NotImplementedError

    def project_P(self, n: int, h: History) -> History:
        return h - self.project_Q(n, h)

    def backward_on_F(self, n: int, m: int, h: History) -> History:
        """A(m, n) on F_n for n >= m."""
        raise NotImplementedError


class DiagonalDichotomy(DichotomyData):
    """Exact splitting for the tapless system x(m+1) = diag(a, b) x(m).

    F_n consists of the geometric backward extensions j -> B^j v with v in
    the unstable coordinates; Q_n phi is the one generated by the unstable
    part of phi(0).  This choice is forced: projecting every lag onto the
    unstable coordinates commutes with the flow but its inverse only shifts
    history back, which grows like e^{beta k} instead of decaying.
    """

    family_tag = "diagonal"

    def __init__(self, stable_mults: Sequence[float], unstable_mults: Sequence[float], phase: PhaseSpaceParams,
                 D: Optional[float] = None):
        a = np.asarray(stable_mults, dtype=float).reshape(-1)
        b = np.asarray(unstable_mults, dtype=float).reshape(-1)
        if a.size + b.size != phase.state_dim:
            raise ConfigurationError(
                f"{a.size} stable + {b.size} unstable multipliers do not match state_dim={phase.state_dim}"
            )
        if np.any(np.abs(a) >= 1) or np.any(np.abs(b) <= 1):
            raise ConfigurationError("multiplier on or across the unit circle: system is not hyperbolic")
        if phase.beta <= 0:
            raise ConfigurationError("the diagonal construction needs beta > 0")
        self.stable = a
        self.unstable = b
        self.multipliers = np.concatenate([a, b])
        self.unstable_mask = np.concatenate([np.zeros(a.size), np.ones(b.size)])
        self.inv_b = np.concatenate([np.zeros(a.size), 1.0 / b])
        rates = [phase.beta]
        rates += [math.log(1.0 / abs(x)) if x != 0 else math.inf for x in a]
        rates += [math.log(abs(x)) for x in b]
        lam = min(rates)
        self.D_analytic = self.analytic_D(phase.beta, b)
        super().__init__(phase, self.D_analytic if D is None else D, lam)

    @staticmethod
    def analytic_D(beta: float, unstable) -> float:
        """sup over the three decay channels of ||.|| e^{lam |m-n|}.

        Forward on E_n: the shifted history decays at rate beta and new stable
        values at rate ln(1/|a|), both starting from ||P_n|| <= 1 + e^{-beta}/min|b|.
        Backward on F_n: ||A(m,n) Q_n|| <= min|b|^{-(n-m)} since ||Q_n phi|| = |pi_u phi(0)|.
        """
        unstable = np.asarray(unstable, dtype=float)
        if unstable.size == 0:
            return 1.0
        return 1.0 + math.exp(-beta) / float(np.min(np.abs(unstable)))

    @property
    def linear_system(self) -> LinearTapSystem:
        return LinearTapSystem.diagonal(self.multipliers)

    def _geometric(self, v: np.ndarray) -> History:
        out = np.empty(self.phase.shape)
        tail = _kernels.fill_geometric(out, np.ascontiguousarray(v), self.inv_b, self.phase.beta)
        return History(out, tail)

    def generator(self, h: History) -> np.ndarray:
        return h.head * self.unstable_mask

    def project_Q(self, n: int, h: History) -> History:
        check_history(h, self.phase)
        return self._geometric(self.generator(h))

    def backward_on_F(self, n: int, m: int, h: History) -> History:
        if m > n:
            raise DomainError(f"backward_on_F needs n >= m, got n={n}, m={m}")
        check_history(h, self.phase)
        return self._geometric(self.generator(h) * self.inv_b ** (n - m))

    def in_F(self, v) -> History:
        """The element of F_n generated by v (stable part discarded)."""
        return self._geometric(np.asarray(v, dtype=float) * self.unstable_mask)


def make_diagonal_dichotomy(stable_mults, unstable_mults, p: PhaseSpaceParams, probe_samples: int = 0,
                            rng: Optional[np.random.Generator] = None, max_gap: int = 20) -> DiagonalDichotomy:
    """Build the diagonal family; optionally raise D to the largest probed ratio."""
    d = DiagonalDichotomy(stable_mults, unstable_mults, p)
    if probe_samples > 0:
        ev = EvolutionFamily(d.linear_system, p)
        rep = probe_dichotomy_axioms(d, ev, probe_samples, max_gap, rng=rng)
        d.D_probe = max(rep.max_forward_ratio, rep.max_backward_ratio)
        d.D = max(d.D_analytic, d.D_probe)
    return d


class TabulatedDichotomy(DichotomyData):
    """User-supplied projections acting on flattened stored entries.

    ``projections`` holds matrices P_n of size (L d) x (L d) following a time
    rule.  Tails are propagated as tail * D (for P, Q) and tail * e^beta per
    backward step; only the stored entries are computed exactly.
    """

    family_tag = "tabulated"

    def __init__(self, projections, time_rule: str, linear: LinearTapSystem, phase: PhaseSpaceParams,
                 D: float, lam: float, check_tol: float = 1e-9):
        super().__init__(phase, D, lam)
        P = np.asarray(projections, dtype=float)
        size = phase.trunc_len * phase.state_dim
        if P.ndim == 2:
            P = P[None]
        if P.shape[1:] != (size, size):
            raise ConfigurationError(f"projection matrices must be {size} x {size}, got {P.shape[1:]}")
        for i, Pi in enumerate(P):
            if np.linalg.norm(Pi @ Pi - Pi) > check_tol * (1 + np.linalg.norm(Pi)):
                raise ConfigurationError(f"tabulated projection {i} is not idempotent")
        linear.check(phase)
        self.rule = TimeRule(time_rule, P)
        self.linear = linear
        self._eye = np.eye(size)

    def _P(self, n: int) -> np.ndarray:
        return self.rule.at(n)

    def project_P(self, n: int, h: History) -> History:
        check_history(h, self.phase)
        flat = self._P(n) @ h.entries.reshape(-1)
        return History(flat.reshape(self.phase.shape), self.D * h.tail_bound)

    def project_Q(self, n: int, h: History) -> History:
        check_history(h, self.phase)
        flat = (self._eye - self._P(n)) @ h.entries.reshape(-1)
        return History(flat.reshape(self.phase.shape), self.D * h.tail_bound)

    def step_matrix(self, k: int) -> np.ndarray:
        """A(k+1, k) on flattened stored entries (the dropped lag is ignored)."""
        L, d = self.phase.shape
        M = np.zeros((L * d, L * d))
        C = self.linear.taps_at(k)
        for j in range(C.shape[0]):
            M[:d, j * d:(j + 1) * d] = C[j]
        M[d:, : (L - 1) * d] = np.eye((L - 1) * d)
        return M

    def backward_on_F(self, n: int, m: int, h: History) -> History:
        if m > n:
            raise DomainError(f"backward_on_F needs n >= m, got n={n}, m={m}")
        check_history(h, self.phase)
        cur = h.entries.reshape(-1)
        tail = h.tail_bound
        for k in range(n - 1, m - 1, -1):
            Qk = self._eye - self._P(k)
            z, *_ = np.linalg.lstsq(self.step_matrix(k) @ Qk, cur, rcond=None)
            cur = Qk @ z
            tail *= math.exp(self.phase.beta)
        return History(cur.reshape(self.phase.shape), tail)


def tabulate(d: DiagonalDichotomy) -> np.ndarray:
    """The diagonal family's P_n as a dense matrix on flattened entries."""
    L, dim = d.phase.shape
    Q = np.zeros((L * dim, L * dim))
    for i in range(dim):
        e = np.zeros(dim)
        e[i] = 1.0
        Q[:, i] = d.in_F(e).entries.reshape(-1)
    return np.eye(L * dim) - Q


class CorruptedDichotomy(DichotomyData):
    """Deliberately wrong projection families used as negative controls.

    ``identity_odd``: P_n = Id (so F_n = {0}) at odd n, the correct splitting
    at even n; the commutation law breaks.
    ``pointwise``: Q_n projects every lag onto the unstable coordinates; this
    commutes with the flow but the inverse on F_n merely shifts history back,
    so the backward decay inequality fails.
    """

    family_tag = "corrupted"
    MODES = ("identity_odd", "pointwise")

    def __init__(self, base: DiagonalDichotomy, mode: str):
        if mode not in self.MODES:
            raise ConfigurationError(f"unknown corruption {mode!r}; expected one of {self.MODES}")
        super().__init__(base.phase, base.D, base.lam)
        self.base = base
        self.mode = mode
        self.family_tag = f"corrupted:{mode}"

    def project_Q(self, n: int, h: History) -> History:
        if self.mode == "identity_odd":
            if n % 2:
                return History.zero(self.phase)
            return self.base.project_Q(n, h)
        return History(h.entries * self.base.unstable_mask, h.tail_bound)

    def backward_on_F(self, n: int, m: int, h: History) -> History:
        if m > n:
            raise DomainError(f"backward_on_F needs n >= m, got n={n}, m={m}")
        if self.mode == "identity_odd":
            if m % 2:
                return History.zero(self.phase)
            return self.base.backward_on_F(n, m, h)
        k = n - m
        L = self.phase.trunc_len
        out = np.zeros(self.phase.shape)
        if k < L:
            out[: L - k] = h.entries[k:]
        return History(out, h.tail_bound * math.exp(self.phase.beta * k))


def green_apply(d: DichotomyData, ev: EvolutionFamily, m: int, n: int, h: History) -> History:
    """G(m, n) h."""
    if m < 0 or n < 0:
        raise DomainError("times must be nonnegative")
    if m >= n:
        return solve_linear(ev, n, d.project_P(n, h), m)
    return -d.backward_on_F(n, m, d.project_Q(n, h))


class GreenNormBound(NamedTuple):
    upper: float
    lower_estimate: float
    near_bound: bool


def green_norm_bound(d: DichotomyData, m: int, n: int, ev: Optional[EvolutionFamily] = None, samples: int = 0,
                     rng: Optional[np.random.Generator] = None, support: Optional[int] = None) -> GreenNormBound:
    """a_{m,n}: the analytic bound D e^{-lam |m-n|}, plus a sampled lower estimate of ||G(m, n)||.

    ``near_bound`` flags a sampled estimate within 5% of the bound.
    """
    upper = d.D * math.exp(-d.lam * abs(m - n))
    lower = 0.0
    if samples > 0:
        if ev is None:
            raise ConfigurationError("sampling the Green operator needs the evolution family")
        rng = np.random.default_rng(0) if rng is None else rng
        p = d.phase
        for h in _probe_histories(rng, p, samples, support):
            lower = max(lower, norm_beta(green_apply(d, ev, m, n, h), p) / norm_beta(h, p))
    return GreenNormBound(upper, lower, lower >= 0.95 * upper)


def _probe_histories(rng, p: PhaseSpaceParams, samples: int, support: Optional[int]):
    """Unit-norm probes mixing plain Gaussian and weight-equalised entries."""
    support = p.trunc_len if support is None else support
    amp = np.exp(np.minimum(p.beta * np.arange(p.trunc_len), 30.0))[:, None]
    for i in range(samples):
        h = random_history(rng, p, support=support)
        if i % 2:
            h = History(h.entries * amp)
        yield h * (1.0 / norm_beta(h, p))


@dataclass
class ContractionCertificate:
    q_bound: float
    K1: float
    product: float
    horizon_used: int
    tail_bound_contribution: float
    satisfied: bool
    argmax_time: int = 0

    def to_dict(self) -> dict:
        return {
            "q_bound": self.q_bound,
            "K1": self.K1,
            "K1q": self.product,
            "horizon_used": self.horizon_used,
            "tail_bound_contribution": self.tail_bound_contribution,
            "satisfied": self.satisfied,
            "argmax_time": self.argmax_time,
        }


def _windowed_sum(c: TimeRule, D: float, lam: float, m: int, N: int, c_max: float, left_tail: bool):
    """sum_{n in window} c_n D e^{-lam |m-n-1|} over n in [max(0, m-1-N), m-1+N], and tails."""
    lo = max(0, m - 1 - N)
    n = np.arange(lo, m + N)
    cn = np.array([c.at(int(k)) for k in n], dtype=float)
    partial = float(np.sum(cn * D * np.exp(-lam * np.abs(m - n - 1))))
    r = math.exp(-lam)
    one_tail = c_max * D * r ** (N + 1) / (1.0 - r)
    tail = one_tail * (2 if left_tail else 1)
    return partial, tail


def contraction_certificate(sys: SemilinearSystem, d: DichotomyData, horizon: int = 200) -> ContractionCertificate:
    """Upper bound on q = sup_m sum_n c_n ||G(m, n+1)|| using ||G|| <= D e^{-lam|.|}.

    The sup over all m is reduced to finitely many m through the time rule of
    c: for constant/periodic c every m is dominated by the two-sided sum at
    its residue; tabulated rules are scanned over the table plus the horizon
    and then treated as constant (last value held).
    """
    if not d.lam > 0:
        raise ConfigurationError("invalid dichotomy: lambda must be positive")
    c = sys.c_rule
    if not np.all(np.isfinite(c.values)) or np.any(c.values < 0):
        raise ConfigurationError("Lipschitz constants must be finite and nonnegative")
    N = int(horizon)
    if N < 1:
        raise ConfigurationError("horizon must be positive")
    c_max = float(c.values.max())
    _, K1, _ = assumption_A_constants(sys.phase, 1)
    best = (-1.0, 0.0, 0)
    if c.kind in ("constant", "periodic"):
        for r in range(c.period):
            m = N + 1 + r
            partial, tail = _windowed_sum(c, d.D, d.lam, m, N, c_max, left_tail=True)
            if partial + tail > best[0]:
                best = (partial + tail, tail, m)
    else:
        T = len(c)
        for m in range(0, T + N + 1):
            partial, tail = _windowed_sum(c, d.D, d.lam, m, N, c_max, left_tail=m - 1 - N > 0)
            if partial + tail > best[0]:
                best = (partial + tail, tail, m)
        bulk = TimeRule.constant(c.values[-1])
        partial, tail = _windowed_sum(bulk, d.D, d.lam, N + 1, N, c_max, left_tail=True)
        if partial + tail > best[0]:
            best = (partial + tail, tail, T + N + 1)
    q, tail, m_arg = best
    product = K1 * q
    return ContractionCertificate(q, K1, product, N, tail, bool(product < 1.0), m_arg)


def two_sided_geometric_q(C: float, D: float, lam: float) -> float:
    """C D (1 + e^{-lam}) / (1 - e^{-lam}): sup_m sum_n C D e^{-lam|m-n-1|}."""
    r = math.exp(-lam)
    return C * D * (1.0 + r) / (1.0 - r)


def uniform_dichotomy_bound(C: float, D: float, lam: float, m: Optional[int] = None) -> float:
    """C D (e^{-lam}(1 - e^{-lam(m-1)})/(1 - e^{-lam}) + 1/(1 - e^{-lam})); m=None gives the sup."""
    r = math.exp(-lam)
    if m is None:
        return C * D * (r + 1.0) / (1.0 - r)
    return C * D * (r * (1.0 - r ** (m - 1)) / (1.0 - r) + 1.0 / (1.0 - r))


def threshold_amplitude(sys: SemilinearSystem, d: DichotomyData, horizon: int = 200) -> float:
    """Largest constant amplitude scale s with K(1) q < 1 for amplitude s * eps_m (open bound)."""
    base = contraction_certificate(sys, d, horizon)
    if base.product == 0:
        return math.inf
    return 1.0 / base.product


class DecayReport(NamedTuple):
    a: np.ndarray
    tail_sum: float
    index_below: int


def decay_probe(d: DichotomyData, m: int, n_max: int, eps: float = 1e-6) -> DecayReport:
    """(a_{m,n})_{n<=n_max}, a bound on sum_{n>n_max} a_{m,n+1}, and the first n past which a_{m,n} < eps."""
    n = np.arange(n_max + 1)
    a = d.D * np.exp(-d.lam * np.abs(m - n))
    r = math.exp(-d.lam)
    first = n_max + 2
    tail = d.D * r ** max(first - m, 0) / (1.0 - r) if first >= m else math.inf
    index = m + max(0, math.ceil(math.log(d.D / eps) / d.lam)) if d.D > eps else m
    return DecayReport(a, tail, index)


def commutation_residual(d: DichotomyData, ev: EvolutionFamily, n: int, m: int, h: History) -> float:
    """||P_m A(m,n) h - A(m,n) P_n h||."""
    if m < n:
        raise DomainError(f"need m >= n, got m={m}, n={n}")
    lhs = d.project_P(m, solve_linear(ev, n, h, m))
    rhs = solve_linear(ev, n, d.project_P(n, h), m)
    return entries_distance(lhs, rhs, d.phase)


@dataclass
class AxiomsReport:
    samples: int
    max_commutation: float
    max_projection_defect: float
    max_forward_ratio: float
    max_backward_ratio: float
    max_inversion_defect: float
    decay_violations: int
    commutation_violations: int

    @property
    def passed(self) -> bool:
        return self.decay_violations == 0 and self.commutation_violations == 0

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["passed"] = self.passed
        return out


def probe_dichotomy_axioms(d: DichotomyData, ev: EvolutionFamily, samples: int, max_gap: int = 20,
                           rng: Optional[np.random.Generator] = None, comm_tol: float = 1e-10,
                           rel_slack: float = 1e-12) -> AxiomsReport:
    """Sample histories and check projection algebra, commutation and both decay inequalities.

    Probe histories are supported on lags < L - max_gap so forward steps never
    push stored mass into the tail.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    p = d.phase
    support = max(1, p.trunc_len - max_gap - 1)
    max_comm = max_proj = max_fwd = max_bwd = max_inv = 0.0
    decay_bad = comm_bad = 0
    for i, h in enumerate(_probe_histories(rng, p, samples, support)):
        n = int(rng.integers(0, 2 * max_gap + 1))
        k = int(rng.integers(0, max_gap + 1))
        nh = norm_beta(h, p)
        Ph, Qh = d.project_P(n, h), d.project_Q(n, h)
        max_proj = max(
            max_proj,
            entries_distance(Ph + Qh, h, p) / nh,
            entries_distance(d.project_Q(n, Qh), Qh, p) / nh,
            entries_distance(d.project_P(n, Ph), Ph, p) / nh,
        )
        comm = commutation_residual(d, ev, n, n + k, h)
        max_comm = max(max_comm, comm / (1 + nh))
        if comm > comm_tol * (1 + nh):
            comm_bad += 1
        fwd = norm_beta(solve_linear(ev, n, Ph, n + k), p)
        ratio_f = fwd / (math.exp(-d.lam * k) * nh)
        max_fwd = max(max_fwd, ratio_f)
        m_back = n + k
        bwd = norm_beta(d.backward_on_F(m_back, n, d.project_Q(m_back, h)), p)
        ratio_b = bwd / (math.exp(-d.lam * k) * nh)
        max_bwd = max(max_bwd, ratio_b)
        if ratio_f > d.D * (1 + rel_slack) or ratio_b > d.D * (1 + rel_slack):
            decay_bad += 1
        if k <= 20:
            Qm = d.project_Q(m_back, h)
            back = d.backward_on_F(m_back, n, Qm)
            inv = entries_distance(solve_linear(ev, n, back, m_back), Qm, p) / max(norm_beta(Qm, p), 1e-300)
            if norm_beta(Qm, p) > 0:
                max_inv = max(max_inv, inv)
    return AxiomsReport(samples, max_comm, max_proj, max_fwd, max_bwd, max_inv, decay_bad, comm_bad)
