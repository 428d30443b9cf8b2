"""Forward solution operators of the linear and semilinear delay equations.

``A(m, n)`` and ``R(m, n)`` are never materialised; they are applied by
stepping the recursion on truncated histories.
"""

from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .delay_system import LinearTapSystem, Nonlinearity, SemilinearSystem, apply_nonlinearity
from .errors import DomainError
from .phase_space import History, PhaseSpaceParams, check_history, entries_distance, gamma_embed, shift_append

_NO_LAGS = np.zeros(0, dtype=np.int64)


class EvolutionFamily:
    """The evolution family A(m, n) of x(m+1) = A_m x_m on B^beta."""

    def __init__(self, linear: LinearTapSystem, phase: PhaseSpaceParams):
        linear.check(phase)
        self.linear = linear
        self.phase = phase

    @classmethod
    def of(cls, sys: SemilinearSystem) -> "EvolutionFamily":
        return cls(sys.linear, sys.phase)

    def step(self, k: int, h: History) -> History:
        """A(k+1, k) h."""
        return solve_linear(self, k, h, k + 1)


def _run(linear: LinearTapSystem, p: PhaseSpaceParams, n: int, h: History, m: int,
         forcing=None, nonlinear: Optional[Nonlinearity] = None):
    """Step from time n to m; returns (segment x_m, heads x(n+1..m))."""
    if m < n:
        raise DomainError(f"forward evolution needs m >= n, got m={m}, n={n}")
    if n < 0:
        raise DomainError("times must be nonnegative")
    check_history(h, p)
    S = m - n
    d = p.state_dim
    if S == 0:
        return h, np.zeros((0, d))
    taps = linear.taps_span(n, m)
    forcing = np.zeros((S, d)) if forcing is None else np.ascontiguousarray(forcing, dtype=float).reshape(S, d)
    entries = np.ascontiguousarray(h.entries)
    if nonlinear is None or nonlinear.is_zero:
        e, t, heads = _kernels.evolve(entries, h.tail_bound, taps, forcing, np.zeros(S), _NO_LAGS,
                                      np.zeros((0, d)), np.zeros(d), _kernels.SHAPE_NONE, p.beta)
        return History(e, t), heads
    if nonlinear.is_builtin:
        e, t, heads = _kernels.evolve(entries, h.tail_bound, taps, forcing, nonlinear.amplitudes(n, m),
                                      nonlinear.read_lags, nonlinear.weights, nonlinear.direction,
                                      nonlinear.shape_code, p.beta)
        return History(e, t), heads
    # user-supplied shape: python loop
    heads = np.zeros((S, d))
    x = h
    for s in range(S):
        k = n + s
        v = _kernels.tap_read(np.ascontiguousarray(taps[s]), np.ascontiguousarray(x.entries))
        v = v + forcing[s] + apply_nonlinearity(nonlinear, k, x)
        heads[s] = v
        x = shift_append(x, v, p)
    return x, heads


def solve_linear(ev: EvolutionFamily, n: int, phi: History, m: int) -> History:
    """A(m, n) phi."""
    return _run(ev.linear, ev.phase, n, phi, m)[0]


def solve_semilinear(sys: SemilinearSystem, n: int, phi: History, m: int) -> History:
    """R(m, n) phi."""
    return _run(sys.linear, sys.phase, n, phi, m, nonlinear=sys.nonlinear)[0]


def linear_trajectory(ev: EvolutionFamily, phi: History, steps: int, n: int = 0) -> np.ndarray:
    """Rows x(n), x(n+1), ..., x(n+steps) of the linear solution."""
    _, heads = _run(ev.linear, ev.phase, n, phi, n + steps)
    return np.vstack([phi.head[None], heads])


def semilinear_trajectory(sys: SemilinearSystem, phi: History, steps: int, n: int = 0) -> np.ndarray:
    _, heads = _run(sys.linear, sys.phase, n, phi, n + steps, nonlinear=sys.nonlinear)
    return np.vstack([phi.head[None], heads])


def solve_forced(ev: EvolutionFamily, phi: History, p: Sequence, m: int) -> History:
    """x_m for x(k+1) = A_k x_k + p_k, x_0 = phi, by direct stepping."""
    p = np.asarray(p, dtype=float).reshape(-1, ev.phase.state_dim)
    if p.shape[0] < m:
        raise DomainError(f"forcing given on {p.shape[0]} steps, need {m}")
    return _run(ev.linear, ev.phase, 0, phi, m, forcing=p[:m])[0]


def voc_sum(ev: EvolutionFamily, phi: History, p: Sequence, m: int) -> History:
    """A(m, 0) phi + sum_{k<m} A(m, k+1) Gamma p_k, each term propagated separately."""
    p = np.asarray(p, dtype=float).reshape(-1, ev.phase.state_dim)
    if p.shape[0] < m:
        raise DomainError(f"forcing given on {p.shape[0]} steps, need {m}")
    total = solve_linear(ev, 0, phi, m)
    for k in range(m):
        total = total + solve_linear(ev, k + 1, gamma_embed(p[k], ev.phase), m)
    return total


def voc_residual_two_time(sys: SemilinearSystem, n: int, m: int, phi: History) -> float:
    """||x_m - A(m,n) x_n - sum_{k=n}^{m-1} A(m,k+1) Gamma f_k(x_k)|| on stored lags, x through (0, phi)."""
    if m < n:
        raise DomainError(f"need m >= n, got m={m}, n={n}")
    ev = EvolutionFamily.of(sys)
    seg = [phi]
    for k in range(m):
        seg.append(solve_semilinear(sys, k, seg[-1], k + 1))
    rhs = solve_linear(ev, n, seg[n], m)
    for k in range(n, m):
        fk = apply_nonlinearity(sys.nonlinear, k, seg[k])
        rhs = rhs + solve_linear(ev, k + 1, gamma_embed(fk, sys.phase), m)
    return entries_distance(seg[m], rhs, sys.phase)
