"""Truncated elements of the weighted history space B^beta.

A history ``phi: Z^- -> X`` is stored as its ``L`` most recent values
(row ``k`` holds ``phi(-k)``) together with a bound on the weighted tail
``sup_{j < -(L-1)} |phi(j)| e^{beta j}``.  Norms are ``max(stored part, tail)``
and therefore always upper bounds of the true norm.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np

from . import _kernels
from .errors import ConfigurationError


@dataclass(frozen=True)
class PhaseSpaceParams:
    beta: float
    state_dim: int
    trunc_len: int
    allow_nonpositive_beta: bool = False

    def __post_init__(self):
        if int(self.state_dim) != self.state_dim or self.state_dim < 1:
            raise ConfigurationError(f"state_dim must be a positive integer, got {self.state_dim!r}")
        if int(self.trunc_len) != self.trunc_len or self.trunc_len < 1:
            raise ConfigurationError(f"trunc_len must be a positive integer, got {self.trunc_len!r}")
        if not np.isfinite(self.beta):
            raise ConfigurationError("beta must be finite")
        if self.beta <= 0 and not self.allow_nonpositive_beta:
            raise ConfigurationError(
                f"beta={self.beta} <= 0 rejected; pass allow_nonpositive_beta=True to override"
            )

    @cached_property
    def weights(self) -> np.ndarray:
        """e^{-beta k} for the stored lags k = 0..L-1."""
        return np.exp(-self.beta * np.arange(self.trunc_len))

    @property
    def shape(self):
        return (self.trunc_len, self.state_dim)


@dataclass(frozen=True, eq=False)
class History:
    entries: np.ndarray
    tail_bound: float = 0.0

    def __post_init__(self):
        e = np.array(self.entries, dtype=float, copy=True)
        if e.ndim != 2:
            raise ConfigurationError(f"history entries must be 2-d (L, d), got shape {e.shape}")
        tail = float(self.tail_bound)
        if not np.isfinite(tail) or tail < 0:
            raise ConfigurationError(f"tail_bound must be finite and nonnegative, got {tail}")
        if not np.all(np.isfinite(e)):
            raise ConfigurationError("history entries must be finite")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)
        object.__setattr__(self, "tail_bound", tail)

    @classmethod
    def zero(cls, p: PhaseSpaceParams) -> "History":
        return cls(np.zeros(p.shape), 0.0)

    @property
    def head(self) -> np.ndarray:
        return self.entries[0]

    @property
    def trunc_len(self) -> int:
        return self.entries.shape[0]

    @property
    def state_dim(self) -> int:
        return self.entries.shape[1]

    # Linear structure.  Tails of sums add, which keeps norms honest upper bounds.
    def __add__(self, other: "History") -> "History":
        _same_shape(self, other)
        return History(self.entries + other.entries, self.tail_bound + other.tail_bound)

    def __sub__(self, other: "History") -> "History":
        _same_shape(self, other)
        return History(self.entries - other.entries, self.tail_bound + other.tail_bound)

    def __neg__(self) -> "History":
        return History(-self.entries, self.tail_bound)

    def __mul__(self, c: float) -> "History":
        return History(c * self.entries, abs(c) * self.tail_bound)

    __rmul__ = __mul__

    def is_zero(self) -> bool:
        return self.tail_bound == 0.0 and not np.any(self.entries)

    def __repr__(self):
        return f"History(L={self.trunc_len}, d={self.state_dim}, head={self.head}, tail_bound={self.tail_bound:.3g})"


def _same_shape(a: History, b: History):
    if a.entries.shape != b.entries.shape:
        raise ConfigurationError(f"history shapes differ: {a.entries.shape} vs {b.entries.shape}")


def check_history(h: History, p: PhaseSpaceParams):
    if h.entries.shape != p.shape:
        raise ConfigurationError(f"history shape {h.entries.shape} does not match phase space {p.shape}")


def check_vector(v, p: PhaseSpaceParams) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape != (p.state_dim,):
        raise ConfigurationError(f"vector of length {v.size} does not match state_dim={p.state_dim}")
    return v


def norm_beta(h: History, p: PhaseSpaceParams) -> float:
    """max(max_k |phi(-k)| e^{-beta k}, tail_bound) with the Euclidean norm on X."""
    check_history(h, p)
    return float(_kernels.weighted_sup(h.entries, h.tail_bound, p.beta))


def entries_distance(a: History, b: History, p: PhaseSpaceParams) -> float:
    """Weighted sup distance of the stored entries only.

    Compares two computations of the same history; tail bounds are
    certificates, not values, so they are left out.
    """
    check_history(a, p)
    check_history(b, p)
    return float(_kernels.weighted_sup(np.ascontiguousarray(a.entries - b.entries), 0.0, p.beta))


def shift_append(h: History, v, p: PhaseSpaceParams) -> History:
    """Segment x_{m+1} from x_m = h and the new value x(m+1) = v."""
    check_history(h, p)
    v = check_vector(v, p)
    entries, tail = _kernels.shift_append(np.ascontiguousarray(h.entries), h.tail_bound, v, p.beta)
    return History(entries, tail)


def gamma_embed(v, p: PhaseSpaceParams) -> History:
    """The impulse history: v at lag 0, zero in the past."""
    v = check_vector(v, p)
    e = np.zeros(p.shape)
    e[0] = v
    return History(e, 0.0)


def assumption_A_constants(p: PhaseSpaceParams, n: int):
    """(J, K(n), M(n)) for B^beta."""
    if n < 0:
        raise ConfigurationError("n must be nonnegative")
    M = float(np.exp(-p.beta * n))
    K = 1.0 if p.beta >= 0 else M
    return 1.0, K, M


class AxiomAReport(NamedTuple):
    left_slack: float
    right_slack: float
    holds: bool


def axiom_A_probe(x, phi0: History, p: PhaseSpaceParams, n: int, rtol: float = 1e-12) -> AxiomAReport:
    """Check ``J|x(n)| <= ||x_n|| <= K(n) sup_{0<=j<=n}|x(j)| + M(n)||x_0||``.

    ``x`` holds the rows x(0), ..., x(n); x(0) must agree with phi0(0).
    """
    check_history(phi0, p)
    x = np.asarray(x, dtype=float).reshape(-1, p.state_dim)
    if x.shape[0] < n + 1:
        raise ConfigurationError(f"need x(0..{n}), got {x.shape[0]} rows")
    if not np.allclose(x[0], phi0.head, rtol=0, atol=1e-12 * (1 + np.abs(phi0.head).max())):
        raise ConfigurationError("x(0) must equal phi0(0)")
    seg = phi0
    for j in range(1, n + 1):
        seg = shift_append(seg, x[j], p)
    J, K, M = assumption_A_constants(p, n)
    nrm = norm_beta(seg, p)
    left = nrm - J * float(np.linalg.norm(x[n]))
    bound = K * float(np.max(np.linalg.norm(x[: n + 1], axis=1))) + M * norm_beta(phi0, p)
    right = bound - nrm
    slack = rtol * max(1.0, bound)
    return AxiomAReport(left, right, left >= -slack and right >= -slack)


def random_history(
    rng: np.random.Generator,
    p: PhaseSpaceParams,
    scale: float = 1.0,
    support: Optional[int] = None,
    tail: float = 0.0,
) -> History:
    """Gaussian entries on lags < support (zero beyond), given tail bound."""
    support = p.trunc_len if support is None else max(1, min(support, p.trunc_len))
    e = np.zeros(p.shape)
    e[:support] = scale * rng.standard_normal((support, p.state_dim))
    return History(e, tail)


def unit_history(rng: np.random.Generator, p: PhaseSpaceParams, support: Optional[int] = None) -> History:
    h = random_history(rng, p, support=support)
    return h * (1.0 / norm_beta(h, p))
