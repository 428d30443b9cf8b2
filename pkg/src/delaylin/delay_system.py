"""Linear delay operators A_m (finite tap sums) and saturated nonlinearities f_m."""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, NamedTuple, Optional, Sequence, Union

import numpy as np

from . import _kernels
from .errors import ConfigurationError, ConsistencyError
from .phase_space import History, PhaseSpaceParams, norm_beta

TIME_RULES = ("constant", "periodic", "tabulated")


@dataclass(frozen=True, eq=False)
class TimeRule:
    """Values indexed by time m in Z^+.

    constant: values[0] for every m; periodic: values[m % period];
    tabulated: values[m] on the table range, then the last value held.
    """

    kind: str
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in TIME_RULES:
            raise ConfigurationError(f"unknown time rule {self.kind!r}; expected one of {TIME_RULES}")
        v = np.array(self.values, dtype=float)
        if v.ndim == 0:
            v = v[None]
        if v.shape[0] == 0:
            raise ConfigurationError("time rule needs at least one value")
        if self.kind == "constant" and v.shape[0] != 1:
            raise ConfigurationError("constant time rule takes exactly one value")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, value) -> "TimeRule":
        return cls("constant", np.asarray(value, dtype=float)[None])

    def __len__(self):
        return self.values.shape[0]

    def index(self, m: int) -> int:
        if m < 0:
            raise ConfigurationError(f"time must be nonnegative, got {m}")
        if self.kind == "constant":
            return 0
        if self.kind == "periodic":
            return m % len(self)
        return min(m, len(self) - 1)

    def at(self, m: int):
        return self.values[self.index(m)]

    def span(self, n: int, m: int) -> np.ndarray:
        """Stacked values for times n, ..., m-1."""
        idx = [self.index(k) for k in range(n, m)]
        return self.values[idx] if idx else self.values[:0]

    def map(self, fn) -> "TimeRule":
        return TimeRule(self.kind, np.array([fn(v) for v in self.values]))

    @property
    def period(self) -> int:
        return len(self) if self.kind == "periodic" else 1


class LinearTapSystem:
    """A_m phi = sum_{j=0}^{J} C_{m,j} phi(-j), with C_{m,j} given by a time rule."""

    def __init__(self, taps, time_rule: str = "constant"):
        taps = np.asarray(taps, dtype=float)
        if time_rule == "constant" and taps.ndim == 3:
            taps = taps[None]
        if taps.ndim != 4 or taps.shape[2] != taps.shape[3]:
            raise ConfigurationError(
                f"taps must have shape (times, J+1, d, d) (or (J+1, d, d) for constant), got {taps.shape}"
            )
        if not np.all(np.isfinite(taps)):
            raise ConfigurationError("tap matrices must be finite")
        self.rule = TimeRule(time_rule, taps)
        self.max_lag = taps.shape[1] - 1
        self.state_dim = taps.shape[2]

    @classmethod
    def diagonal(cls, multipliers: Sequence[float]) -> "LinearTapSystem":
        """Tapless system x(m+1) = diag(multipliers) x(m)."""
        return cls(np.diag(np.asarray(multipliers, dtype=float))[None, None], "constant")

    @property
    def time_rule(self) -> str:
        return self.rule.kind

    def taps_at(self, m: int) -> np.ndarray:
        return self.rule.at(m)

    def taps_span(self, n: int, m: int) -> np.ndarray:
        return np.ascontiguousarray(self.rule.span(n, m))

    def check(self, p: PhaseSpaceParams):
        if self.state_dim != p.state_dim:
            raise ConfigurationError(f"taps act on dimension {self.state_dim}, phase space has {p.state_dim}")
        if self.max_lag >= p.trunc_len:
            raise ConfigurationError(
                f"maximal lag {self.max_lag} must be below trunc_len={p.trunc_len}"
            )

    def operator_norm_bound(self, m: int, beta: float) -> float:
        """Bound on ||A_m|| as a map B^beta -> X: sum_j ||C_{m,j}||_2 e^{beta j}."""
        C = self.taps_at(m)
        return float(sum(np.linalg.norm(C[j], 2) * np.exp(beta * j) for j in range(C.shape[0])))

    def operator_norm_sup(self, beta: float) -> float:
        return max(self.operator_norm_bound(i, beta) for i in range(len(self.rule)))


SHAPES = {
    "tanh": _kernels.SHAPE_HALF_TANH,
    "clip": _kernels.SHAPE_CLIP,
    "sin": _kernels.SHAPE_HALF_SIN,
}


class Nonlinearity:
    """f_m(phi) = eps_m * shape(sum_k <w_k, phi(-d_k)>) * direction.

    Built-in shapes are 1-Lipschitz with values in [-1/2, 1/2]:
    ``tanh`` is s -> tanh(2s)/2, ``clip`` clips to [-1/2, 1/2], ``sin`` is
    s -> sin(2s)/2.  A user callable must satisfy the same two bounds; the
    Lipschitz certificate probes it.
    """

    def __init__(
        self,
        amplitude: Union[float, TimeRule],
        read_lags: Sequence[int],
        weights,
        direction,
        shape: Union[str, Callable[[float], float]] = "tanh",
    ):
        self.amplitude = amplitude if isinstance(amplitude, TimeRule) else TimeRule.constant(amplitude)
        if np.any(self.amplitude.values < 0):
            raise ConfigurationError("amplitudes must be nonnegative")
        self.read_lags = np.asarray(read_lags, dtype=np.int64).reshape(-1)
        if np.any(self.read_lags < 0):
            raise ConfigurationError("read lags must be nonnegative")
        w = np.asarray(weights, dtype=float)
        direction = np.asarray(direction, dtype=float).reshape(-1)
        if w.ndim == 1:
            w = w.reshape(len(self.read_lags), -1)
        if w.shape != (len(self.read_lags), direction.size):
            raise ConfigurationError(
                f"weights shape {w.shape} does not match {len(self.read_lags)} lags x dim {direction.size}"
            )
        nrm = np.linalg.norm(direction)
        if not nrm > 0:
            raise ConfigurationError("output direction must be nonzero")
        self.weights = np.ascontiguousarray(w)
        self.direction = direction / nrm
        if isinstance(shape, str):
            if shape not in SHAPES:
                raise ConfigurationError(f"unknown shape {shape!r}; built-ins: {sorted(SHAPES)}")
            self.shape_code = SHAPES[shape]
            self.shape_name = shape
            code = self.shape_code
            self.shape = lambda s: _kernels.shape_value(code, float(s))
        else:
            self.shape_code = _kernels.SHAPE_NONE
            self.shape_name = getattr(shape, "__name__", "custom")
            self.shape = shape
            if shape(0.0) != 0.0:
                raise ConfigurationError("shape(0) must be 0 so that f_m(0) = 0")

    @classmethod
    def zero(cls, state_dim: int) -> "Nonlinearity":
        e = np.zeros(state_dim)
        e[0] = 1.0
        return cls(0.0, [0], np.zeros((1, state_dim)), e)

    @property
    def state_dim(self) -> int:
        return self.direction.size

    @property
    def is_builtin(self) -> bool:
        return self.shape_code >= 0

    @property
    def is_zero(self) -> bool:
        return not np.any(self.amplitude.values) or not np.any(self.weights)

    def amplitudes(self, n: int, m: int) -> np.ndarray:
        return np.ascontiguousarray(self.amplitude.span(n, m), dtype=float)

    def read(self, h: History) -> float:
        return float(np.einsum("kd,kd->", self.weights, h.entries[self.read_lags]))

    def with_amplitude(self, amplitude: Union[float, TimeRule]) -> "Nonlinearity":
        shape = self.shape_name if self.is_builtin else self.shape
        return Nonlinearity(amplitude, self.read_lags, self.weights, self.direction, shape)

    def check(self, p: PhaseSpaceParams):
        if self.state_dim != p.state_dim:
            raise ConfigurationError(f"nonlinearity acts on dimension {self.state_dim}, phase space has {p.state_dim}")
        if self.read_lags.size and self.read_lags.max() >= p.trunc_len:
            raise ConfigurationError(f"read lag {self.read_lags.max()} must be below trunc_len={p.trunc_len}")

    def lipschitz_factor(self, beta: float) -> float:
        """max(1, sum_k |w_k| e^{beta d_k}).

        The floor 1 is what makes the saturated branch hold: the range of f_m
        has diameter eps_m, so |f(phi)-f(psi)| <= eps_m <= c_m when ||phi-psi|| >= 1.
        """
        s = float(np.sum(np.linalg.norm(self.weights, axis=1) * np.exp(beta * self.read_lags)))
        return max(1.0, s)

    def lipschitz_rule(self, beta: float) -> TimeRule:
        """The time rule of c_m = eps_m * lipschitz_factor(beta)."""
        fac = self.lipschitz_factor(beta)
        return self.amplitude.map(lambda e: e * fac)


class SemilinearSystem:
    """x(m+1) = A_m x_m + f_m(x_m)."""

    def __init__(self, linear: LinearTapSystem, nonlinear: Optional[Nonlinearity], phase: PhaseSpaceParams):
        if nonlinear is None:
            nonlinear = Nonlinearity.zero(phase.state_dim)
        linear.check(phase)
        nonlinear.check(phase)
        self.linear = linear
        self.nonlinear = nonlinear
        self.phase = phase

    @cached_property
    def c_rule(self) -> TimeRule:
        return self.nonlinear.lipschitz_rule(self.phase.beta)

    def c_at(self, m: int) -> float:
        return float(self.c_rule.at(m))

    @property
    def c_max(self) -> float:
        return float(self.c_rule.values.max())

    def with_nonlinearity(self, nonlinear: Nonlinearity) -> "SemilinearSystem":
        return SemilinearSystem(self.linear, nonlinear, self.phase)


def apply_linear(sys: LinearTapSystem, m: int, h: History) -> np.ndarray:
    if sys.max_lag >= h.trunc_len:
        raise ConfigurationError(f"lag {sys.max_lag} exceeds stored history length {h.trunc_len}")
    if sys.state_dim != h.state_dim:
        raise ConfigurationError("tap dimension does not match history")
    return _kernels.tap_read(np.ascontiguousarray(sys.taps_at(m)), np.ascontiguousarray(h.entries))


def apply_nonlinearity(nl: Nonlinearity, m: int, h: History) -> np.ndarray:
    if nl.read_lags.size and nl.read_lags.max() >= h.trunc_len:
        raise ConfigurationError(f"read lag {nl.read_lags.max()} exceeds stored history length {h.trunc_len}")
    eps = float(nl.amplitude.at(m))
    if eps == 0.0:
        return np.zeros(nl.state_dim)
    return eps * float(nl.shape(nl.read(h))) * nl.direction


class LipschitzCertificate(NamedTuple):
    constants: TimeRule
    max_ratio: float
    samples: int


def _probe_pair(rng, p: PhaseSpaceParams, far: bool):
    # weight entries by e^{beta k} so lagged reads see O(1) weighted values
    amp = np.exp(np.minimum(p.beta * np.arange(p.trunc_len), 30.0))[:, None]
    phi = History(rng.standard_normal(p.shape) * amp * rng.uniform(0.1, 3.0))
    direction = rng.standard_normal(p.shape) * amp
    delta = History(direction)
    delta = delta * (1.0 / norm_beta(delta, p))
    size = rng.uniform(1.0, 20.0) if far else 10.0 ** rng.uniform(-6, 0)
    return phi, phi + size * delta


def lipschitz_certificate(
    nl: Nonlinearity, p: PhaseSpaceParams, samples: int = 1000, rng: Optional[np.random.Generator] = None
) -> LipschitzCertificate:
    """c_m together with a Monte-Carlo check of |f(phi)-f(psi)| <= c_m min(1, ||phi-psi||)."""
    nl.check(p)
    rule = nl.lipschitz_rule(p.beta)
    if samples <= 0 or not np.any(rule.values):
        return LipschitzCertificate(rule, 0.0, 0)
    rng = np.random.default_rng(0) if rng is None else rng
    times = range(len(rule))
    worst = 0.0
    for i in range(samples):
        m = times[i % len(times)]
        c = float(rule.at(m))
        if c == 0.0:
            continue
        phi, psi = _probe_pair(rng, p, far=bool(i % 2))
        lhs = float(np.linalg.norm(apply_nonlinearity(nl, m, phi) - apply_nonlinearity(nl, m, psi)))
        rhs = c * min(1.0, norm_beta(phi - psi, p))
        ratio = lhs / rhs
        worst = max(worst, ratio)
        if ratio > 1.0 + 1e-9:
            raise ConsistencyError(
                f"Lipschitz probe violated at m={m}: |f(phi)-f(psi)| = {lhs:.6g} > c_m min(1, ||phi-psi||) = {rhs:.6g};"
                " the shape is not 1-Lipschitz or not bounded by 1/2"
            )
        # also the zero anchor, which exercises |f(phi)| <= c_m min(1, ||phi||)
        if i % 10 == 0:
            lhs0 = float(np.linalg.norm(apply_nonlinearity(nl, m, phi)))
            rhs0 = c * min(1.0, norm_beta(phi, p))
            if rhs0 > 0:
                worst = max(worst, lhs0 / rhs0)
                if lhs0 > rhs0 * (1.0 + 1e-9):
                    raise ConsistencyError(f"|f_m(phi)| = {lhs0:.6g} exceeds c_m min(1, ||phi||) = {rhs0:.6g}")
    return LipschitzCertificate(rule, worst, samples)
