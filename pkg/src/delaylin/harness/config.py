"""Experiment configuration: one TOML file, unknown keys rejected."""

import copy
import os
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from ..delay_system import LinearTapSystem, Nonlinearity, SemilinearSystem, TimeRule
from ..dichotomy import CorruptedDichotomy, DichotomyData, TabulatedDichotomy, make_diagonal_dichotomy
from ..errors import ConfigurationError
from ..evolution import EvolutionFamily
from ..phase_space import PhaseSpaceParams

# section -> key -> default (None: required when the section applies)
SCHEMA: Dict[str, Dict[str, Any]] = {
    "phase": {
        "beta": None,
        "trunc_len": None,
        "state_dim": None,
        "allow_nonpositive_beta": False,
    },
    "system": {
        "kind": "diagonal",
        "stable": [],
        "unstable": [],
        "time_rule": "constant",
        "taps": None,
    },
    "nonlinearity": {
        "amplitude": 0.0,
        "amplitude_rule": "constant",
        "lags": [0],
        "weights": None,
        "direction": None,
        "shape": "tanh",
    },
    "dichotomy": {
        "kind": "diagonal",
        "corruption": "none",
        "projection": None,
        "projection_file": None,
        "time_rule": "constant",
        "D": None,
        "lambda": None,
    },
    "experiment": {
        "seed": 0,
        "samples": 200,
        "horizon": 40,
        "iterations": 0,
        "target_error": 1e-8,
        "certificate_horizon": 200,
        "base_times": [0],
        "generators": None,
        "steps": 30,
        "initial": None,
        "max_gap": 20,
        "decay_time": 0,
        "decay_n_max": 0,
        "sweep_param": "epsilon",
        "sweep_values": [],
    },
}

POSITIVE_EXPERIMENT_KEYS = ("target_error",)


@dataclass
class ExperimentConfig:
    raw: Dict[str, Dict[str, Any]]
    base_dir: str = "."

    def __getitem__(self, section: str) -> Dict[str, Any]:
        return self.raw[section]

    def echo(self) -> Dict[str, Dict[str, Any]]:
        return copy.deepcopy(self.raw)

    def replace(self, section: str, **values) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        for k, v in values.items():
            if k not in SCHEMA[section]:
                raise ConfigurationError(f"unknown key {section}.{k}")
            raw[section][k] = v
        return validate(raw, self.base_dir)


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"malformed config {path}: {exc}") from exc
    return validate(raw, os.path.dirname(os.path.abspath(path)))


def validate(raw: Dict[str, Any], base_dir: str = ".") -> ExperimentConfig:
    unknown = set(raw) - set(SCHEMA)
    if unknown:
        raise ConfigurationError(f"unknown config section(s): {sorted(unknown)}")
    out: Dict[str, Dict[str, Any]] = {}
    for section, keys in SCHEMA.items():
        given = raw.get(section, {})
        if not isinstance(given, dict):
            raise ConfigurationError(f"[{section}] must be a table")
        bad = set(given) - set(keys)
        if bad:
            raise ConfigurationError(f"unknown key(s) in [{section}]: {sorted(bad)}")
        merged = copy.deepcopy(keys)
        merged.update(copy.deepcopy(given))
        out[section] = merged
    for key in ("beta", "trunc_len", "state_dim"):
        if out["phase"][key] is None:
            raise ConfigurationError(f"missing required key phase.{key}")
    exp = out["experiment"]
    for key in POSITIVE_EXPERIMENT_KEYS:
        if not exp[key] > 0:
            raise ConfigurationError(f"experiment.{key} must be positive")
    for key in ("samples", "horizon", "certificate_horizon", "steps", "max_gap", "seed"):
        if int(exp[key]) != exp[key] or exp[key] < 0:
            raise ConfigurationError(f"experiment.{key} must be a nonnegative integer")
    if exp["certificate_horizon"] < 1:
        raise ConfigurationError("experiment.certificate_horizon must be positive")
    if exp["sweep_param"] not in ("epsilon", "beta", "horizon"):
        raise ConfigurationError("experiment.sweep_param must be one of epsilon, beta, horizon")
    if any(int(t) != t or t < 0 or t > exp["horizon"] for t in exp["base_times"]):
        raise ConfigurationError("experiment.base_times must be integers in [0, horizon]")
    return ExperimentConfig(out, base_dir)


@dataclass
class Setup:
    phase: PhaseSpaceParams
    system: SemilinearSystem
    dichotomy: Optional[DichotomyData]
    evolution: EvolutionFamily


def build_phase(cfg: ExperimentConfig) -> PhaseSpaceParams:
    ph = cfg["phase"]
    return PhaseSpaceParams(float(ph["beta"]), int(ph["state_dim"]), int(ph["trunc_len"]),
                            bool(ph["allow_nonpositive_beta"]))


def build_linear(cfg: ExperimentConfig, phase: PhaseSpaceParams) -> LinearTapSystem:
    s = cfg["system"]
    if s["kind"] == "diagonal":
        mults = list(s["stable"]) + list(s["unstable"])
        if len(mults) != phase.state_dim:
            raise ConfigurationError(
                f"system: {len(mults)} multipliers given for state_dim={phase.state_dim}"
            )
        return LinearTapSystem.diagonal(mults)
    if s["kind"] == "taps":
        if s["taps"] is None:
            raise ConfigurationError("system.taps is required for kind = 'taps'")
        return LinearTapSystem(np.asarray(s["taps"], dtype=float), s["time_rule"])
    raise ConfigurationError(f"unknown system.kind {s['kind']!r}")


def build_nonlinearity(cfg: ExperimentConfig, phase: PhaseSpaceParams) -> Nonlinearity:
    nl = cfg["nonlinearity"]
    d = phase.state_dim
    amp = nl["amplitude"]
    if isinstance(amp, list):
        amp = TimeRule(nl["amplitude_rule"], amp)
    elif nl["amplitude_rule"] != "constant":
        raise ConfigurationError("nonlinearity.amplitude must be a list for a non-constant rule")
    lags = list(nl["lags"])
    weights = nl["weights"] if nl["weights"] is not None else [[1.0] * d for _ in lags]
    direction = nl["direction"] if nl["direction"] is not None else [1.0] * d
    return Nonlinearity(amp, lags, weights, direction, nl["shape"])


def build_dichotomy(cfg: ExperimentConfig, phase: PhaseSpaceParams, linear: LinearTapSystem,
                    rng: Optional[np.random.Generator] = None) -> Optional[DichotomyData]:
    dc = cfg["dichotomy"]
    kind = dc["kind"]
    if kind == "none":
        return None
    if kind == "diagonal":
        s = cfg["system"]
        if s["kind"] != "diagonal":
            raise ConfigurationError("the diagonal dichotomy needs system.kind = 'diagonal'")
        d = make_diagonal_dichotomy(s["stable"], s["unstable"], phase)
        if dc["corruption"] != "none":
            return CorruptedDichotomy(d, dc["corruption"])
        return d
    if kind == "tabulated":
        if dc["D"] is None or dc["lambda"] is None:
            raise ConfigurationError("tabulated dichotomy needs declared D and lambda")
        if dc["projection_file"] is not None:
            path = dc["projection_file"]
            if not os.path.isabs(path):
                path = os.path.join(cfg.base_dir, path)
            try:
                P = np.load(path)
            except OSError as exc:
                raise ConfigurationError(f"cannot read projection file {path}: {exc}") from exc
        elif dc["projection"] is not None:
            P = np.asarray(dc["projection"], dtype=float)
        else:
            raise ConfigurationError("tabulated dichotomy needs projection or projection_file")
        return TabulatedDichotomy(P, dc["time_rule"], linear, phase, float(dc["D"]), float(dc["lambda"]))
    raise ConfigurationError(f"unknown dichotomy.kind {kind!r}")


def build(cfg: ExperimentConfig) -> Setup:
    phase = build_phase(cfg)
    linear = build_linear(cfg, phase)
    system = SemilinearSystem(linear, build_nonlinearity(cfg, phase), phase)
    dich = build_dichotomy(cfg, phase, linear)
    return Setup(phase, system, dich, EvolutionFamily(linear, phase))
