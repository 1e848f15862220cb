"""Flat TOML experiment configuration with field-level validation."""

import dataclasses
import hashlib
import json
import math
import sys
from dataclasses import dataclass, fields

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError

EXPERIMENTS = ("mean", "tradeoff", "ihp", "kalman")
SELECTORS = ("update_past", "no_update_past", "rho_known")
COMBINERS = ("mean_euclid", "mean_l2", "window_euclid", "window_l2")
DRIFTS = ("deterministic", "gaussian")
PARAM_MODES = ("known", "estimated")
BOUND_FAMILIES = ("lipschitz_lyapunov", "inverse_step_average", "uniform_average")
DN_MODES = ("full", "noise", "off")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "mean"
    # problem
    d: int = 2
    sigma_w_sq: float = 0.5
    sigma_e_sq: float = 0.5
    rho: float = 1.0
    drift: str = "deterministic"
    radius: float = 10.0
    # targets
    epsilon: float = 0.01
    ihp_t: float = 0.1
    ihp_r: float = 0.25
    ihp_iters: int = 50
    epsilon_grid: tuple = ()
    # tracking
    selector: str = "no_update_past"
    combiner: str = "window_euclid"
    window: int = 4
    k_initial: int = 50
    k_max: int = 1_000_000
    horizon: int = 100
    reps: int = 50
    seed: int = 0
    params: str = "estimated"
    bound: str = "inverse_step_average"
    # drift-estimate slack
    rho_c_t: float = 0.1
    dn_mode: str = "off"
    # parameter estimation
    param_c_t: float = 0.05
    n_probe: int = 8
    probe_radius: float = 2.0
    m_floor: float = 1e-3
    # evaluation
    mc_samples: int = 1000
    # Kalman baseline
    kalman_sigma_factor: float = 0.1
    kalman_noise_factor: float = 10.0

    def to_dict(self):
        out = dataclasses.asdict(self)
        out["epsilon_grid"] = list(self.epsilon_grid)
        return out

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_CHOICES = {
    "experiment": EXPERIMENTS, "selector": SELECTORS, "combiner": COMBINERS, "drift": DRIFTS,
    "params": PARAM_MODES, "bound": BOUND_FAMILIES, "dn_mode": DN_MODES,
}
_POSITIVE = ("d", "sigma_w_sq", "radius", "epsilon", "ihp_t", "ihp_r", "window", "k_initial", "k_max",
             "reps", "rho_c_t", "param_c_t", "n_probe", "probe_radius", "m_floor", "mc_samples",
             "ihp_iters", "kalman_sigma_factor", "kalman_noise_factor")
_NONNEG = ("sigma_e_sq", "rho", "horizon", "seed")


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    for name, allowed in _CHOICES.items():
        if getattr(cfg, name) not in allowed:
            raise ConfigError(f"must be one of {', '.join(allowed)}; got {getattr(cfg, name)!r}", field=name)
    for name in _POSITIVE:
        v = getattr(cfg, name)
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            raise ConfigError(f"must be a positive number, got {v!r}", field=name)
    for name in _NONNEG:
        v = getattr(cfg, name)
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
            raise ConfigError(f"must be a nonnegative number, got {v!r}", field=name)
    if cfg.ihp_r > 1:
        raise ConfigError("must lie in (0, 1]", field="ihp_r")
    if cfg.n_probe < 2:
        raise ConfigError("need at least two probe points", field="n_probe")
    if cfg.rho > 2 * cfg.radius:
        raise ConfigError("drift step exceeds the domain diameter", field="rho")
    if any(not (isinstance(e, (int, float)) and e > 0) for e in cfg.epsilon_grid):
        raise ConfigError("entries must be positive numbers", field="epsilon_grid")
    if cfg.bound == "uniform_average":
        raise ConfigError("the tracking loop runs inverse-step averaging; use inverse_step_average "
                          "or lipschitz_lyapunov", field="bound")
    return cfg


_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(name, value):
    typ = _TYPES[name]
    if typ in ("int", int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", field=name)
        return value
    if typ in ("float", float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", field=name)
        return float(value)
    if typ in ("str", str):
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", field=name)
        return value
    if typ in ("tuple", tuple):
        if not isinstance(value, list):
            raise ConfigError(f"expected an array, got {value!r}", field=name)
        return tuple(value)
    raise ConfigError(f"unsupported field type {typ}", field=name)


def config_from_mapping(data: dict, required=("experiment",)) -> ExperimentConfig:
    for key in required:
        if key not in data:
            raise ConfigError("required field is missing", field=key)
    kwargs = {}
    for key, value in data.items():
        if isinstance(value, dict):
            raise ConfigError("nested tables are not supported; use flat keys", field=key)
        if key not in _TYPES:
            raise ConfigError("unknown field", field=key)
        kwargs[key] = _coerce(key, value)
    return validate(ExperimentConfig(**kwargs))


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"could not parse {path}: {exc}") from None
    return config_from_mapping(data)
