"""System/environment parameters, config files and random scenarios."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import tomli
import tomli_w

__all__ = [
    "ConfigError",
    "EnvironmentParams",
    "SystemParams",
    "Scenario",
    "ENVIRONMENTS",
    "load_config",
    "save_config",
    "generate_scenario",
]

SPEED_OF_LIGHT = 299792458.0


class ConfigError(ValueError):
    """Invalid or unparsable configuration."""


@dataclass(frozen=True)
class EnvironmentParams:
    """LoS-probability constants and excess attenuation of one propagation
    environment.

    ``xi_scale`` tells whether ``xi_los``/``xi_nlos`` are linear multipliers
    or dB values; :attr:`xi_los_lin`/:attr:`xi_nlos_lin` always return the
    linear factor used by the path-loss model.
    """

    name: str
    b1: float
    b2: float
    xi_los: float
    xi_nlos: float
    xi_scale: str = "linear"

    def __post_init__(self):
        if self.b1 <= 0 or self.b2 <= 0:
            raise ConfigError(f"environment {self.name!r}: b1 and b2 must be positive")
        if self.xi_scale not in ("linear", "db"):
            raise ConfigError(f"xi_scale must be 'linear' or 'db', got {self.xi_scale!r}")
        if not (self.xi_nlos_lin >= self.xi_los_lin >= 1.0):
            raise ConfigError(
                f"environment {self.name!r}: need xi_nlos >= xi_los >= 1 (linear)")

    @property
    def xi_los_lin(self) -> float:
        return 10 ** (self.xi_los / 10) if self.xi_scale == "db" else self.xi_los

    @property
    def xi_nlos_lin(self) -> float:
        return 10 ** (self.xi_nlos / 10) if self.xi_scale == "db" else self.xi_nlos


ENVIRONMENTS = {
    "suburban": EnvironmentParams("suburban", 4.88, 0.43, 1.0, 21.0),
    "urban": EnvironmentParams("urban", 9.61, 0.16, 1.0, 20.0),
    "dense-urban": EnvironmentParams("dense-urban", 12.08, 0.11, 1.6, 23.0),
    "high-rise": EnvironmentParams("high-rise", 27.23, 0.08, 2.3, 34.0),
}

_CHOICES = {
    "bandwidth_mode": ("per_subcarrier_total_div_k", "literal_B"),
    "noise_mode": ("psd_times_bw", "literal_fc_sigma"),
    "mrt_gain": ("literal", "norm2"),
    "xi_mode": ("squared", "literal"),
    "init_altitude": ("mid", "max"),
}


@dataclass(frozen=True)
class SystemParams:
    """Every scalar knob of the planner. Defaults reproduce the desk-scale
    baseline configuration (20 MHz / 8 subcarriers / 900 MHz / 0.2 W)."""

    n_users: int = 20
    n_subcarriers: int = 8
    n_antennas: int = 13
    bandwidth_total: float = 20e6
    bandwidth_mode: str = "per_subcarrier_total_div_k"
    carrier_freq: float = 900e6
    pathloss_exp: float = 4.0
    speed_of_light: float = SPEED_OF_LIGHT
    noise_psd_dbm: float = -170.0
    noise_mode: str = "psd_times_bw"
    p_max: float = 0.2
    qos_rate: float | tuple[float, ...] = 1e6
    serve_fraction: float = 1.0
    los_threshold: float = 0.75
    x_min: float = 0.0
    x_max: float = 1000.0
    y_min: float = 0.0
    y_max: float = 1000.0
    h_min: float = 21.0
    h_max: float = 100.0
    min_separation: float = 50.0
    c_min: int | str = "auto"
    c_max: int | str = "auto"
    max_uavs: int | None = None
    penalty: float = 10.0
    tol_pathloss: float = 1e-3
    tol_rate: float = 1e-3
    solver_tol: float = 1e-6
    max_iter_alg1: int = 50
    max_iter_alg2: int = 30
    n_draws: int = 10_000
    mrt_gain: str = "literal"
    xi_mode: str = "squared"
    init_altitude: str = "mid"
    phi_floor: float = 0.55
    phi_step: float = 0.05
    meanshift_bandwidth: float | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if isinstance(self.qos_rate, list):
            object.__setattr__(self, "qos_rate", tuple(float(r) for r in self.qos_rate))
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ConfigError("area bounds inverted (need x_min < x_max, y_min < y_max)")
        if not (0 < self.h_min < self.h_max):
            if self.h_min >= self.h_max:
                raise ConfigError("altitude bounds inverted (h_min must be < h_max)")
            raise ConfigError("h_min must be positive")
        if not (0 < self.serve_fraction <= 1):
            raise ConfigError("serve_fraction must lie in (0, 1]")
        if not (0 < self.los_threshold < 1):
            raise ConfigError("los_threshold must lie in (0, 1)")
        if self.n_subcarriers < 1:
            raise ConfigError("n_subcarriers must be >= 1")
        if self.n_users < 1:
            raise ConfigError("n_users must be >= 1")
        if self.n_antennas < 1:
            raise ConfigError("n_antennas must be >= 1")
        if self.p_max <= 0:
            raise ConfigError("p_max must be positive")
        if self.penalty < 0:
            raise ConfigError("penalty must be nonnegative")
        for key, allowed in _CHOICES.items():
            if getattr(self, key) not in allowed:
                raise ConfigError(f"{key} must be one of {allowed}, got {getattr(self, key)!r}")
        for key in ("c_min", "c_max"):
            v = getattr(self, key)
            if not (v == "auto" or (isinstance(v, int) and v >= 0)):
                raise ConfigError(f"{key} must be a nonnegative integer or 'auto'")
        if isinstance(self.qos_rate, tuple):
            if len(self.qos_rate) != self.n_users:
                raise ConfigError("qos_rate list length must equal n_users")
            if min(self.qos_rate) < 0:
                raise ConfigError("qos_rate must be nonnegative")
        elif self.qos_rate < 0:
            raise ConfigError("qos_rate must be nonnegative")
        if self.max_uavs is not None and self.max_uavs < 1:
            raise ConfigError("max_uavs must be >= 1")
        if self.n_draws < 1:
            raise ConfigError("n_draws must be >= 1")

    # --- derived quantities -------------------------------------------------

    @property
    def subcarrier_bandwidth(self) -> float:
        if self.bandwidth_mode == "literal_B":
            return self.bandwidth_total
        return self.bandwidth_total / self.n_subcarriers

    @property
    def noise_psd_w(self) -> float:
        return 10 ** (self.noise_psd_dbm / 10) / 1e3

    @property
    def noise_power(self) -> float:
        """Per-subcarrier noise power sigma^2 in W."""
        return self.noise_psd_w * self.subcarrier_bandwidth

    @property
    def capacity_noise(self) -> float:
        """Noise term in the ergodic-capacity estimate used for fleet sizing."""
        if self.noise_mode == "literal_fc_sigma":
            return self.carrier_freq * self.noise_psd_w
        return self.noise_power

    @property
    def c_min_value(self) -> int:
        return 1 if self.c_min == "auto" else int(self.c_min)

    def qos_vector(self) -> np.ndarray:
        if isinstance(self.qos_rate, tuple):
            return np.asarray(self.qos_rate, dtype=float)
        return np.full(self.n_users, float(self.qos_rate))

    @property
    def area_center(self) -> tuple[float, float]:
        return 0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max)

    def replace(self, **changes) -> "SystemParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out


_PARAM_FIELDS = {f.name: f for f in dataclasses.fields(SystemParams)}
_INT_FIELDS = {"n_users", "n_subcarriers", "n_antennas", "max_iter_alg1",
               "max_iter_alg2", "n_draws", "rng_seed", "max_uavs"}


def _coerce(key: str, value: Any) -> Any:
    if key in _INT_FIELDS:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return int(value)
    if key in ("c_min", "c_max"):
        return value if value == "auto" else int(value)
    if key == "qos_rate":
        return tuple(float(v) for v in value) if isinstance(value, list) else float(value)
    default = _PARAM_FIELDS[key].default
    if isinstance(default, float) or key == "meanshift_bandwidth":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    return value


def params_from_mapping(data: dict[str, Any]) -> tuple[SystemParams, EnvironmentParams]:
    """Build validated parameter bundles from a parsed config mapping."""
    data = dict(data)
    env_tables = data.pop("environments", {}) or {}
    env_name = data.pop("environment", "urban")
    xi_scale = data.pop("xi_scale", "linear")
    kwargs = {}
    for key, value in data.items():
        if key not in _PARAM_FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        kwargs[key] = _coerce(key, value)
    params = SystemParams(**kwargs)

    if env_name in env_tables:
        tbl = env_tables[env_name]
        unknown = set(tbl) - {"b1", "b2", "xi_los", "xi_nlos"}
        if unknown:
            raise ConfigError(f"environments.{env_name}: unknown keys {sorted(unknown)}")
        base = ENVIRONMENTS.get(env_name)
        vals = {k: float(tbl.get(k, getattr(base, k) if base else math.nan))
                for k in ("b1", "b2", "xi_los", "xi_nlos")}
        if any(math.isnan(v) for v in vals.values()):
            raise ConfigError(f"environments.{env_name}: b1, b2, xi_los, xi_nlos required")
        env = EnvironmentParams(env_name, xi_scale=xi_scale, **vals)
    elif env_name in ENVIRONMENTS:
        env = dataclasses.replace(ENVIRONMENTS[env_name], xi_scale=xi_scale)
    else:
        raise ConfigError(f"unknown environment {env_name!r}")
    return params, env


def load_config(path: str | Path) -> tuple[SystemParams, EnvironmentParams]:
    """Parse a TOML config file into ``(SystemParams, EnvironmentParams)``.

    Missing keys take the :class:`SystemParams` defaults. The environment is
    selected with ``environment = "<name>"``; a table ``[environments.<name>]``
    overrides the built-in constants for that environment.
    """
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomli.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    try:
        return params_from_mapping(data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def save_config(path: str | Path, params: SystemParams, env: EnvironmentParams) -> None:
    data = params.to_dict()
    data["environment"] = env.name
    data["xi_scale"] = env.xi_scale
    data["environments"] = {env.name: {"b1": env.b1, "b2": env.b2,
                                       "xi_los": env.xi_los, "xi_nlos": env.xi_nlos}}
    Path(path).write_text(tomli_w.dumps(data))


@dataclass(frozen=True, eq=False)
class Scenario:
    """User positions plus the small-scale fading tensor of one random draw.

    ``fading[n, k, m, :]`` is the U-antenna channel from UAV slot ``m`` to
    user ``n`` on subcarrier ``k``. UAV slots are indexed by position in a
    deployment, so the tensor carries one slot per potential UAV
    (``max_uavs`` or ``n_users``, since every active UAV serves somebody).
    """

    user_positions: np.ndarray
    fading: np.ndarray
    environment: EnvironmentParams
    params: SystemParams
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n_users(self) -> int:
        return self.user_positions.shape[0]

    def fading_power(self, mrt_gain: str | None = None) -> np.ndarray:
        """Array-gain term |h^H h|^2 (literal) or ||h||^2, shape (N, K, M)."""
        mode = mrt_gain or self.params.mrt_gain
        nrm2 = np.sum(np.abs(self.fading) ** 2, axis=-1)
        return nrm2 ** 2 if mode == "literal" else nrm2

    def with_environment(self, env: EnvironmentParams) -> "Scenario":
        return dataclasses.replace(self, environment=env)

    def with_params(self, params: SystemParams) -> "Scenario":
        return dataclasses.replace(self, params=params)

    def snapshot(self) -> dict:
        return {
            "seed": self.seed,
            "environment": self.environment.name,
            "user_positions": self.user_positions.tolist(),
            "fading_dims": list(self.fading.shape),
        }

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.snapshot(), indent=2))


def generate_scenario(params: SystemParams, env: EnvironmentParams,
                      seed: int | None = None,
                      positions: Sequence[Sequence[float]] | None = None) -> Scenario:
    """Draw a scenario: users i.i.d. uniform over the area, fading i.i.d.
    CN(0, 1) per antenna entry. Bit-identical for identical ``seed``."""
    seed = params.rng_seed if seed is None else int(seed)
    rng = np.random.default_rng(seed)
    n = params.n_users
    if positions is None:
        xs = rng.uniform(params.x_min, params.x_max, n)
        ys = rng.uniform(params.y_min, params.y_max, n)
        pos = np.column_stack([xs, ys])
    else:
        pos = np.asarray(positions, dtype=float).reshape(-1, 2)
        if pos.shape[0] != n:
            raise ConfigError("positions length must equal n_users")
    m = params.max_uavs or n
    shape = (n, params.n_subcarriers, m, params.n_antennas)
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    fading = (re + 1j * im) / np.sqrt(2.0)
    pos.setflags(write=False)
    fading.setflags(write=False)
    return Scenario(pos, fading, env, params, seed)
