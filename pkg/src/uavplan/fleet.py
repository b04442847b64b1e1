"""Fleet sizing: per-UAV serving capacity and number of active UAVs."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .channel import ergodic_spectral_efficiency
from .config import ConfigError, EnvironmentParams, SystemParams

__all__ = ["FleetPlan", "compute_capacity", "compute_num_uavs", "compute_num_uavs_vtc",
           "plan_fleet"]


@dataclass(frozen=True)
class FleetPlan:
    lambda_eff: float
    r_max: float
    c_max: int
    L: int
    method: str = "proposed"


def compute_capacity(params: SystemParams, env: EnvironmentParams, seed: int = 0,
                     spectral_efficiency: float | None = None) -> tuple[float, float, int]:
    """Return ``(Lambda, R_max, C_max)``.

    ``spectral_efficiency`` bypasses the Monte-Carlo estimate (used by tests
    to probe the floor arithmetic directly).
    """
    lam = (ergodic_spectral_efficiency(params, env, seed=seed)
           if spectral_efficiency is None else float(spectral_efficiency))
    r_max = params.bandwidth_total * lam
    r0 = float(params.qos_vector().max())
    if r0 <= 0:
        raise ConfigError("qos_rate must be positive for capacity-based sizing")
    c_max = math.floor(r_max / r0)
    if c_max < 1:
        raise ConfigError(
            f"QoS rate {r0:.3g} bit/s exceeds per-UAV capacity {r_max:.3g} bit/s (C_max = 0)")
    return lam, r_max, c_max


def compute_num_uavs(params: SystemParams, c_max: int) -> int:
    """``ceil(lambda N / C_max)`` clamped to the inventory, if configured."""
    if c_max < 1:
        raise ValueError("c_max must be >= 1")
    L = max(1, math.ceil(params.serve_fraction * params.n_users / c_max - 1e-12))
    if params.max_uavs is not None:
        L = min(L, params.max_uavs)
    return L


def compute_num_uavs_vtc(params: SystemParams) -> int:
    """QoS-agnostic sizing: ``ceil(lambda N / K)``."""
    L = max(1, math.ceil(params.serve_fraction * params.n_users / params.n_subcarriers - 1e-12))
    if params.max_uavs is not None:
        L = min(L, params.max_uavs)
    return L


def plan_fleet(params: SystemParams, env: EnvironmentParams, seed: int = 0,
               method: str = "proposed") -> FleetPlan:
    """Size the fleet. A pinned ``c_max`` in the config overrides the
    Monte-Carlo capacity."""
    if params.c_max != "auto":
        lam = float("nan")
        r_max = float("nan")
        c_max = int(params.c_max)
        if c_max < 1:
            raise ConfigError("pinned c_max must be >= 1")
    else:
        lam, r_max, c_max = compute_capacity(params, env, seed)
    if method == "vtc_baseline":
        L = compute_num_uavs_vtc(params)
    else:
        L = compute_num_uavs(params, c_max)
    return FleetPlan(lam, r_max, c_max, L, method)
