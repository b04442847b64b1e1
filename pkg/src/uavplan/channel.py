"""Probabilistic air-to-ground channel, SINR and rates."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from . import _kernels
from .config import EnvironmentParams, SystemParams

__all__ = [
    "UavPosition",
    "LinkGain",
    "elevation_angle",
    "plos",
    "inverse_plos",
    "pathloss",
    "pathloss_matrix",
    "link_gain",
    "effective_gain",
    "gain_tensor",
    "interference",
    "sinr",
    "sinr_tensor",
    "user_rate",
    "rate_matrix",
    "ergodic_spectral_efficiency",
]


class UavPosition(NamedTuple):
    x: float
    y: float
    h: float


class LinkGain(NamedTuple):
    plos: float
    pathloss: float
    effective_gain: float


def elevation_angle(uav, user) -> float:
    """Elevation angle in degrees from a ground user to a UAV."""
    x, y, h = (float(v) for v in uav)
    dx, dy = x - float(user[0]), y - float(user[1])
    d = np.sqrt(dx * dx + dy * dy + h * h)
    if d == 0:
        raise ValueError("UAV and user coincide (zero 3D distance)")
    return float(np.degrees(np.arcsin(h / d)))


def plos(theta_deg, env: EnvironmentParams):
    """Logistic LoS probability at elevation ``theta_deg`` (degrees)."""
    theta = np.asarray(theta_deg, dtype=float)
    out = 1.0 / (1.0 + env.b1 * np.exp(-env.b2 * (theta - env.b1)))
    return float(out) if out.ndim == 0 else out


def inverse_plos(phi: float, env: EnvironmentParams) -> float:
    """Elevation angle (degrees) at which the LoS probability equals ``phi``."""
    if not 0.0 < phi < 1.0:
        raise ValueError(f"phi must lie in (0, 1), got {phi}")
    return env.b1 + np.log(phi * env.b1 / (1.0 - phi)) / env.b2


def _pl_args(env: EnvironmentParams, params: SystemParams):
    return (env.b1, env.b2, env.xi_los_lin, env.xi_nlos_lin, params.carrier_freq,
            params.pathloss_exp, params.speed_of_light)


def pathloss(uav, user, env: EnvironmentParams, params: SystemParams) -> float:
    """Average LoS/NLoS path loss (linear, >= 0) between one UAV and one user."""
    x, y, h = (float(v) for v in uav)
    d = np.sqrt((x - user[0]) ** 2 + (y - user[1]) ** 2 + h * h)
    if d == 0:
        raise ValueError("UAV and user coincide (zero 3D distance)")
    theta = np.degrees(np.arcsin(h / d))
    p = plos(theta, env)
    ko = (4 * np.pi * params.carrier_freq * d / params.speed_of_light) ** params.pathloss_exp
    return float(ko * (p * env.xi_los_lin + (1 - p) * env.xi_nlos_lin))


def pathloss_matrix(users, uavs, env: EnvironmentParams, params: SystemParams) -> np.ndarray:
    """Path loss for every (user, UAV) pair, shape (N, L)."""
    return _kernels.pathloss_matrix(users, uavs, *_pl_args(env, params))


def effective_gain(h_vec, pl: float, mode: str = "literal") -> float:
    """MRT effective gain: ``|h^H h|^2 / PL`` (literal) or ``||h||^2 / PL``."""
    if pl <= 0:
        raise ValueError("path loss must be positive")
    h_vec = np.atleast_1d(np.asarray(h_vec, dtype=complex))
    nrm2 = float(np.real(np.vdot(h_vec, h_vec)))
    return (nrm2 ** 2 if mode == "literal" else nrm2) / pl


def link_gain(uav, user, h_vec, env: EnvironmentParams, params: SystemParams) -> LinkGain:
    theta = elevation_angle(uav, user)
    pl = pathloss(uav, user, env, params)
    return LinkGain(plos(theta, env), pl, effective_gain(h_vec, pl, params.mrt_gain))


def gain_tensor(scenario, uavs) -> np.ndarray:
    """Effective gains ``g[n, k, l]`` for users of ``scenario`` and UAV
    positions ``uavs`` (L x 3). UAV ``l`` uses fading slot ``l``."""
    uavs = np.asarray(uavs, dtype=float).reshape(-1, 3)
    n_l = uavs.shape[0]
    if n_l > scenario.fading.shape[2]:
        raise ValueError(f"{n_l} UAVs exceed the {scenario.fading.shape[2]} fading slots")
    pl = pathloss_matrix(scenario.user_positions, uavs, scenario.environment, scenario.params)
    power = scenario.fading_power()[:, :, :n_l]
    return power / pl[:, None, :]


def interference(P, g) -> np.ndarray:
    """Inter-cell interference Phi (N, K, L) for power ``P`` and gains ``g``."""
    return _kernels.interference(P, g)


def sinr_tensor(P, g, noise: float) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    return P * g / (interference(P, g) + noise)


def sinr(n: int, k: int, l: int, P, A, gains, noise: float) -> float:
    """SINR of user ``n`` on subcarrier ``k`` served by UAV ``l``."""
    P = np.asarray(P, dtype=float)
    gains = np.asarray(gains, dtype=float)
    phi = 0.0
    n_u, _, n_l = P.shape
    for lp in range(n_l):
        if lp == l:
            continue
        for m in range(n_u):
            if m != n:
                phi += P[m, k, lp] * gains[n, k, lp]
    return float(P[n, k, l] * gains[n, k, l] / (phi + noise))


def rate_matrix(P, A, gains, params: SystemParams) -> np.ndarray:
    """Achievable rates R[n, l] in bit/s. Triples with ``A == 0`` contribute
    nothing."""
    P = np.asarray(P, dtype=float)
    A = np.asarray(A, dtype=float)
    snr = sinr_tensor(P, gains, params.noise_power)
    snr = np.where(A > 0, snr, 0.0)
    return params.subcarrier_bandwidth * np.log2(1.0 + snr).sum(axis=1)


def user_rate(n: int, l: int, P, A, gains, params: SystemParams) -> float:
    A = np.asarray(A, dtype=float)
    if not np.any(A[n, :, l] > 0):
        return 0.0
    total = 0.0
    for k in range(A.shape[1]):
        if A[n, k, l] > 0:
            total += np.log2(1.0 + sinr(n, k, l, P, A, gains, params.noise_power))
    return params.subcarrier_bandwidth * total


def ergodic_spectral_efficiency(params: SystemParams, env: EnvironmentParams,
                                n_draws: int | None = None, seed: int = 0,
                                p_tx: float | None = None) -> float:
    """Monte-Carlo average of ``log2(1 + P g / noise)`` with LoS-only path
    loss, the UAV at the area centre and altitude ``h_min``, users uniform
    over the area. Deterministic for a fixed ``seed``."""
    n_draws = params.n_draws if n_draws is None else int(n_draws)
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    p_tx = params.p_max if p_tx is None else p_tx
    rng = np.random.default_rng(seed)
    cx, cy = params.area_center
    # jittered stratification of the area: one uniform draw per cell, cells
    # visited in random order; unbiased for the uniform distribution
    side = max(1, int(np.sqrt(n_draws)))
    cells = rng.permutation(side * side)
    acc = 0.0
    done = 0
    chunk = 50_000
    while done < n_draws:
        m = min(chunk, n_draws - done)
        idx = np.arange(done, done + m)
        cell = np.where(idx < side * side, cells[idx % (side * side)], -1)
        u = rng.uniform(size=(m, 2))
        strat = cell >= 0
        fx = np.where(strat, (cell % side + u[:, 0]) / side, u[:, 0])
        fy = np.where(strat, (cell // side + u[:, 1]) / side, u[:, 1])
        x = params.x_min + fx * (params.x_max - params.x_min)
        y = params.y_min + fy * (params.y_max - params.y_min)
        h = (rng.standard_normal((m, params.n_antennas))
             + 1j * rng.standard_normal((m, params.n_antennas))) / np.sqrt(2.0)
        d = np.sqrt((x - cx) ** 2 + (y - cy) ** 2 + params.h_min ** 2)
        ko = (4 * np.pi * params.carrier_freq * d / params.speed_of_light) ** params.pathloss_exp
        nrm2 = np.sum(np.abs(h) ** 2, axis=1)
        arr = nrm2 ** 2 if params.mrt_gain == "literal" else nrm2
        g = arr / (ko * env.xi_los_lin)
        acc += np.sum(np.log2(1.0 + p_tx * g / params.capacity_noise))
        done += m
    return float(acc / n_draws)
