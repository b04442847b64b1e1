"""Brute-force reference solvers for small instances.

They share no code with the optimizers they check: placement is a grid scan,
association is full enumeration, and single-UAV allocation enumerates every
subcarrier map against a power lattice.
"""

from __future__ import annotations

import itertools

import numpy as np

from . import _kernels
from .channel import gain_tensor
from .config import ENVIRONMENTS, EnvironmentParams, Scenario, SystemParams, generate_scenario
from .deployment import DeploymentPlan, average_pathloss

__all__ = [
    "grid_placement",
    "enumerate_assignment",
    "power_grid_oracle",
    "small_instance",
]


def grid_placement(cluster, params: SystemParams, slope: float, step: float = 1.0, pad=None,
                   altitude: str = "exact"):
    """Minimum of ``sum ||V_n - W||^2`` over a lattice with spacing ``step``.

    The x/y scan covers the cluster's bounding box (plus ``pad``, default the
    cone radius at ``h_max``) clipped to the area. With ``altitude="exact"``
    each (x, y) takes the lowest altitude whose cone holds every user,
    ``max(h_min, r_max / slope)``, which is optimal there since the objective
    grows with ``h``. ``altitude="lattice"`` also steps ``h`` from ``h_min``
    to ``h_max``. Returns ``(objective, (x, y, h))``.
    """
    users = np.asarray(cluster, dtype=float).reshape(-1, 2)
    pad = slope * params.h_max if pad is None else pad
    lo = np.maximum(users.min(axis=0) - pad, [params.x_min, params.y_min])
    hi = np.minimum(users.max(axis=0) + pad, [params.x_max, params.y_max])
    xs = np.arange(np.floor(lo[0]), hi[0] + step, step)
    ys = np.arange(np.floor(lo[1]), hi[1] + step, step)
    if altitude == "lattice":
        hs = np.arange(params.h_min, params.h_max + 1e-9, step)
        obj, x, y, h = _kernels.placement_grid_search(users, xs, ys, hs, slope)
        return obj, (x, y, h)
    if altitude != "exact":
        raise ValueError(f"unknown altitude mode {altitude!r}")
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    dh2 = (users[:, 0, None, None] - gx) ** 2 + (users[:, 1, None, None] - gy) ** 2
    h = np.maximum(params.h_min, np.sqrt(dh2.max(axis=0)) / slope)
    obj = np.where(h <= params.h_max, dh2.sum(axis=0) + len(users) * h * h, np.inf)
    i = np.unravel_index(np.argmin(obj), obj.shape)
    if not np.isfinite(obj[i]):
        return np.inf, (np.nan, np.nan, np.nan)
    return float(obj[i]), (float(gx[i]), float(gy[i]), float(h[i]))


def enumerate_assignment(cost, allowed, cap_lo, cap_hi, min_total):
    """Cheapest association by enumerating every user -> UAV-or-nobody map.

    Returns ``(cost, J)`` or ``(inf, None)`` when nothing is feasible.
    """
    cost = np.asarray(cost, float)
    n_u, n_l = cost.shape
    allowed = np.asarray(allowed, bool)
    lo = np.broadcast_to(cap_lo, (n_l,))
    hi = np.broadcast_to(cap_hi, (n_l,))
    best, best_J = np.inf, None
    choices = [[-1] + [l for l in range(n_l) if allowed[n, l]] for n in range(n_u)]
    for pick in itertools.product(*choices):
        pick = np.asarray(pick)
        served = pick >= 0
        if served.sum() < min_total:
            continue
        cnt = np.bincount(pick[served], minlength=n_l)
        if np.any(cnt < lo) or np.any(cnt > hi):
            continue
        c = float(cost[np.flatnonzero(served), pick[served]].sum())
        if c < best - 1e-12:
            best = c
            best_J = np.zeros((n_u, n_l), dtype=np.int64)
            best_J[np.flatnonzero(served), pick[served]] = 1
    return best, best_J


def power_grid_oracle(scenario: Scenario, plan: DeploymentPlan, step_w: float = 1e-3):
    """Exhaustive single-UAV allocation: every subcarrier map, powers on a
    ``step_w`` lattice with total at most ``P_max``.

    Returns ``(sum_rate, A, P)``; ``sum_rate`` is -1 if no lattice point
    meets QoS.
    """
    params = scenario.params
    if plan.L != 1:
        raise ValueError("the power-grid oracle handles a single UAV")
    users = np.flatnonzero(plan.J[:, 0])
    g = gain_tensor(scenario, plan.uavs)[users, :, 0]          # (Q, K)
    units = int(round(params.p_max / step_w))
    levels = np.arange(units + 1) * step_w
    snr = g.T[:, :, None] * levels[None, None, :] / params.noise_power
    table = params.subcarrier_bandwidth * np.log2(1.0 + snr)  # (K, Q, units + 1)
    assign = _kernels.all_assignments(users.size, params.n_subcarriers)
    qos = params.qos_vector()[users]
    best, ia, lv = _kernels.power_grid_search(table, assign, qos, units)
    N, K = plan.J.shape[0], params.n_subcarriers
    A = np.zeros((N, K, 1))
    P = np.zeros((N, K, 1))
    if ia >= 0:
        for k, q in enumerate(assign[ia]):
            if q >= 0:
                A[users[q], k, 0] = 1.0
                P[users[q], k, 0] = lv[k] * step_w
    return best, A, P


def small_instance(n_users: int, n_sub: int, n_uav: int = 1, seed: int = 0,
                   env: EnvironmentParams | None = None, radius: float = 120.0,
                   altitude: float = 60.0, **overrides):
    """A compact scenario with hand-placed UAVs and nearest-UAV association.

    Users are drawn within ``radius`` of ``n_uav`` hub points spread across
    the area; UAV ``l`` hovers at ``altitude`` above its users' centroid.
    """
    env = env or ENVIRONMENTS["urban"]
    rng = np.random.default_rng(seed)
    params = SystemParams(n_users=n_users, n_subcarriers=n_sub, max_uavs=n_uav, **overrides)
    cx, cy = params.area_center
    hubs = np.array([[cx + 300.0 * np.cos(2 * np.pi * l / n_uav), cy + 300.0 * np.sin(
        2 * np.pi * l / n_uav)] for l in range(n_uav)]) if n_uav > 1 else np.array([[cx, cy]])
    owner = np.arange(n_users) % n_uav
    r = radius * np.sqrt(rng.uniform(size=n_users))
    t = rng.uniform(0, 2 * np.pi, n_users)
    pos = hubs[owner] + np.column_stack([r * np.cos(t), r * np.sin(t)])
    scenario = generate_scenario(params, env, seed, positions=pos)
    uavs = np.array([[*pos[owner == l].mean(axis=0), altitude] for l in range(n_uav)])
    J = np.zeros((n_users, n_uav), dtype=np.int64)
    J[np.arange(n_users), owner] = 1
    plan = DeploymentPlan(uavs, J, average_pathloss(scenario, uavs, J), [], params.los_threshold)
    return scenario, plan
