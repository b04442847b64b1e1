"""Hot numeric kernels.

Each kernel exists twice: a loop version compiled with ``numba.njit`` and a
vectorized numpy version. ``UAVPLAN_NUMBA=0`` in the environment (or numba
being unavailable) selects the numpy path at import time. Both paths must
agree to floating-point round-off; ``benchmarks/bench_kernels.py`` times
them against each other.
"""

from __future__ import annotations

import itertools
import os

import numpy as np

try:  # pragma: no cover - depends on the environment
    import numba
except ImportError:  # pragma: no cover
    numba = None

USE_NUMBA = numba is not None and os.environ.get("UAVPLAN_NUMBA", "1").lower() not in (
    "0", "false", "no", "off")

__all__ = [
    "USE_NUMBA",
    "interference",
    "pathloss_matrix",
    "placement_grid_search",
    "power_grid_search",
    "NUMBA_KERNELS",
    "NUMPY_KERNELS",
]


def _njit(fn):
    if numba is None:  # pragma: no cover
        return fn
    return numba.njit(cache=True, fastmath=False)(fn)


# --------------------------------------------------------------------------
# inter-cell interference  Phi[n,k,l] = sum_{l'!=l} sum_{n'!=n} P[n',k,l'] g[n,k,l']


def _interference_loops(P, g):
    n_u, n_k, n_l = P.shape
    out = np.zeros((n_u, n_k, n_l))
    tot = np.zeros((n_k, n_l))
    for m in range(n_u):
        for k in range(n_k):
            for l in range(n_l):
                tot[k, l] += P[m, k, l]
    for n in range(n_u):
        for k in range(n_k):
            acc = 0.0
            for lp in range(n_l):
                acc += g[n, k, lp] * (tot[k, lp] - P[n, k, lp])
            for l in range(n_l):
                out[n, k, l] = acc - g[n, k, l] * (tot[k, l] - P[n, k, l])
    return out


def _interference_numpy(P, g):
    tot = P.sum(axis=0)
    q = g * (tot[None, :, :] - P)
    return q.sum(axis=2, keepdims=True) - q


# --------------------------------------------------------------------------
# path loss  PL = K_o [PLos xi_LoS + (1 - PLos) xi_NLoS]


def _pathloss_loops(users, uavs, b1, b2, xi_los, xi_nlos, fc, alpha, c):
    n_u = users.shape[0]
    n_l = uavs.shape[0]
    out = np.empty((n_u, n_l))
    k4 = 4.0 * np.pi * fc / c
    for n in range(n_u):
        for l in range(n_l):
            dx = users[n, 0] - uavs[l, 0]
            dy = users[n, 1] - uavs[l, 1]
            h = uavs[l, 2]
            d = np.sqrt(dx * dx + dy * dy + h * h)
            theta = (180.0 / np.pi) * np.arcsin(h / d)
            plos = 1.0 / (1.0 + b1 * np.exp(-b2 * (theta - b1)))
            out[n, l] = (k4 * d) ** alpha * (plos * xi_los + (1.0 - plos) * xi_nlos)
    return out


def _pathloss_numpy(users, uavs, b1, b2, xi_los, xi_nlos, fc, alpha, c):
    dxy = users[:, None, :] - uavs[None, :, :2]
    h = uavs[None, :, 2]
    d = np.sqrt(np.sum(dxy ** 2, axis=-1) + h ** 2)
    theta = np.degrees(np.arcsin(h / d))
    plos = 1.0 / (1.0 + b1 * np.exp(-b2 * (theta - b1)))
    return (4.0 * np.pi * fc * d / c) ** alpha * (plos * xi_los + (1.0 - plos) * xi_nlos)


# --------------------------------------------------------------------------
# brute-force placement: min sum ||V_n - W||^2 s.t. d_h,n <= cot * h on a grid


def _placement_grid_loops(users, xs, ys, hs, cot):
    best = np.inf
    bx = np.nan
    by = np.nan
    bh = np.nan
    q = users.shape[0]
    for ih in range(hs.shape[0]):
        h = hs[ih]
        r2 = (cot * h) ** 2
        for ix in range(xs.shape[0]):
            x = xs[ix]
            for iy in range(ys.shape[0]):
                y = ys[iy]
                obj = 0.0
                ok = True
                for n in range(q):
                    dx = users[n, 0] - x
                    dy = users[n, 1] - y
                    dh2 = dx * dx + dy * dy
                    if dh2 > r2:
                        ok = False
                        break
                    obj += dh2 + h * h
                if ok and obj < best:
                    best = obj
                    bx = x
                    by = y
                    bh = h
    return best, bx, by, bh


def _placement_grid_numpy(users, xs, ys, hs, cot):
    best = (np.inf, np.nan, np.nan, np.nan)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    dh2 = (users[:, 0, None, None] - gx[None]) ** 2 + (users[:, 1, None, None] - gy[None]) ** 2
    sum_dh2 = dh2.sum(axis=0)
    max_dh2 = dh2.max(axis=0)
    q = users.shape[0]
    for h in hs:
        feas = max_dh2 <= (cot * h) ** 2
        if not feas.any():
            continue
        obj = np.where(feas, sum_dh2 + q * h * h, np.inf)
        i = np.argmin(obj)
        if obj.flat[i] < best[0]:
            ix, iy = np.unravel_index(i, obj.shape)
            best = (float(obj.flat[i]), float(xs[ix]), float(ys[iy]), float(h))
    return best


# --------------------------------------------------------------------------
# brute-force single-UAV allocation: every subcarrier assignment x power grid


def _power_grid_loops(table, assign_list, qos, units):
    # table[k, n, j] = rate (bit/s) of user n on subcarrier k at power level j
    n_k = table.shape[0]
    n_u = table.shape[1]
    best = -1.0
    best_a = -1
    best_lv = np.zeros(n_k, dtype=np.int64)
    lv = np.zeros(n_k, dtype=np.int64)
    rates = np.zeros(n_u)
    for ia in range(assign_list.shape[0]):
        assign = assign_list[ia]
        for k in range(n_k):
            lv[k] = 0
        while True:
            for n in range(n_u):
                rates[n] = 0.0
            for k in range(n_k):
                if assign[k] >= 0:
                    rates[assign[k]] += table[k, assign[k], lv[k]]
            ok = True
            tot = 0.0
            for n in range(n_u):
                tot += rates[n]
                if rates[n] < qos[n]:
                    ok = False
            if ok and tot > best:
                best = tot
                best_a = ia
                for k in range(n_k):
                    best_lv[k] = lv[k]
            # odometer over active subcarriers with sum(levels) <= units
            used = 0
            for k in range(n_k):
                used += lv[k]
            pos = -1
            for k in range(n_k):
                if assign[k] >= 0:
                    pos = k
                    break
            if pos < 0:
                break
            advanced = False
            k = pos
            while k < n_k:
                if assign[k] >= 0:
                    if used < units:
                        lv[k] += 1
                        advanced = True
                        break
                    used -= lv[k]
                    lv[k] = 0
                k += 1
            if not advanced:
                break
    return best, best_a, best_lv


def _power_grid_numpy(table, assign_list, qos, units):
    n_k, n_u, _ = table.shape
    best = (-1.0, -1, np.zeros(n_k, dtype=np.int64))
    for ia, assign in enumerate(assign_list):
        active = [k for k in range(n_k) if assign[k] >= 0]
        if not active:
            if np.all(qos <= 0) and 0.0 > best[0]:
                best = (0.0, ia, np.zeros(n_k, dtype=np.int64))
            continue
        grids = np.meshgrid(*[np.arange(units + 1)] * len(active), indexing="ij")
        lv = np.stack([g.ravel() for g in grids], axis=1)
        lv = lv[lv.sum(axis=1) <= units]
        rates = np.zeros((lv.shape[0], n_u))
        for col, k in enumerate(active):
            rates[:, assign[k]] += table[k, assign[k], lv[:, col]]
        ok = np.all(rates >= qos[None, :], axis=1)
        if not ok.any():
            continue
        tot = np.where(ok, rates.sum(axis=1), -np.inf)
        i = int(np.argmax(tot))
        if tot[i] > best[0]:
            full = np.zeros(n_k, dtype=np.int64)
            full[active] = lv[i]
            best = (float(tot[i]), ia, full)
    return best


_interference_nb = _njit(_interference_loops)
_pathloss_nb = _njit(_pathloss_loops)
_placement_grid_nb = _njit(_placement_grid_loops)
_power_grid_nb = _njit(_power_grid_loops)

NUMBA_KERNELS = {
    "interference": _interference_nb,
    "pathloss_matrix": _pathloss_nb,
    "placement_grid_search": _placement_grid_nb,
    "power_grid_search": _power_grid_nb,
}
NUMPY_KERNELS = {
    "interference": _interference_numpy,
    "pathloss_matrix": _pathloss_numpy,
    "placement_grid_search": _placement_grid_numpy,
    "power_grid_search": _power_grid_numpy,
}
_ACTIVE = NUMBA_KERNELS if USE_NUMBA else NUMPY_KERNELS


def interference(P: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Aggregate inter-cell interference for every (user, subcarrier, UAV).

    ``P`` and ``g`` have shape (N, K, L); ``g[n, k, l]`` is the effective gain
    from UAV ``l`` to user ``n``.
    """
    P = np.ascontiguousarray(P, dtype=np.float64)
    g = np.ascontiguousarray(g, dtype=np.float64)
    return _ACTIVE["interference"](P, g)


def pathloss_matrix(users, uavs, b1, b2, xi_los, xi_nlos, fc, alpha, c) -> np.ndarray:
    users = np.ascontiguousarray(users, dtype=np.float64).reshape(-1, 2)
    uavs = np.ascontiguousarray(uavs, dtype=np.float64).reshape(-1, 3)
    return _ACTIVE["pathloss_matrix"](users, uavs, float(b1), float(b2), float(xi_los),
                                      float(xi_nlos), float(fc), float(alpha), float(c))


def placement_grid_search(users, xs, ys, hs, cot):
    """Exhaustive grid minimum of the cluster objective under the coverage
    cones. Returns ``(objective, x, y, h)``; objective is ``inf`` when no grid
    point is feasible."""
    users = np.ascontiguousarray(users, dtype=np.float64).reshape(-1, 2)
    args = [np.ascontiguousarray(a, dtype=np.float64) for a in (xs, ys, hs)]
    res = _ACTIVE["placement_grid_search"](users, *args, float(cot))
    return float(res[0]), float(res[1]), float(res[2]), float(res[3])


def all_assignments(n_users: int, n_sub: int) -> np.ndarray:
    """Every map subcarrier -> user or -1 (idle), shape ((N+1)^K, K)."""
    return np.array(list(itertools.product(range(-1, n_users), repeat=n_sub)),
                    dtype=np.int64).reshape(-1, n_sub)


def power_grid_search(table, assign_list, qos, units):
    """Exhaustive search over subcarrier maps and a power lattice.

    ``table[k, n, j]`` is the rate of user ``n`` on subcarrier ``k`` at power
    level ``j`` (``j`` lattice units); total units across subcarriers are at
    most ``units``. Returns ``(best_sum_rate, assignment_index, levels)``;
    ``best_sum_rate`` is -1 when no lattice point meets ``qos``.
    """
    table = np.ascontiguousarray(table, dtype=np.float64)
    assign_list = np.ascontiguousarray(assign_list, dtype=np.int64)
    qos = np.ascontiguousarray(qos, dtype=np.float64)
    best, ia, lv = _ACTIVE["power_grid_search"](table, assign_list, qos, int(units))
    return float(best), int(ia), np.asarray(lv)
