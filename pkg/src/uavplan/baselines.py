"""Reference schemes that each replace one stage of the planning pipeline.

Placement baselines (kmeans, kmedoid, meanshift, random_deployment) fix the
2D positions by clustering, lift each UAV to the lowest altitude whose
coverage cone holds its cluster and then associate users by the same
capacitated min-cost assignment as the proposed scheme, without the cone
mask. ``random_association`` keeps the proposed positions and draws a random
feasible association. The allocation baselines keep the proposed deployment.
"""

from __future__ import annotations

import numpy as np

from .allocation import RadioAllocation, optimize_power
from .channel import gain_tensor, interference, rate_matrix
from .config import Scenario
from .deployment import (DeploymentPlan, average_pathloss, build_association_problem,
                         cone_slope)
from .solvers import AssignmentInfeasible, AssignmentProblem, solve_assignment

__all__ = [
    "BASELINE_TAGS",
    "PLACEMENT_TAGS",
    "ALLOCATION_TAGS",
    "kmeans_placement",
    "kmedoid_placement",
    "meanshift_placement",
    "random_deployment",
    "cluster_altitude",
    "baseline_plan",
    "random_association",
    "equal_power",
    "random_power",
    "random_subcarrier",
]

PLACEMENT_TAGS = ("kmeans", "kmedoid", "meanshift", "random_deployment")
ALLOCATION_TAGS = ("equal_power", "random_power", "random_subcarrier")
BASELINE_TAGS = PLACEMENT_TAGS + ("random_association",) + ALLOCATION_TAGS + ("vtc_sizing",)


def _sq_dist(a, b):
    return ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)


def _lloyd(pts, L, rng, max_iter=100, tol=1e-6):
    """Lloyd iterations from ``L`` distinct random points. Returns
    (centers, labels)."""
    centers = pts[rng.choice(pts.shape[0], L, replace=False)].copy()
    for _ in range(max_iter):
        labels = np.argmin(_sq_dist(pts, centers), axis=1)
        new = centers.copy()
        for l in range(L):
            members = pts[labels == l]
            if members.size:
                new[l] = members.mean(axis=0)
            else:
                # empty cluster: restart at the user worst served right now
                far = int(np.argmax(np.min(_sq_dist(pts, new), axis=1)))
                new[l] = pts[far]
        shift = float(np.max(np.linalg.norm(new - centers, axis=1)))
        centers = new
        if shift <= tol:
            break
    return centers, np.argmin(_sq_dist(pts, centers), axis=1)


def kmeans_placement(scenario: Scenario, L: int, seed: int = 0):
    """2D k-means centroids, shape (L, 2), and user labels."""
    pts = scenario.user_positions
    if L > pts.shape[0]:
        raise ValueError("need L <= N")
    return _lloyd(pts, L, np.random.default_rng(seed))


def kmedoid_placement(scenario: Scenario, L: int, seed: int = 0, max_iter: int = 100):
    """PAM swap descent on Euclidean distances; medoids are users."""
    pts = scenario.user_positions
    n = pts.shape[0]
    if L > n:
        raise ValueError("need L <= N")
    D = np.sqrt(_sq_dist(pts, pts))
    rng = np.random.default_rng(seed)
    med = list(rng.choice(n, L, replace=False))
    cost = D[:, med].min(axis=1).sum()
    for _ in range(max_iter):
        improved = False
        for j in range(L):
            others = med[:j] + med[j + 1:]
            base = D[:, others].min(axis=1) if others else np.full(n, np.inf)
            # cost of swapping medoid j for every candidate at once
            cand = np.minimum(base[:, None], D).sum(axis=0)
            cand[med] = np.inf
            o = int(np.argmin(cand))
            if cand[o] < cost - 1e-9:
                med[j] = o
                cost = cand[o]
                improved = True
        if not improved:
            break
    med = np.asarray(med)
    return pts[med].copy(), np.argmin(D[:, med], axis=1)


def meanshift_placement(scenario: Scenario, L: int, bandwidth: float | None = None,
                        seed: int = 0, max_iter: int = 300):
    """Flat-kernel mean shift. Modes closer than ``bandwidth / 2`` merge; the
    ``L`` most populated modes are kept, and missing ones come from splitting
    the most populated cluster in two."""
    params = scenario.params
    bw = bandwidth or params.meanshift_bandwidth or (params.x_max - params.x_min) / 4.0
    if bw <= 0:
        raise ValueError("bandwidth must be positive")
    pts = scenario.user_positions
    modes = pts.copy()
    for _ in range(max_iter):
        inside = _sq_dist(modes, pts) <= bw * bw
        new = (inside @ pts) / inside.sum(axis=1, keepdims=True)
        done = np.max(np.linalg.norm(new - modes, axis=1)) < 1e-3 * bw
        modes = new
        if done:
            break
    centers, count = [], []
    owner = np.empty(pts.shape[0], dtype=int)
    for i, m in enumerate(modes):
        for c, cen in enumerate(centers):
            if np.linalg.norm(m - cen) <= bw / 2.0:
                owner[i] = c
                count[c] += 1
                break
        else:
            owner[i] = len(centers)
            centers.append(m)
            count.append(1)
    centers = np.asarray(centers)
    keep = np.argsort(-np.asarray(count), kind="stable")[:L]
    centers = centers[keep]
    labels = np.argmin(_sq_dist(pts, centers), axis=1)
    rng = np.random.default_rng(seed)
    while centers.shape[0] < L:
        sizes = np.bincount(labels, minlength=centers.shape[0])
        big = int(np.argmax(sizes))
        members = pts[labels == big]
        if members.shape[0] < 2:
            break
        halves, _ = _lloyd(members, 2, rng)
        centers = np.vstack([np.delete(centers, big, axis=0), halves])
        labels = np.argmin(_sq_dist(pts, centers), axis=1)
    return centers, labels


def random_deployment(scenario: Scenario, L: int, seed: int = 0):
    """UAVs uniform over the area and altitude range, shape (L, 3)."""
    p = scenario.params
    rng = np.random.default_rng(seed)
    return np.column_stack([rng.uniform(p.x_min, p.x_max, L), rng.uniform(p.y_min, p.y_max, L),
                            rng.uniform(p.h_min, p.h_max, L)])


def cluster_altitude(centers, labels, scenario: Scenario, phi: float | None = None):
    """Lowest altitude whose cone at ``phi`` covers each cluster, clamped to
    the altitude range. Returns (L, 3) positions."""
    p = scenario.params
    phi = p.los_threshold if phi is None else phi
    slope = cone_slope(phi, scenario.environment, p.xi_mode)
    pts = scenario.user_positions
    out = np.empty((centers.shape[0], 3))
    for l, c in enumerate(centers):
        members = pts[labels == l]
        r = float(np.max(np.linalg.norm(members - c, axis=1))) if members.size else 0.0
        h = r / slope if slope > 0 else p.h_max
        out[l] = [c[0], c[1], min(max(h, p.h_min), p.h_max)]
    return out


def baseline_plan(scenario: Scenario, uavs, c_max: int | None = None, tag: str = "") -> DeploymentPlan:
    """Capacitated min-cost association at fixed positions, no cone mask."""
    p = scenario.params
    uavs = np.asarray(uavs, dtype=float).reshape(-1, 3)
    prob = build_association_problem(scenario, uavs, p.los_threshold, c_max, mask=False)
    J = solve_assignment(prob)
    pl = average_pathloss(scenario, uavs, J)
    return DeploymentPlan(uavs, J, pl, [pl], p.los_threshold, iterations=0, converged=True,
                          initial_L=uavs.shape[0], stop_reason=tag or "baseline")


def placement_baseline(tag: str, scenario: Scenario, L: int, seed: int = 0,
                       c_max: int | None = None) -> DeploymentPlan:
    if tag == "kmeans":
        centers, labels = kmeans_placement(scenario, L, seed)
    elif tag == "kmedoid":
        centers, labels = kmedoid_placement(scenario, L, seed)
    elif tag == "meanshift":
        centers, labels = meanshift_placement(scenario, L, seed=seed)
    elif tag == "random_deployment":
        return baseline_plan(scenario, random_deployment(scenario, L, seed), c_max, tag)
    else:
        raise ValueError(f"unknown placement baseline {tag!r}")
    return baseline_plan(scenario, cluster_altitude(centers, labels, scenario), c_max, tag)


def random_association(scenario: Scenario, plan: DeploymentPlan, seed: int = 0,
                       c_max: int | None = None) -> DeploymentPlan:
    """Random association respecting the cone mask, capacities and the
    served minimum: the assignment solver run on random costs."""
    rng = np.random.default_rng(seed)
    prob = build_association_problem(scenario, plan.uavs, plan.phi, c_max)
    rand = AssignmentProblem(rng.uniform(size=prob.cost.shape), prob.allowed, prob.cap_lo,
                             prob.cap_hi, prob.min_total)
    try:
        J = solve_assignment(rand)
    except AssignmentInfeasible:
        J = plan.J.copy()
    pl = average_pathloss(scenario, plan.uavs, J)
    return DeploymentPlan(plan.uavs.copy(), J, pl, [pl], plan.phi, iterations=0, converged=True,
                          initial_L=plan.L, stop_reason="random_association")


def _eta_from(P, A, plan, scenario, gains):
    R = rate_matrix(P, A, gains, scenario.params)
    return np.where(plan.J > 0, R, 0.0)


def _alloc(A, P, plan, scenario, gains, tag):
    g = gain_tensor(scenario, plan.uavs) if gains is None else gains
    S = np.log(interference(P, g) + scenario.params.noise_power)
    return RadioAllocation(A, P, _eta_from(P, A, plan, scenario, g), S, 0.0, tag)


def equal_power(scenario: Scenario, plan: DeploymentPlan, A, gains=None) -> RadioAllocation:
    """Each UAV splits ``P_max`` evenly over its assigned subcarriers."""
    A = np.asarray(A, dtype=float)
    used = A.sum(axis=(0, 1))
    P = A * (scenario.params.p_max / np.maximum(used, 1.0))[None, None, :]
    return _alloc(A, P, plan, scenario, gains, "equal_power")


def random_power(scenario: Scenario, plan: DeploymentPlan, A, seed: int = 0,
                 gains=None) -> RadioAllocation:
    """Uniform random weights on the assigned subcarriers, normalized to the
    UAV budget."""
    rng = np.random.default_rng(seed)
    A = np.asarray(A, dtype=float)
    W = A * rng.uniform(size=A.shape)
    tot = W.sum(axis=(0, 1))
    P = W * (scenario.params.p_max / np.where(tot > 0, tot, 1.0))[None, None, :]
    return _alloc(A, P, plan, scenario, gains, "random_power")


def random_subcarrier_map(plan: DeploymentPlan, K: int, seed: int = 0):
    """Collision-free random map: every served user of a UAV first gets one
    random subcarrier (while they last), the rest go to random members."""
    rng = np.random.default_rng(seed)
    N, L = plan.J.shape
    A = np.zeros((N, K, L))
    for l in range(L):
        members = np.flatnonzero(plan.J[:, l])
        if members.size == 0:
            continue
        ks = rng.permutation(K)
        first = rng.permutation(members)[:K]
        for k, n in zip(ks, first):
            A[n, k, l] = 1.0
        for k in ks[first.size:]:
            A[rng.choice(members), k, l] = 1.0
    return A


def random_subcarrier(scenario: Scenario, plan: DeploymentPlan, seed: int = 0,
                      gains=None) -> RadioAllocation:
    """Random subcarrier map with sum-rate powers on top."""
    A = random_subcarrier_map(plan, scenario.params.n_subcarriers, seed)
    out = optimize_power(scenario, plan, A, gains, mode="random_subcarrier")
    return out
