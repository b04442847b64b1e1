"""UAV placement and user association by block-coordinate descent.

Each outer iteration re-associates users with the capacitated min-cost flow
under the coverage cones of the current positions, then re-places every UAV
over its cluster by a small second-order-cone program. The average path loss
over served links is recorded as the trace.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .channel import UavPosition, inverse_plos, pathloss_matrix
from .config import EnvironmentParams, Scenario, SystemParams
from .solvers import (AssignmentInfeasible, AssignmentProblem, ConvexProgram, SocConstraint,
                      max_served, solve_assignment, solve_convex)

__all__ = [
    "DeploymentPlan",
    "DeploymentError",
    "Lemma1Matrices",
    "coverage_limit",
    "cone_slope",
    "xi_coefficient",
    "build_association_problem",
    "build_lemma1_matrices",
    "solve_placement",
    "initial_positions",
    "average_pathloss",
    "run_algorithm1",
]

log = logging.getLogger(__name__)


class DeploymentError(RuntimeError):
    """Association stays infeasible after every escalation step."""


class PlacementInfeasible(RuntimeError):
    """No altitude admits a cone covering the whole cluster."""


def _cone_angle(phi: float, env: EnvironmentParams):
    """Threshold elevation in degrees, or None when even the nadir falls
    short of ``phi`` (the logistic inverse then lies beyond 90 degrees)."""
    theta = inverse_plos(phi, env)
    return None if theta > 90.0 else theta


def coverage_limit(h: float, phi: float, env: EnvironmentParams) -> float:
    """Largest UAV-user 3D distance with LoS probability at least ``phi``;
    0 when no elevation reaches ``phi``."""
    theta = _cone_angle(phi, env)
    if theta is None:
        return 0.0
    return h / math.sin(math.radians(theta))


def xi_coefficient(phi: float, env: EnvironmentParams, mode: str = "squared") -> float:
    """Coefficient of ``h^2`` in the per-user coverage quadratic.

    ``squared`` gives ``1 - 1/sin^2(theta)`` (the squared 3D distance bound);
    ``literal`` gives ``1 - 1/sin(theta)``. An unreachable ``phi`` gives 1,
    which no altitude satisfies.
    """
    theta = _cone_angle(phi, env)
    if theta is None:
        return 1.0
    s = math.sin(math.radians(theta))
    return 1.0 - 1.0 / (s * s) if mode == "squared" else 1.0 - 1.0 / s


def cone_slope(phi: float, env: EnvironmentParams, mode: str = "squared") -> float:
    """Horizontal cone radius per metre of altitude, ``sqrt(-xi)``."""
    return math.sqrt(max(0.0, -xi_coefficient(phi, env, mode)))


def _caps(params: SystemParams, n_l: int, c_max: int | None):
    if c_max is None:
        c_max = params.n_users if params.c_max == "auto" else int(params.c_max)
    lo = min(params.c_min_value, c_max)
    return np.full(n_l, lo), np.full(n_l, c_max)


def min_served(params: SystemParams) -> int:
    return min(params.n_users, math.ceil(params.serve_fraction * params.n_users - 1e-9))


def build_association_problem(scenario: Scenario, uavs, phi: float,
                              c_max: int | None = None, mask: bool = True) -> AssignmentProblem:
    """Association instance at fixed UAV positions.

    ``cost`` holds squared 3D distances; ``allowed`` marks users inside each
    UAV's coverage cone at its current altitude (all True if ``mask`` is off).
    """
    params = scenario.params
    uavs = np.asarray(uavs, dtype=float).reshape(-1, 3)
    users = scenario.user_positions
    d2 = ((users[:, None, 0] - uavs[None, :, 0]) ** 2 + (users[:, None, 1] - uavs[None, :, 1]) ** 2
          + uavs[None, :, 2] ** 2)
    if mask:
        lim = np.array([coverage_limit(h, phi, scenario.environment) for h in uavs[:, 2]])
        allowed = d2 <= lim[None, :] ** 2 * (1 + 1e-12)
    else:
        allowed = np.ones_like(d2, dtype=bool)
    lo, hi = _caps(params, uavs.shape[0], c_max)
    need = min(min_served(params), int(hi.sum()))
    return AssignmentProblem(d2, allowed, lo, hi, need)


# --------------------------------------------------------------------------
# placement


@dataclass(frozen=True)
class Lemma1Matrices:
    """Quadratic forms of the per-UAV placement problem.

    Objective ``1/2 W^T H_o W + F_o^T W + kappa_o``; coverage of user ``n``
    ``1/2 W^T H_n W + F_n^T W + kappa_n <= 0``.
    """

    H_o: np.ndarray
    F_o: np.ndarray
    kappa_o: float
    H_n: np.ndarray     # (Q, 3, 3)
    F_n: np.ndarray     # (Q, 3)
    kappa_n: np.ndarray
    xi: float

    def objective(self, W) -> float:
        W = np.asarray(W, dtype=float)
        return float(0.5 * W @ self.H_o @ W + self.F_o @ W + self.kappa_o)

    def constraints(self, W) -> np.ndarray:
        W = np.asarray(W, dtype=float)
        return 0.5 * np.einsum("i,nij,j->n", W, self.H_n, W) + self.F_n @ W + self.kappa_n


def build_lemma1_matrices(cluster, xi: float) -> Lemma1Matrices:
    cluster = np.asarray(cluster, dtype=float).reshape(-1, 2)
    if cluster.shape[0] == 0:
        raise ValueError("cluster must be nonempty")
    q = cluster.shape[0]
    x, y = cluster[:, 0], cluster[:, 1]
    H_o = 2.0 * q * np.eye(3)
    F_o = np.array([-2.0 * x.sum(), -2.0 * y.sum(), 0.0])
    kappa_o = float(np.sum(x * x) + np.sum(y * y))
    # the h^2 coefficient of the coverage quadratic is xi, so its Hessian entry is 2 xi
    H_n = np.broadcast_to(np.diag([2.0, 2.0, 2.0 * xi]), (q, 3, 3)).copy()
    F_n = np.column_stack([-2.0 * x, -2.0 * y, np.zeros(q)])
    kappa_n = x * x + y * y
    return Lemma1Matrices(H_o, F_o, kappa_o, H_n, F_n, kappa_n, float(xi))


def placement_objective(cluster, W) -> float:
    """Direct sum of squared distances from ground users to ``W``."""
    cluster = np.asarray(cluster, dtype=float).reshape(-1, 2)
    x, y, h = (float(v) for v in W)
    return float(np.sum((cluster[:, 0] - x) ** 2 + (cluster[:, 1] - y) ** 2 + h * h))


def _placement_program(cluster, params: SystemParams, slope: float, cuts=()):
    mats = build_lemma1_matrices(cluster, -slope * slope)
    soc = []
    sel = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    for xn, yn in np.asarray(cluster, dtype=float).reshape(-1, 2):
        soc.append(SocConstraint(sel, np.array([-xn, -yn]), np.array([0.0, 0.0, slope]), 0.0))
    G = h = None
    if cuts:
        # n^T (W - W_o) >= d_o  <=>  -n^T W <= -(d_o + n^T W_o)
        G = sp.csr_matrix(np.array([-nv for nv, _ in cuts]))
        h = np.array([-(params.min_separation + nv @ wo) for nv, wo in cuts])
    lb = np.array([params.x_min, params.y_min, params.h_min])
    ub = np.array([params.x_max, params.y_max, params.h_max])
    return ConvexProgram(3, mats.F_o, mats.H_o, G, h, lb, ub, soc=soc, const=mats.kappa_o)


def _retry_interior(prog, cluster, params: SystemParams, slope, tol, rep):
    # restart from the centroid just above the lowest covering altitude
    c = cluster.mean(axis=0)
    r = float(np.sqrt(((cluster - c) ** 2).sum(axis=1)).max())
    h = min(max(params.h_min, r / slope) + 1.0, params.h_max - 1e-3)
    x0 = np.r_[c, h]
    again = solve_convex(prog, tol, x0=x0)
    if again.ok:
        return again
    log.warning("placement solver stopped with %s (kkt %.2e)", again.status,
                again.kkt_residual)
    return again if again.objective <= rep.objective else rep


def _separation_ok(W, others, d_o):
    if len(others) == 0:
        return np.ones(0, dtype=bool)
    return np.linalg.norm(np.asarray(others, dtype=float).reshape(-1, 3) - W, axis=1) >= d_o - 1e-6


def solve_placement(cluster, params: SystemParams, phi: float, env: EnvironmentParams,
                    other_uav_positions=(), start=None, tol: float | None = None) -> UavPosition:
    """Place one UAV over its cluster.

    Minimizes the summed squared distance subject to the coverage cones, the
    area/altitude box and separation from ``other_uav_positions``. Separation
    is enforced by half-space cuts linearized at ``start`` (the UAV's current
    position), added only for neighbours the unconstrained optimum violates.

    Raises
    ------
    PlacementInfeasible
        If even ``h_max`` cannot cover the cluster.
    """
    cluster = np.asarray(cluster, dtype=float).reshape(-1, 2)
    if cluster.shape[0] == 0:
        raise ValueError("cluster must be nonempty")
    tol = params.solver_tol if tol is None else tol
    slope = cone_slope(phi, env, params.xi_mode)
    others = np.asarray(other_uav_positions, dtype=float).reshape(-1, 3)
    cuts = []
    W = None
    for _ in range(len(others) + 1):
        prog = _placement_program(cluster, params, slope, cuts)
        x0 = None if start is None else np.asarray(start, dtype=float)
        rep = solve_convex(prog, tol, x0=x0)
        if rep.status in ("max_iter", "line_search_failed"):
            rep = _retry_interior(prog, cluster, params, slope, tol, rep)
        if rep.status == "infeasible":
            if not cuts:
                raise PlacementInfeasible(
                    f"cluster of {len(cluster)} users cannot be covered (phi={phi:.2f})")
            break
        W = rep.x
        ok = _separation_ok(W, others, params.min_separation)
        if ok.all() or start is None:
            break
        ref = np.asarray(start, dtype=float)
        added = False
        for j in np.flatnonzero(~ok):
            diff = ref - others[j]
            nrm = np.linalg.norm(diff)
            nv = np.array([0.0, 0.0, 1.0]) if nrm < 1e-9 else diff / nrm
            if not any(np.allclose(nv, c[0]) and np.allclose(others[j], c[1]) for c in cuts):
                cuts.append((nv, others[j].copy()))
                added = True
        if not added:
            break
    if W is None:
        raise PlacementInfeasible("placement solver failed")
    return UavPosition(float(W[0]), float(W[1]), float(W[2]))


def _repair_separation(uavs, d_o, h_max):
    """Raise UAVs that sit too close to an earlier one; returns the flag of
    any residual violation. Raising keeps every coverage cone satisfied."""
    uavs = uavs.copy()
    n_l = uavs.shape[0]
    for l in range(n_l):
        for _ in range(n_l):
            bad = [j for j in range(n_l) if j != l
                   and np.linalg.norm(uavs[l] - uavs[j]) < d_o - 1e-6]
            if not bad:
                break
            j = bad[0]
            dh2 = float(np.sum((uavs[l, :2] - uavs[j, :2]) ** 2))
            need = uavs[j, 2] + math.sqrt(max(0.0, d_o * d_o - dh2)) + 1e-6
            if need > h_max:
                break
            uavs[l, 2] = need
    violated = any(np.linalg.norm(uavs[a] - uavs[b]) < d_o - 1e-6
                   for a in range(n_l) for b in range(a + 1, n_l))
    return uavs, violated


# --------------------------------------------------------------------------
# Algorithm 1


@dataclass
class DeploymentPlan:
    uavs: np.ndarray                 # (L, 3)
    J: np.ndarray                    # (N, L) int
    avg_pathloss: float
    trace: list
    phi: float
    iterations: int = 0
    converged: bool = False
    initial_L: int = 0
    escalations: list = field(default_factory=list)
    separation_violation: bool = False
    stop_reason: str = ""
    rejected_pathloss: float | None = None   # the step refused for raising PL

    @property
    def L(self) -> int:
        return self.uavs.shape[0]

    @property
    def served_count(self) -> np.ndarray:
        return self.J.sum(axis=0)

    def positions(self) -> list:
        return [UavPosition(*map(float, w)) for w in self.uavs]

    def to_dict(self) -> dict:
        return {
            "uavs": self.uavs.tolist(),
            "association": [[int(n), int(l)] for n, l in zip(*np.nonzero(self.J))],
            "n_users": int(self.J.shape[0]),
            "served_count": self.served_count.tolist(),
            "avg_pathloss": self.avg_pathloss,
            "trace": list(self.trace),
            "phi": self.phi,
            "iterations": self.iterations,
            "converged": self.converged,
            "initial_L": self.initial_L,
            "escalations": list(self.escalations),
            "separation_violation": self.separation_violation,
            "stop_reason": self.stop_reason,
            "rejected_pathloss": self.rejected_pathloss,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DeploymentPlan":
        uavs = np.asarray(data["uavs"], dtype=float).reshape(-1, 3)
        J = np.zeros((data["n_users"], uavs.shape[0]), dtype=np.int64)
        for n, l in data["association"]:
            J[n, l] = 1
        keys = ("iterations", "converged", "initial_L", "escalations", "separation_violation",
                "stop_reason", "rejected_pathloss")
        return cls(uavs, J, data["avg_pathloss"], list(data["trace"]), data["phi"],
                   **{k: data[k] for k in keys if k in data})

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def average_pathloss(scenario: Scenario, uavs, J) -> float:
    """Mean linear path loss over served (user, UAV) links."""
    J = np.asarray(J)
    if J.sum() == 0:
        return float("nan")
    pl = pathloss_matrix(scenario.user_positions, uavs, scenario.environment, scenario.params)
    return float(pl[J > 0].mean())


def initial_positions(scenario: Scenario, L: int, seed: int = 0, altitude: str | None = None):
    """Start positions above ``L`` randomly chosen users that are pairwise at
    least ``min_separation`` apart (fewer if impossible, then any users)."""
    params = scenario.params
    rng = np.random.default_rng(seed)
    altitude = altitude or params.init_altitude
    h0 = 0.5 * (params.h_min + params.h_max) if altitude == "mid" else params.h_max
    users = scenario.user_positions
    order = rng.permutation(users.shape[0])
    picked = []
    for n in order:
        if len(picked) == L:
            break
        if all(np.hypot(*(users[n] - users[m])) >= params.min_separation for m in picked):
            picked.append(int(n))
    for n in order:
        if len(picked) == L:
            break
        if int(n) not in picked:
            picked.append(int(n))
    out = np.column_stack([users[picked], np.full(len(picked), h0)])
    while out.shape[0] < L:  # more UAVs than users: spread the rest at random
        extra = [rng.uniform(params.x_min, params.x_max), rng.uniform(params.y_min, params.y_max), h0]
        out = np.vstack([out, extra])
    return out


def _escalate_uav(scenario: Scenario, uavs, prob: AssignmentProblem, phi: float, h0: float):
    """New UAV above the unserved user with the most unserved neighbours in
    its cone (ties: lowest index)."""
    J = max_served(prob)
    unserved = np.flatnonzero(J.sum(axis=1) == 0)
    users = scenario.user_positions
    if unserved.size == 0:
        unserved = np.arange(users.shape[0])
    r = coverage_limit(h0, phi, scenario.environment)
    r_h2 = max(r * r - h0 * h0, 0.0)
    pts = users[unserved]
    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
    counts = (d2 <= r_h2).sum(axis=1)
    best = unserved[int(np.argmax(counts))]
    return np.vstack([uavs, [users[best, 0], users[best, 1], h0]])


def run_algorithm1(scenario: Scenario, L: int, params: SystemParams | None = None,
                   c_max: int | None = None, seed: int | None = None,
                   uavs0=None) -> DeploymentPlan:
    """Alternate association and placement until the average path loss
    settles.

    Parameters
    ----------
    scenario : Scenario
    L : int
        Fleet size from the sizing step.
    params : SystemParams, optional
        Defaults to ``scenario.params``.
    c_max : int, optional
        Per-UAV serving cap (``C_max``); ``params.c_max`` or N when absent.
    seed : int, optional
        Seed of the initial positions (default: the scenario seed).
    uavs0 : array, optional
        Explicit (L, 3) start positions.

    Returns
    -------
    DeploymentPlan
        Its ``trace`` is nonincreasing: a step that would raise the average
        path loss is rejected and ends the loop.

    Raises
    ------
    DeploymentError
        When no escalation makes the association feasible.
    """
    params = params or scenario.params
    if params is not scenario.params:
        scenario = scenario.with_params(params)
    seed = scenario.seed if seed is None else seed
    env = scenario.environment
    h0 = 0.5 * (params.h_min + params.h_max) if params.init_altitude == "mid" else params.h_max
    uavs = initial_positions(scenario, L, seed) if uavs0 is None else \
        np.asarray(uavs0, dtype=float).reshape(-1, 3).copy()
    phi = params.los_threshold
    slots = scenario.fading.shape[2]
    escalations = []

    # feasibility: relax phi, then grow the fleet
    while True:
        prob = build_association_problem(scenario, uavs, phi, c_max)
        if prob.min_total < min_served(params):
            J = None
        else:
            try:
                J = solve_assignment(prob)
            except AssignmentInfeasible:
                J = None
        if J is not None:
            break
        if phi - params.phi_step >= params.phi_floor - 1e-9:
            phi = round(phi - params.phi_step, 10)
            escalations.append(f"phi->{phi:.2f}")
        elif uavs.shape[0] < slots:
            uavs = _escalate_uav(scenario, uavs, prob, phi, h0)
            escalations.append(f"L->{uavs.shape[0]}")
        else:
            raise DeploymentError(
                f"association infeasible with phi={phi:.2f}, L={uavs.shape[0]} "
                f"(no UAV slots left)")
    for msg in escalations:
        log.info("escalation: %s", msg)

    pl = average_pathloss(scenario, uavs, J)
    trace = [pl]
    converged = False
    stop = "max_iter"
    sep_flag = False
    rejected = None
    it = 0
    for it in range(1, params.max_iter_alg1 + 1):
        new = uavs.copy()
        for l in range(uavs.shape[0]):
            members = np.flatnonzero(J[:, l])
            if members.size == 0:
                continue
            others = np.delete(new, l, axis=0)
            try:
                w = solve_placement(scenario.user_positions[members], params, phi, env,
                                    others, start=uavs[l])
                new[l] = w
            except PlacementInfeasible:
                pass  # keep the previous position for this UAV
        new, sep_flag_new = _repair_separation(new, params.min_separation, params.h_max)
        try:
            J_new = solve_assignment(build_association_problem(scenario, new, phi, c_max))
        except AssignmentInfeasible:
            stop = "association_lost"
            break
        pl_new = average_pathloss(scenario, new, J_new)
        if pl_new > pl:
            stop = "pathloss_increase_rejected"
            rejected = pl_new
            converged = True
            it -= 1
            break
        uavs, J, sep_flag = new, J_new, sep_flag_new
        trace.append(pl_new)
        done = abs(pl - pl_new) <= params.tol_pathloss * abs(pl)
        pl = pl_new
        if done:
            converged = True
            stop = "tolerance"
            break
    if not sep_flag:
        _, sep_flag = _repair_separation(uavs, params.min_separation, params.h_max)
    return DeploymentPlan(uavs, J, pl, trace, phi, it, converged, L, escalations, sep_flag, stop,
                          rejected)
