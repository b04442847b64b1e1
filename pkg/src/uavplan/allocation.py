"""Joint subcarrier and power allocation by successive convex approximation.

Only served (user, UAV) pairs carry variables. Per pair ``i`` and subcarrier
``k`` the program holds the subcarrier share ``a``, the normalized power
``p~ = p / P_max``, the log-interference slack ``s~ = s - ln(sigma^2)`` and
per pair the normalized rate bound ``eta~ = eta / B_sc``. In these units

    u_ik   = 1 + Phi~_ik + Gn_ik p~_ik           (Gn = P_max g / sigma^2)
    ln2 eta~_i + sum_k s~_ik <= sum_k ln u_ik    (rate bound, convex)
    exp(-s_o) (1 + Phi~_ik) - s~_ik <= 1 - s_o - exp(-s_o)   (tangent of exp)

so every subproblem is a convex program for :func:`solvers.solve_convex`.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .channel import gain_tensor, interference, rate_matrix
from .config import Scenario, SystemParams
from .deployment import DeploymentPlan, min_served
from .solvers import ConvexProgram, LogConstraints, solve_binary_bnb, solve_convex

__all__ = [
    "RadioAllocation",
    "ScaState",
    "AllocationError",
    "init_feasible",
    "build_sca_subproblem",
    "run_algorithm2",
    "round_and_repair",
    "optimize_power",
    "feasibility_check",
    "sum_rate",
    "linearized_exp",
    "linearized_penalty",
]

log = logging.getLogger(__name__)
LN2 = math.log(2.0)


class AllocationError(RuntimeError):
    """QoS cannot be met; ``users`` lists the binding user indices."""

    def __init__(self, msg, users=()):
        super().__init__(msg)
        self.users = list(users)


@dataclass
class RadioAllocation:
    A: np.ndarray        # (N, K, L)
    P: np.ndarray        # (N, K, L) watts
    eta: np.ndarray      # (N, L) bit/s
    s: np.ndarray        # (N, K, L) ln of interference-plus-noise (W)
    mu: float
    mode: str            # relaxed | rounded | bnb_exact | init | baseline tag
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "P": self.P.tolist(), "eta": self.eta.tolist(),
                "s": self.s.tolist(), "mu": self.mu, "mode": self.mode, "flags": self.flags}

    @classmethod
    def from_dict(cls, d: dict) -> "RadioAllocation":
        return cls(np.asarray(d["A"], float), np.asarray(d["P"], float),
                   np.asarray(d["eta"], float), np.asarray(d["s"], float), d["mu"], d["mode"],
                   list(d.get("flags", [])))

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))


@dataclass
class ScaState:
    iteration: int
    s_o: np.ndarray          # (pairs, K), normalized log domain
    a_o: np.ndarray          # (pairs, K)
    history: list = field(default_factory=list)      # sum eta~ + mu sum a^2
    eta_history: list = field(default_factory=list)  # sum of eta, bit/s
    times: list = field(default_factory=list)
    status: str = ""

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "objective", "sum_eta_bps", "wall_time_s"])
            for i, (f, e, t) in enumerate(zip(self.history, self.eta_history, self.times)):
                w.writerow([i, repr(float(f)), repr(float(e)), repr(float(t))])


def linearized_exp(s, s_o):
    """Tangent of ``exp`` at ``s_o``; never above ``exp(s)``."""
    return np.exp(s_o) * (s - s_o + 1.0)


def linearized_penalty(a, a_o):
    """Linearized binarity penalty ``2 a_o a - a_o^2 - a_o``.

    It touches ``a^2 - a`` at ``a = a_o`` and is the tangent of ``a^2`` shifted
    by the constant ``-a_o``, so each subproblem is a minorize-maximize step on
    ``sum eta + mu sum a^2``. With at most one unit of share per (UAV,
    subcarrier) that surrogate rewards concentrating the share on one user.
    """
    return 2.0 * a_o * a - a_o * a_o - a_o


# --------------------------------------------------------------------------
# layout of the served pairs


class _Layout:
    def __init__(self, scenario: Scenario, plan: DeploymentPlan, gains=None):
        params = scenario.params
        self.params = params
        self.N, self.L = plan.J.shape
        self.K = params.n_subcarriers
        users, uavs = np.nonzero(plan.J)
        self.users = users
        self.uavs = uavs
        self.nP = len(users)
        self.g = gain_tensor(scenario, plan.uavs) if gains is None else np.asarray(gains, float)
        self.noise = params.noise_power
        self.bsc = params.subcarrier_bandwidth
        self.Gn = params.p_max * self.g[users][:, :, :] / self.noise      # (nP, K, L)
        self.qos = params.qos_vector()[users] / self.bsc
        nPK = self.nP * self.K
        self.ia = np.arange(nPK).reshape(self.nP, self.K)
        self.ip = nPK + self.ia
        self.is_ = 2 * nPK + self.ia
        self.ie = 3 * nPK + np.arange(self.nP)
        self.n = 3 * nPK + self.nP
        self._phi = self._interference_matrix()

    def _interference_matrix(self):
        """Sparse map p~ -> Phi~ over rows (i, k)."""
        K, nP = self.K, self.nP
        other = self.uavs[:, None] != self.uavs[None, :]          # (i, j)
        ii, jj = np.nonzero(other)
        rows, cols, vals = [], [], []
        for k in range(K):
            rows.append(ii * K + k)
            cols.append(jj * K + k)
            vals.append(self.Gn[ii, k, self.uavs[jj]])
        if rows:
            rows = np.concatenate(rows)
            cols = np.concatenate(cols)
            vals = np.concatenate(vals)
        return sp.csr_matrix((vals, (rows, cols)), shape=(nP * K, nP * K))

    def phi(self, p):
        return (self._phi @ p.reshape(-1)).reshape(self.nP, self.K)

    def own_gain(self):
        return self.Gn[np.arange(self.nP), :, self.uavs]          # (nP, K)

    def pack(self, a, p, s, eta):
        return np.concatenate([a.ravel(), p.ravel(), s.ravel(), eta.ravel()])

    def unpack(self, x):
        nPK = self.nP * self.K
        sh = (self.nP, self.K)
        return (x[:nPK].reshape(sh), x[nPK:2 * nPK].reshape(sh), x[2 * nPK:3 * nPK].reshape(sh),
                x[3 * nPK:])

    def log_args(self, p):
        return 1.0 + self.phi(p) + self.own_gain() * p

    def rate_bound(self, p, s):
        """Largest eta~ allowed by the rate constraint at (p, s)."""
        return (np.log(self.log_args(p)).sum(axis=1) - s.sum(axis=1)) / LN2

    def true_rate(self, p):
        """Exact normalized rate sum_k log2(1 + SINR) per pair."""
        return np.log2(self.log_args(p) / (1.0 + self.phi(p))).sum(axis=1)

    def to_allocation(self, x, mu, mode) -> RadioAllocation:
        a, p, s, eta = self.unpack(x)
        N, K, L = self.N, self.K, self.L
        A = np.zeros((N, K, L))
        P = np.zeros((N, K, L))
        S = np.zeros((N, K, L))
        E = np.zeros((N, L))
        A[self.users, :, self.uavs] = a
        P[self.users, :, self.uavs] = p * self.params.p_max
        S[self.users, :, self.uavs] = s + math.log(self.noise)
        E[self.users, self.uavs] = np.maximum(eta, 0.0) * self.bsc
        return RadioAllocation(A, P, E, S, mu, mode)

    def from_allocation(self, alloc: RadioAllocation):
        a = alloc.A[self.users, :, self.uavs]
        p = alloc.P[self.users, :, self.uavs] / self.params.p_max
        return a, p


# --------------------------------------------------------------------------


def _round_robin(plan: DeploymentPlan, K: int):
    """Subcarrier k of UAV l goes to its (k mod Q)-th user."""
    N, L = plan.J.shape
    A = np.zeros((N, K, L))
    short = []
    for l in range(L):
        members = np.flatnonzero(plan.J[:, l])
        if members.size == 0:
            continue
        if members.size > K:
            short.append(l)
        for k in range(K):
            A[members[k % members.size], k, l] = 1.0
    return A, short


def init_feasible(scenario: Scenario, plan: DeploymentPlan, gains=None) -> RadioAllocation:
    """Round-robin subcarriers with equal power ``P_max / K`` per subcarrier.

    ``s`` holds ``ln(Phi + sigma^2)`` of this allocation, the first tangent
    point of the successive approximation.
    """
    params = scenario.params
    K = params.n_subcarriers
    A, short = _round_robin(plan, K)
    P = A * (params.p_max / K)
    g = gain_tensor(scenario, plan.uavs) if gains is None else gains
    phi = interference(P, g)
    S = np.log(phi + params.noise_power)
    rates = rate_matrix(P, A, g, params)
    E = np.where(plan.J > 0, rates, 0.0)
    alloc = RadioAllocation(A, P, E, S, params.penalty, "init")
    for l in short:
        alloc.flags.append(f"uav {l} serves more users than subcarriers")
        log.warning("UAV %d serves %d users with %d subcarriers", l, int(plan.J[:, l].sum()), K)
    return alloc


def build_sca_subproblem(state: ScaState, scenario: Scenario, plan: DeploymentPlan,
                         relaxed: bool = True, mu: float | None = None, layout=None,
                         fixed_a=None) -> ConvexProgram:
    """Convex subproblem at the tangent points ``(state.s_o, state.a_o)``.

    The objective is minimized, so it is the negated
    ``sum eta~ + mu * sum linearized_penalty(a, a_o)``. With ``relaxed`` off
    the penalty is dropped and the ``a`` entries are meant to be branched
    on. ``fixed_a`` pins the subcarrier shares (power-only problem).
    """
    lay = layout or _Layout(scenario, plan)
    params = scenario.params
    mu = (params.penalty if mu is None else mu) if relaxed and fixed_a is None else 0.0
    nP, K, n = lay.nP, lay.K, lay.n
    nPK = nP * K
    so = np.asarray(state.s_o, float).reshape(nP, K)
    ao = np.asarray(state.a_o, float).reshape(nP, K)

    c = np.zeros(n)
    c[lay.ie] = -1.0
    const = 0.0
    if mu > 0:
        c[lay.ia.ravel()] = -2.0 * mu * ao.ravel()
        const = mu * float(np.sum(ao * ao + ao))

    rows = []
    rhs = []
    # p~ <= a
    rows.append(sp.csr_matrix((np.r_[np.ones(nPK), -np.ones(nPK)],
                               (np.r_[np.arange(nPK), np.arange(nPK)],
                                np.r_[lay.ip.ravel(), lay.ia.ravel()])), shape=(nPK, n)))
    rhs.append(np.zeros(nPK))
    # one user per (UAV, subcarrier), power budget per UAV
    used = np.unique(lay.uavs)
    r_sub, c_sub = [], []
    r_pow, c_pow = [], []
    for row, l in enumerate(used):
        mem = np.flatnonzero(lay.uavs == l)
        for k in range(K):
            r_sub.append(np.full(mem.size, row * K + k))
            c_sub.append(lay.ia[mem, k])
        r_pow.append(np.full(mem.size * K, row))
        c_pow.append(lay.ip[mem].ravel())
    r_sub, c_sub = np.concatenate(r_sub), np.concatenate(c_sub)
    rows.append(sp.csr_matrix((np.ones(r_sub.size), (r_sub, c_sub)), shape=(used.size * K, n)))
    rhs.append(np.ones(used.size * K))
    r_pow, c_pow = np.concatenate(r_pow), np.concatenate(c_pow)
    rows.append(sp.csr_matrix((np.ones(r_pow.size), (r_pow, c_pow)), shape=(used.size, n)))
    rhs.append(np.ones(used.size))
    # tangent bound on the interference slack, scaled by exp(-s_o)
    w = np.exp(-so).ravel()
    phi_rows = sp.diags(w) @ lay._phi
    phi_rows = sp.csr_matrix((phi_rows.data, phi_rows.indices + nPK, phi_rows.indptr),
                             shape=(nPK, n))
    s_part = sp.csr_matrix((-np.ones(nPK), (np.arange(nPK), lay.is_.ravel())), shape=(nPK, n))
    rows.append((phi_rows + s_part).tocsr())
    rhs.append(1.0 - so.ravel() - w)
    G = sp.vstack(rows).tocsr()
    h = np.concatenate(rhs)

    lb = np.full(n, -np.inf)
    ub = np.full(n, np.inf)
    lb[lay.ia.ravel()] = 0.0
    ub[lay.ia.ravel()] = 1.0
    lb[lay.ip.ravel()] = 0.0
    lb[lay.ie] = lay.qos
    if fixed_a is not None:
        fa = np.asarray(fixed_a, float).ravel()
        lb[lay.ia.ravel()] = fa
        ub[lay.ia.ravel()] = fa
        # a pair without subcarriers has rate 0; eta~ >= 0 would leave that
        # row without an interior, so it is bounded from above only
        idle = (fa.reshape(nP, K).sum(axis=1) == 0) & (lay.qos <= 0)
        lb[lay.ie[idle]] = -1.0

    # rate bound: ln2 eta~_i + sum_k s~_ik - sum_k ln(u_ik) <= 0
    own = sp.csr_matrix((lay.own_gain().ravel(), (np.arange(nPK), np.arange(nPK))),
                        shape=(nPK, nPK))
    Mp = (lay._phi + own).tocsr()
    M = sp.csr_matrix((Mp.data, Mp.indices + nPK, Mp.indptr), shape=(nPK, n))
    group = np.repeat(np.arange(nP), K)
    Cr = np.r_[np.arange(nP), np.repeat(np.arange(nP), K)]
    Cc = np.r_[lay.ie, lay.is_.ravel()]
    Cv = np.r_[np.full(nP, LN2), np.ones(nPK)]
    C = sp.csr_matrix((Cv, (Cr, Cc)), shape=(nP, n))
    logc = LogConstraints(M, np.ones(nPK), group, C, np.zeros(nP))
    return ConvexProgram(n, c, None, G, h, lb, ub, log=logc, const=const)


def _interior_point(lay: _Layout, a, p, so, margin=1e-3):
    """A point near (a, p) that satisfies every constraint but possibly QoS
    strictly; used as the barrier start (phase I fixes the rest)."""
    s = so + margin
    eta = lay.rate_bound(p, s) - margin
    return lay.pack(a, p, s, eta)


def _surrogate(lay: _Layout, x, mu):
    """``sum eta~ + mu sum a^2``, the quantity every subproblem cannot decrease."""
    a, _, _, eta = lay.unpack(x)
    return float(eta.sum() + mu * np.sum(a * a))


def _binding_users(lay: _Layout, x):
    a, p, s, eta = lay.unpack(x)
    best = lay.true_rate(p)
    bad = np.flatnonzero(best < lay.qos - 1e-9)
    return lay.users[bad].tolist()


def _fractional_start(lay: _Layout):
    """Uniform fractional shares, the start of the penalized relaxation."""
    q = np.bincount(lay.uavs, minlength=lay.L)[lay.uavs].astype(float)
    a = np.repeat((1.0 / (q + 1.0))[:, None], lay.K, axis=1)
    p = 0.9 * a / lay.K
    return a, p


def _solve_sub(prog, tol, x0, exact, lay, bnb_nodes):
    if not exact:
        return solve_convex(prog, tol, x0=x0)

    def rounding(x):
        a, p, s, eta = lay.unpack(x.copy())
        a_r = _argmax_round(lay, a)
        return lay.pack(a_r, np.minimum(p, a_r), s, eta)

    return solve_binary_bnb(prog, lay.ia.ravel(), tol, max_nodes=bnb_nodes, rounding=rounding,
                            incumbent=rounding(x0))


def _argmax_round(lay: _Layout, a):
    out = np.zeros_like(a)
    for l in np.unique(lay.uavs):
        mem = np.flatnonzero(lay.uavs == l)
        for k in range(lay.K):
            j = int(np.argmax(a[mem, k]))
            if a[mem[j], k] >= 0.5:
                out[mem[j], k] = 1.0
    return out


def _sca(lay: _Layout, scenario, plan, a0, p0, mu, *, exact=False, fixed_a=None,
         max_iter=30, tol_rate=1e-3, solver_tol=1e-6, bnb_nodes=5000):
    """Successive approximation from (a0, p0). Returns (x, state)."""
    so = np.log(1.0 + lay.phi(p0))
    ao = a0.copy()
    state = ScaState(0, so, ao)
    t0 = time.perf_counter()
    x = _interior_point(lay, a0, p0, so)
    # a first pass that cannot reach QoS re-linearizes at the phase-I point
    best_tau = np.inf
    for _ in range(max_iter):
        prog = build_sca_subproblem(state, scenario, plan, relaxed=not exact, mu=mu,
                                    layout=lay, fixed_a=fixed_a)
        rep = solve_convex(prog, solver_tol, x0=x)
        if rep.status != "infeasible":
            break
        tau = rep.phase1_tau
        if not np.isfinite(tau) or tau >= best_tau - 1e-3 * abs(best_tau):
            state.status = "infeasible"
            raise AllocationError(f"QoS unreachable (phase-I residual {tau:.3g})",
                                  _binding_users(lay, rep.x))
        best_tau = tau
        _, p, _, _ = lay.unpack(rep.x)
        state.s_o = np.log(1.0 + lay.phi(p))
        x = rep.x
    else:
        raise AllocationError("QoS unreachable within the iteration budget",
                              _binding_users(lay, rep.x))

    prev_eta = None
    x_prev = None
    for it in range(1, max_iter + 1):
        prog = build_sca_subproblem(state, scenario, plan, relaxed=not exact, mu=mu,
                                    layout=lay, fixed_a=fixed_a)
        rep = _solve_sub(prog, solver_tol, x, exact and fixed_a is None, lay, bnb_nodes)
        if rep.status == "infeasible" or not np.all(np.isfinite(rep.x)):
            if x_prev is None:
                raise AllocationError("SCA subproblem infeasible", _binding_users(lay, x))
            state.status = "subproblem_failed"
            break
        x = rep.x
        a, p, s, eta = lay.unpack(x)
        f = _surrogate(lay, x, mu)
        if state.history and f < state.history[-1] - 1e-9 * max(1.0, abs(state.history[-1])):
            # a subproblem solved less accurately than the last one; keep the
            # better iterate and stop
            x = x_prev
            state.status = "stalled"
            break
        state.history.append(f)
        state.eta_history.append(float(eta.sum() * lay.bsc))
        state.times.append(time.perf_counter() - t0)
        state.iteration = it
        state.s_o = s.copy()
        state.a_o = a.copy()
        x_prev = x
        tot = float(eta.sum())
        if prev_eta is not None and abs(tot - prev_eta) <= tol_rate * max(abs(prev_eta), 1e-12) \
                and f - state.history[-2] <= tol_rate * max(abs(f), 1e-12):
            state.status = "converged"
            break
        prev_eta = tot
    else:
        state.status = "max_iter"
    return x, state


def run_algorithm2(scenario: Scenario, plan: DeploymentPlan, params: SystemParams | None = None,
                   mode: str = "relaxed", gains=None, bnb_nodes: int = 5000):
    """Successive convex approximation of the sum-rate problem.

    Parameters
    ----------
    mode : {"relaxed", "bnb_exact"}
        ``relaxed`` solves the penalized continuous relaxation starting from
        uniform fractional shares; ``bnb_exact`` keeps the shares binary and
        solves every subproblem by branch-and-bound (small instances only).

    Returns
    -------
    (RadioAllocation, ScaState)

    Raises
    ------
    AllocationError
        If QoS cannot be met; ``err.users`` names the binding users.
    """
    params = params or scenario.params
    if params is not scenario.params:
        scenario = scenario.with_params(params)
    lay = _Layout(scenario, plan, gains)
    if lay.nP == 0:
        raise AllocationError("no served users")
    init = init_feasible(scenario, plan, lay.g)
    if mode == "relaxed":
        a0, p0 = _fractional_start(lay)
        mu = params.penalty
    elif mode == "bnb_exact":
        a0, p0 = lay.from_allocation(init)
        mu = 0.0
    else:
        raise ValueError(f"unknown mode {mode!r}")
    x, state = _sca(lay, scenario, plan, a0, p0, mu, exact=(mode == "bnb_exact"),
                    max_iter=params.max_iter_alg2, tol_rate=params.tol_rate,
                    solver_tol=params.solver_tol, bnb_nodes=bnb_nodes)
    alloc = lay.to_allocation(x, mu, mode)
    alloc.flags.extend(init.flags)
    return alloc, state


def _start_power(lay: _Layout, a, p_rel):
    """Relaxed powers moved inside the binary map ``a``, scaled to the budget."""
    p0 = np.where(a > 0, np.maximum(p_rel, 1e-3 / lay.K), 0.0)
    budget = np.bincount(lay.uavs, p0.sum(axis=1), minlength=lay.L)
    return p0 / np.maximum(budget[lay.uavs], 1.0)[:, None] * 0.99


def _power_score(lay: _Layout, scenario, plan, a, p_rel, params) -> float:
    """Sum of eta~ after one power-only subproblem with map ``a``; -inf when
    QoS is out of reach."""
    p0 = _start_power(lay, a, p_rel)
    state = ScaState(0, np.log(1.0 + lay.phi(p0)), a)
    prog = build_sca_subproblem(state, scenario, plan, layout=lay, fixed_a=a)
    # users still waiting for their repair do not count against QoS yet
    starving = lay.ie[a.sum(axis=1) == 0]
    prog.lb[starving] = -np.inf
    rep = solve_convex(prog, params.solver_tol, x0=_interior_point(lay, a, p0, state.s_o))
    if rep.status == "infeasible" or not np.all(np.isfinite(rep.x)):
        return -np.inf
    return float(lay.unpack(rep.x)[3].sum())


def round_and_repair(relaxed: RadioAllocation, scenario: Scenario, plan: DeploymentPlan,
                     gains=None) -> RadioAllocation:
    """Binary subcarrier map from a relaxed solution, then a power-only
    re-optimization with that map fixed.

    Each (subcarrier, UAV) goes to the user with the largest share if that
    share is at least 0.5. A served user left without subcarriers (QoS > 0)
    takes an idle subcarrier of its UAV or one from the UAV's richest user,
    whichever scores best in a power-only solve, before powers are re-solved.

    Raises
    ------
    AllocationError
        If the rounded map cannot meet QoS; ``err.users`` lists the violators.
    """
    params = scenario.params
    lay = _Layout(scenario, plan, gains)
    a_rel, p_rel = lay.from_allocation(relaxed)
    a = _argmax_round(lay, a_rel)
    flags = list(relaxed.flags)
    qos_active = lay.qos > 0
    starving = np.flatnonzero((a.sum(axis=1) == 0) & qos_active)
    # weakest first: strong users have more subcarriers worth taking
    own = lay.Gn[np.arange(lay.nP), :, lay.uavs].max(axis=1)
    starving = starving[np.argsort(own[starving], kind="stable")]
    for i in starving:
        mem = np.flatnonzero(lay.uavs == lay.uavs[i])
        counts = a[mem].sum(axis=1)
        rich = mem[int(np.argmax(counts))]
        idle = np.flatnonzero(a[mem].sum(axis=0) == 0)
        donated = np.flatnonzero(a[rich]) if counts.max() > 1 else np.zeros(0, int)
        cands = [(k, None) for k in idle] + [(k, rich) for k in donated]
        if not cands:
            flags.append(f"user {lay.users[i]} left without subcarrier")
            continue
        # the donor's loss depends on how much power the receiver then
        # needs, so every candidate is scored by a power-only solve; scoring
        # runs on this UAV alone (inter-cell coupling is weak and only the
        # ranking matters), the final re-solve below is network-wide
        l = lay.uavs[i]
        sub_plan = DeploymentPlan(plan.uavs[[l]], plan.J[:, [l]], plan.avg_pathloss, [], plan.phi)
        sub = _Layout(scenario, sub_plan, lay.g[:, :, [l]])
        scores = []
        for k, donor in cands:
            trial = a.copy()
            if donor is not None:
                trial[donor, k] = 0.0
            trial[i, k] = 1.0
            scores.append(_power_score(sub, scenario, sub_plan, trial[mem], p_rel[mem], params))
        k, donor = cands[int(np.argmax(scores))]
        if donor is not None:
            a[donor, k] = 0.0
            flags.append(f"subcarrier {k} moved from user {lay.users[donor]} to {lay.users[i]}")
        else:
            flags.append(f"idle subcarrier {k} given to user {lay.users[i]}")
        a[i, k] = 1.0
    p0 = _start_power(lay, a, p_rel)
    try:
        x, _ = _sca(lay, scenario, plan, a, p0, 0.0, fixed_a=a,
                    max_iter=params.max_iter_alg2, tol_rate=params.tol_rate,
                    solver_tol=params.solver_tol)
    except AllocationError as err:
        raise AllocationError(f"QoS infeasible after rounding: {err}", err.users) from None
    out = _binary_output(lay, x, relaxed.mu, "rounded")
    out.flags = flags
    return out


def _binary_output(lay: _Layout, x, mu, mode) -> RadioAllocation:
    out = lay.to_allocation(x, mu, mode)
    out.A = np.where(out.A > 0.5, 1.0, 0.0)
    out.P = np.where(out.A > 0, out.P, 0.0)
    return out


def optimize_power(scenario: Scenario, plan: DeploymentPlan, A, gains=None,
                   mode: str = "power_only") -> RadioAllocation:
    """Sum-rate powers for a fixed binary subcarrier map ``A`` (N, K, L).

    Raises
    ------
    AllocationError
        If QoS is out of reach with this map.
    """
    params = scenario.params
    lay = _Layout(scenario, plan, gains)
    alloc = RadioAllocation(np.asarray(A, float), np.asarray(A, float) * params.p_max / lay.K,
                            np.zeros((lay.N, lay.L)), np.zeros_like(A, dtype=float), 0.0, mode)
    a, p = lay.from_allocation(alloc)
    x, _ = _sca(lay, scenario, plan, a, _start_power(lay, a, p), 0.0, fixed_a=a,
                max_iter=params.max_iter_alg2, tol_rate=params.tol_rate,
                solver_tol=params.solver_tol)
    return _binary_output(lay, x, 0.0, mode)


# --------------------------------------------------------------------------


def sum_rate(alloc: RadioAllocation, scenario: Scenario, plan: DeploymentPlan, gains=None):
    """Total true rate (bit/s) over served pairs and the (N, L) rate matrix."""
    g = gain_tensor(scenario, plan.uavs) if gains is None else gains
    R = rate_matrix(alloc.P, alloc.A, g, scenario.params)
    R = np.where(plan.J > 0, R, 0.0)
    return float(R.sum()), R


def feasibility_check(alloc: RadioAllocation, plan: DeploymentPlan, scenario: Scenario,
                      gains=None, binary: bool = True, c_max: int | None = None) -> dict:
    """Per constraint family: ``{"ok": bool, "max_violation": float}``.

    ``c_max`` is the per-UAV cap used for the capacity family (default: the
    pinned config value, else N).

    Power and rate violations are relative (to ``P_max`` and ``r_0``);
    counts are absolute. QoS uses the true SINR rate, not ``eta``.
    """
    params = scenario.params
    A, P, J = alloc.A, alloc.P, plan.J
    pmax = params.p_max
    out = {}

    def put(name, v):
        v = float(max(0.0, v))
        out[name] = {"ok": v <= 1e-6, "max_violation": v}

    put("power_coupling", max(np.max(P - A * pmax) / pmax, np.max(-P) / pmax))
    put("one_user_per_subcarrier", np.max(A.sum(axis=0)) - 1.0)
    put("share_needs_association", np.max(A - J[:, None, :]))
    put("share_bounds", max(np.max(A) - 1.0, -np.min(A)))
    if binary:
        put("binary_shares", np.max(np.minimum(np.abs(A), np.abs(A - 1.0))))
    put("power_budget", np.max(P.sum(axis=(0, 1)) - pmax) / pmax)
    _, R = sum_rate(alloc, scenario, plan, gains)
    qos = params.qos_vector()
    need = np.where(J > 0, qos[:, None], 0.0)
    rel = np.where(need > 0, (need - R) / np.where(need > 0, need, 1.0), 0.0)
    put("qos", np.max(rel))
    put("single_association", np.max(J.sum(axis=1)) - 1.0)
    cnt = J.sum(axis=0)
    lo = params.c_min_value
    if c_max is None:
        c_max = params.n_users if params.c_max == "auto" else int(params.c_max)
    hi = c_max
    put("capacity", max(np.max(cnt) - hi, lo - np.min(cnt)) if cnt.size else 0.0)
    put("served_fraction", min_served(params) - J.sum())
    W = plan.uavs
    box = max(np.max(params.x_min - W[:, 0]), np.max(W[:, 0] - params.x_max),
              np.max(params.y_min - W[:, 1]), np.max(W[:, 1] - params.y_max),
              np.max(params.h_min - W[:, 2]), np.max(W[:, 2] - params.h_max))
    put("uav_bounds", box)
    sep = 0.0
    for i in range(W.shape[0]):
        for j in range(i + 1, W.shape[0]):
            sep = max(sep, params.min_separation - float(np.linalg.norm(W[i] - W[j])))
    put("separation", sep / params.min_separation if params.min_separation > 0 else 0.0)
    return out
