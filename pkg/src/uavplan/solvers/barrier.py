"""Log-barrier interior-point method for small convex programs.

Supported problem class (minimization)::

    min   c^T x + 1/2 x^T Q x + const
    s.t.  G x <= h
          lb <= x <= ub
          1/2 x^T P_i x + q_i^T x + r_i <= 0          (P_i psd)
          ||M_i x + v_i|| <= e_i^T x + f_i            (second-order cones)
          C_i x + d_i <= sum_{j in group i} log(M_j x + m0_j)

Variables with ``lb == ub`` are eliminated before the solve, and linear rows
that pin further variables to a single value (e.g. ``0 <= p <= a`` with ``a``
fixed at 0) are detected by bound propagation. A phase-I problem in one extra
slack variable produces a strictly feasible start when the supplied point is
not strictly feasible.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

__all__ = ["QuadConstraint", "SocConstraint", "LogConstraints", "ConvexProgram",
           "SolveReport", "solve_convex"]


@dataclass(frozen=True)
class QuadConstraint:
    P: np.ndarray
    q: np.ndarray
    r: float

    def value(self, x):
        return 0.5 * x @ self.P @ x + self.q @ x + self.r


@dataclass(frozen=True)
class SocConstraint:
    M: np.ndarray
    v: np.ndarray
    e: np.ndarray
    f: float

    def value(self, x):
        """``||Mx+v|| - (e^T x + f)``; nonpositive when satisfied."""
        return float(np.linalg.norm(self.M @ x + self.v) - (self.e @ x + self.f))


@dataclass(frozen=True)
class LogConstraints:
    """Batch of ``C_i x + d_i - sum_{group[j] = i} log(M_j x + m0_j) <= 0``."""

    M: sp.csr_matrix
    m0: np.ndarray
    group: np.ndarray
    C: sp.csr_matrix
    d: np.ndarray

    @property
    def count(self) -> int:
        return self.C.shape[0]

    def incidence(self):
        r = self.M.shape[0]
        return sp.csr_matrix((np.ones(r), (self.group, np.arange(r))), shape=(self.count, r))

    def values(self, x):
        u = self.M @ x + self.m0
        if np.any(u <= 0):
            return u, np.full(self.count, np.inf)
        return u, self.C @ x + self.d - np.bincount(self.group, np.log(u), minlength=self.count)


@dataclass
class ConvexProgram:
    n: int
    c: np.ndarray
    Q: Optional[np.ndarray] = None
    G: Optional[sp.csr_matrix] = None
    h: Optional[np.ndarray] = None
    lb: Optional[np.ndarray] = None
    ub: Optional[np.ndarray] = None
    quad: list = field(default_factory=list)
    soc: list = field(default_factory=list)
    log: Optional[LogConstraints] = None
    x0: Optional[np.ndarray] = None
    const: float = 0.0

    def __post_init__(self):
        n = self.n
        self.c = np.asarray(self.c, dtype=float).reshape(n)
        if self.G is None:
            self.G = sp.csr_matrix((0, n))
            self.h = np.zeros(0)
        self.G = sp.csr_matrix(self.G, dtype=float)
        self.h = np.asarray(self.h, dtype=float).reshape(-1)
        self.lb = np.full(n, -np.inf) if self.lb is None else np.asarray(self.lb, float).copy()
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, float).copy()
        if self.Q is not None:
            self.Q = np.asarray(self.Q.toarray() if sp.issparse(self.Q) else self.Q, float)

    def objective(self, x) -> float:
        val = float(self.c @ x) + self.const
        if self.Q is not None:
            val += 0.5 * float(x @ self.Q @ x)
        return val

    def violations(self, x) -> dict:
        """Largest violation per constraint family (0 when satisfied)."""
        x = np.asarray(x, dtype=float)
        out = {"linear": 0.0, "bounds": 0.0, "quad": 0.0, "soc": 0.0, "log": 0.0}
        if self.G.shape[0]:
            out["linear"] = max(0.0, float(np.max(self.G @ x - self.h)))
        out["bounds"] = max(0.0, float(np.max(np.r_[self.lb - x, x - self.ub, -np.inf])))
        for qc in self.quad:
            out["quad"] = max(out["quad"], float(qc.value(x)))
        for sc in self.soc:
            out["soc"] = max(out["soc"], sc.value(x))
        if self.log is not None and self.log.count:
            _, f = self.log.values(x)
            out["log"] = max(0.0, float(np.max(f)))
        return out

    def max_violation(self, x) -> float:
        return max(self.violations(x).values())


@dataclass
class SolveReport:
    status: str                 # optimal | max_iter | infeasible | line_search_failed
    objective: float
    x: np.ndarray
    kkt_residual: float
    iterations: int
    wall_time: float
    gap: float = np.nan
    history: list = field(default_factory=list)
    phase1_tau: float = np.nan
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


# --------------------------------------------------------------------------
# barrier evaluation


_DENSE_MAX = 200


class _Barrier:
    """Objective/barrier oracle for a program without fixed variables."""

    def __init__(self, prog: ConvexProgram):
        self.p = prog
        # small programs run faster on dense arrays than through scipy.sparse
        self.dense = prog.n <= _DENSE_MAX
        self.G = prog.G.toarray() if self.dense else prog.G
        self.GT = self.G.T.copy() if self.dense else prog.G.T.tocsr()
        self.has_lb = np.isfinite(prog.lb)
        self.has_ub = np.isfinite(prog.ub)
        lg = prog.log
        if lg is not None and lg.count:
            if self.dense:
                lg = LogConstraints(lg.M.toarray(), lg.m0, lg.group, lg.C.toarray(), lg.d)
                self.E = prog.log.incidence().toarray()
            else:
                self.E = lg.incidence()
            self.lg = lg
            self.MT = lg.M.T.copy() if self.dense else lg.M.T.tocsr()
        else:
            self.lg = None
        self.m = (prog.G.shape[0] + int(self.has_lb.sum()) + int(self.has_ub.sum())
                  + len(prog.quad) + 2 * len(prog.soc) + (lg.count if self.lg else 0))

    def linear_step_bound(self, x, dx):
        """Largest step keeping linear rows and bounds strictly feasible."""
        smax = np.inf
        if self.G.shape[0]:
            slack = self.p.h - self.G @ x
            gd = self.G @ dx
            pos = gd > 0
            if pos.any():
                smax = min(smax, float(np.min(slack[pos] / gd[pos])))
        lo = self.has_lb & (dx < 0)
        if lo.any():
            smax = min(smax, float(np.min((self.p.lb[lo] - x[lo]) / dx[lo])))
        hi = self.has_ub & (dx > 0)
        if hi.any():
            smax = min(smax, float(np.min((self.p.ub[hi] - x[hi]) / dx[hi])))
        return smax

    def value(self, x, t):
        """``t * f0(x) + phi(x)``; ``inf`` outside the strict interior."""
        p = self.p
        val = t * (p.objective(x) - p.const)
        if self.G.shape[0]:
            s = p.h - self.G @ x
            if np.any(s <= 0):
                return np.inf
            val -= np.sum(np.log(s))
        if self.has_lb.any():
            s = x[self.has_lb] - p.lb[self.has_lb]
            if np.any(s <= 0):
                return np.inf
            val -= np.sum(np.log(s))
        if self.has_ub.any():
            s = p.ub[self.has_ub] - x[self.has_ub]
            if np.any(s <= 0):
                return np.inf
            val -= np.sum(np.log(s))
        for qc in p.quad:
            f = qc.value(x)
            if f >= 0:
                return np.inf
            val -= np.log(-f)
        for sc in p.soc:
            T = sc.e @ x + sc.f
            U = sc.M @ x + sc.v
            s = T * T - U @ U
            if T <= 0 or s <= 0:
                return np.inf
            val -= np.log(s)
        if self.lg is not None:
            _, f = self.lg.values(x)
            if np.any(f >= 0):
                return np.inf
            val -= np.sum(np.log(-f))
        return float(val)

    def derivatives(self, x, t):
        """Gradient and dense Hessian of ``t * f0 + phi`` at an interior x."""
        p = self.p
        n = p.n
        g = t * p.c
        H = np.zeros((n, n))
        if p.Q is not None:
            g = g + t * (p.Q @ x)
            H += t * p.Q
        if self.G.shape[0]:
            s = p.h - self.G @ x
            w = 1.0 / s
            g = g + self.GT @ w
            if self.dense:
                H += (self.GT * (w * w)) @ self.G
            else:
                H += (self.GT @ sp.diags(w * w) @ self.G).toarray()
        diag = np.zeros(n)
        if self.has_lb.any():
            s = x[self.has_lb] - p.lb[self.has_lb]
            g[self.has_lb] -= 1.0 / s
            diag[self.has_lb] += 1.0 / (s * s)
        if self.has_ub.any():
            s = p.ub[self.has_ub] - x[self.has_ub]
            g[self.has_ub] += 1.0 / s
            diag[self.has_ub] += 1.0 / (s * s)
        H[np.diag_indices(n)] += diag
        for qc in p.quad:
            f = qc.value(x)
            gf = qc.P @ x + qc.q
            g = g + gf / (-f)
            H += np.outer(gf, gf) / (f * f) + qc.P / (-f)
        for sc in p.soc:
            T = sc.e @ x + sc.f
            U = sc.M @ x + sc.v
            s = T * T - U @ U
            ds = 2.0 * T * sc.e - 2.0 * (sc.M.T @ U)
            g = g - ds / s
            H += np.outer(ds, ds) / (s * s) - (2.0 * np.outer(sc.e, sc.e) - 2.0 * sc.M.T @ sc.M) / s
        if self.lg is not None:
            lg = self.lg
            u, f = lg.values(x)
            nf = -f
            wj = 1.0 / (nf[lg.group] * u * u)
            if self.dense:
                grad_rows = lg.C - (self.E / u) @ lg.M
                g = g + grad_rows.T @ (1.0 / nf)
                H += (grad_rows.T / nf ** 2) @ grad_rows + (self.MT * wj) @ lg.M
                return np.asarray(g).reshape(n), H
            # gradient rows of every log constraint: C_i - sum_j M_j / u_j
            grad_rows = (lg.C - self.E @ sp.diags(1.0 / u) @ lg.M).tocsr()
            g = g + grad_rows.T @ (1.0 / nf)
            Dg = grad_rows.toarray() if grad_rows.nnz > 0.2 * grad_rows.shape[0] * n else grad_rows
            if sp.issparse(Dg):
                H += (Dg.T @ sp.diags(1.0 / nf ** 2) @ Dg).toarray()
            else:
                H += (Dg.T / nf ** 2) @ Dg
            H += (self.MT @ sp.diags(wj) @ lg.M).toarray()
        return np.asarray(g).reshape(n), H


def _newton_direction(H, g):
    try:
        cf = sla.cho_factor(H, lower=False, check_finite=False)
        return -sla.cho_solve(cf, g, check_finite=False)
    except (np.linalg.LinAlgError, ValueError):
        reg = 1e-12 * max(1.0, float(np.max(np.abs(np.diag(H)))))
        for _ in range(8):
            try:
                cf = sla.cho_factor(H + reg * np.eye(H.shape[0]), lower=False, check_finite=False)
                return -sla.cho_solve(cf, g, check_finite=False)
            except (np.linalg.LinAlgError, ValueError):
                reg *= 100.0
        return -np.linalg.lstsq(H, g, rcond=None)[0]


@dataclass
class _PathState:
    x: np.ndarray
    t: float
    newton: int
    status: str
    stationarity: float
    history: list


def _path_following(bar: _Barrier, x, tol, t0, mu, inner_tol, max_newton, stop=None,
                    log_file=None):
    """Barrier path following from a strictly feasible ``x``.

    ``stop(x)`` ends the loop early (used by phase I).
    """
    t = t0
    newton = 0
    history = []
    m = max(bar.m, 1)
    stationarity = np.inf
    while True:
        # centering
        while True:
            g, H = bar.derivatives(x, t)
            dx = _newton_direction(H, g)
            lam2 = float(-g @ dx)
            stationarity = _rel_stationarity(bar, x, t, g)
            if lam2 / 2.0 <= inner_tol or not np.isfinite(lam2):
                break
            if newton >= max_newton:
                return _PathState(x, t, newton, "max_iter", stationarity, history)
            step = min(1.0, 0.99 * bar.linear_step_bound(x, dx))
            f0 = bar.value(x, t)
            slope = float(g @ dx)
            # near the centre the decrease drops below the rounding level of
            # t*f0; there a full step only needs to stay in the domain
            quadratic = lam2 < 1e-4 and step == 1.0
            while step > 1e-14:
                xn = x + step * dx
                fn = bar.value(xn, t)
                if fn <= f0 + 0.01 * step * slope or (quadratic and np.isfinite(fn)):
                    break
                step *= 0.5
            else:
                return _PathState(x, t, newton, "line_search_failed", stationarity, history)
            x = xn
            newton += 1
            if stop is not None and stop(x):
                return _PathState(x, t, newton, "stopped", stationarity, history)
        obj = bar.p.objective(x)
        history.append(obj)
        if log_file is not None:
            log_file.write(json.dumps({"t": t, "objective": obj, "newton": newton,
                                       "gap": m / t}) + "\n")
        if stop is not None and stop(x):
            return _PathState(x, t, newton, "stopped", stationarity, history)
        if m / t <= tol * max(1.0, abs(obj)):
            return _PathState(x, t, newton, "optimal", stationarity, history)
        t *= mu


def _rel_stationarity(bar: _Barrier, x, t, g):
    """Relative dual residual ``||t grad f0 + grad phi|| / (||t grad f0|| +
    ||grad phi||)``: the barrier dual estimates make it zero on the central
    path, and the ratio is insensitive to the scaling of the program."""
    if g.size == 0:
        return 0.0
    g0 = bar.p.c if bar.p.Q is None else bar.p.c + bar.p.Q @ x
    g0 = t * g0
    den = float(np.max(np.abs(g0)) + np.max(np.abs(g - g0)))
    return float(np.max(np.abs(g))) / den if den > 0 else 0.0


def _polish(bar: _Barrier, x, t, target, max_steps=20):
    """Extra Newton steps at fixed ``t`` until ``||grad||_inf / t <= target``."""
    stat = np.inf
    for k in range(max_steps + 1):
        g, H = bar.derivatives(x, t)
        stat = _rel_stationarity(bar, x, t, g)
        if stat <= target or k == max_steps:
            return x, stat, k
        dx = _newton_direction(H, g)
        step = min(1.0, 0.99 * bar.linear_step_bound(x, dx))
        while step > 1e-14:
            xn = x + step * dx
            if np.isfinite(bar.value(xn, t)):
                break
            step *= 0.5
        else:
            return x, stat, k
        x = xn
    return x, stat, max_steps


# --------------------------------------------------------------------------
# presolve


def _propagate_fixings(prog: ConvexProgram, lb, ub, rounds=5):
    """Fix variables whose feasible interval collapses under the linear rows."""
    G = prog.G.tocsr()
    if G.shape[0] == 0:
        return lb, ub
    for _ in range(rounds):
        changed = False
        for i in range(G.shape[0]):
            lo, hi = G.indptr[i], G.indptr[i + 1]
            cols = G.indices[lo:hi]
            vals = G.data[lo:hi]
            contrib = np.where(vals > 0, vals * lb[cols], vals * ub[cols])
            if not np.all(np.isfinite(contrib)):
                continue
            total = contrib.sum()
            for j, a, cj in zip(cols, vals, contrib):
                if lb[j] == ub[j] or a == 0:
                    continue
                bound = (prog.h[i] - (total - cj)) / a
                if a > 0 and bound <= lb[j] + 1e-12:
                    ub[j] = lb[j]
                    changed = True
                elif a < 0 and bound >= ub[j] - 1e-12:
                    lb[j] = ub[j]
                    changed = True
        if not changed:
            break
    return lb, ub


@dataclass
class _Reduced:
    prog: ConvexProgram
    free: np.ndarray
    fixed_vals: np.ndarray
    infeasible: str = ""

    def lift(self, z):
        x = self.fixed_vals.copy()
        x[self.free] = z
        return x


def _reduce(prog: ConvexProgram, feas_tol=1e-9) -> _Reduced:
    lb, ub = prog.lb.copy(), prog.ub.copy()
    if np.any(lb > ub + feas_tol):
        return _Reduced(prog, np.arange(prog.n), np.zeros(prog.n), "inverted bounds")
    ub = np.maximum(ub, lb)
    lb, ub = _propagate_fixings(prog, lb, ub)
    fixed = lb == ub
    if not fixed.any():
        return _Reduced(prog, np.arange(prog.n), np.zeros(prog.n))
    free = np.flatnonzero(~fixed)
    xf = np.where(fixed, lb, 0.0)
    G = prog.G.tocsc()
    h = prog.h - G @ xf
    Gf = G[:, free].tocsr()
    empty = np.diff(Gf.indptr) == 0
    if np.any(h[empty] < -feas_tol):
        return _Reduced(prog, free, xf, "linear rows violated by fixed variables")
    keep = ~empty
    c = prog.c[free].copy()
    const = prog.const + float(prog.c @ xf)
    Q = None
    if prog.Q is not None:
        Q = prog.Q[np.ix_(free, free)]
        c += (prog.Q @ xf)[free]
        const += 0.5 * float(xf @ prog.Q @ xf)
    quad = []
    for qc in prog.quad:
        quad.append(QuadConstraint(qc.P[np.ix_(free, free)], (qc.q + qc.P @ xf)[free],
                                   qc.r + qc.q @ xf + 0.5 * xf @ qc.P @ xf))
    soc = [SocConstraint(sc.M[:, free], sc.v + sc.M @ xf, sc.e[free], sc.f + sc.e @ xf)
           for sc in prog.soc]
    log = None
    if prog.log is not None and prog.log.count:
        lg = prog.log
        M = lg.M.tocsc()
        C = lg.C.tocsc()
        log = LogConstraints(M[:, free].tocsr(), lg.m0 + M @ xf, lg.group,
                             C[:, free].tocsr(), lg.d + C @ xf)
    x0 = None if prog.x0 is None else np.asarray(prog.x0, float)[free]
    red = ConvexProgram(len(free), c, Q, Gf[keep], h[keep], lb[free], ub[free], quad, soc,
                        log, x0, const)
    return _Reduced(red, free, xf)


# --------------------------------------------------------------------------
# phase I


def _phase1_program(prog: ConvexProgram, x0, radius=1e4) -> ConvexProgram:
    """min tau over (x, tau) with every constraint relaxed by tau.

    Unbounded coordinates get a wide box around ``x0`` so the phase-I barrier
    stays bounded below (a variable that only loosens constraints would
    otherwise run off to infinity).
    """
    n = prog.n
    eye = sp.identity(n, format="csr")
    fl, fu = np.isfinite(prog.lb), np.isfinite(prog.ub)
    rows = [sp.hstack([prog.G, -np.ones((prog.G.shape[0], 1))])]
    rhs = [prog.h]
    r = radius * (1.0 + np.abs(x0))
    if (~fl).any():
        rows.append(sp.hstack([-eye[~fl], sp.csr_matrix((int((~fl).sum()), 1))]))
        rhs.append(-(x0[~fl] - r[~fl]))
    if (~fu).any():
        rows.append(sp.hstack([eye[~fu], sp.csr_matrix((int((~fu).sum()), 1))]))
        rhs.append(x0[~fu] + r[~fu])
    if fl.any():
        rows.append(sp.hstack([-eye[fl], -np.ones((int(fl.sum()), 1))]))
        rhs.append(-prog.lb[fl])
    if fu.any():
        rows.append(sp.hstack([eye[fu], -np.ones((int(fu.sum()), 1))]))
        rhs.append(prog.ub[fu])
    G = sp.vstack(rows).tocsr()
    h = np.concatenate(rhs)
    quad = [QuadConstraint(np.pad(qc.P, ((0, 1), (0, 1))), np.r_[qc.q, -1.0], qc.r)
            for qc in prog.quad]
    soc = [SocConstraint(np.hstack([sc.M, np.zeros((sc.M.shape[0], 1))]), sc.v,
                         np.r_[sc.e, 1.0], sc.f) for sc in prog.soc]
    log = None
    if prog.log is not None and prog.log.count:
        lg = prog.log
        log = LogConstraints(sp.hstack([lg.M, sp.csr_matrix((lg.M.shape[0], 1))]).tocsr(),
                             lg.m0, lg.group,
                             sp.hstack([lg.C, -np.ones((lg.count, 1))]).tocsr(), lg.d)
    lb = np.r_[np.full(n, -np.inf), -1.0]
    c = np.zeros(n + 1)
    c[-1] = 1.0
    return ConvexProgram(n + 1, c, None, G, h, lb, None, quad, soc, log)


def _max_constraint_value(prog: ConvexProgram, x) -> float:
    vals = [-np.inf]
    if prog.G.shape[0]:
        vals.append(float(np.max(prog.G @ x - prog.h)))
    fl, fu = np.isfinite(prog.lb), np.isfinite(prog.ub)
    if fl.any():
        vals.append(float(np.max(prog.lb[fl] - x[fl])))
    if fu.any():
        vals.append(float(np.max(x[fu] - prog.ub[fu])))
    vals += [float(qc.value(x)) for qc in prog.quad]
    vals += [sc.value(x) for sc in prog.soc]
    if prog.log is not None and prog.log.count:
        _, f = prog.log.values(x)
        vals.append(float(np.max(f)))
    return max(vals)


def _default_start(prog: ConvexProgram) -> np.ndarray:
    lb, ub = prog.lb, prog.ub
    x = np.zeros(prog.n)
    both = np.isfinite(lb) & np.isfinite(ub)
    x[both] = 0.5 * (lb[both] + ub[both])
    only_lb = np.isfinite(lb) & ~np.isfinite(ub)
    x[only_lb] = lb[only_lb] + 1.0
    only_ub = ~np.isfinite(lb) & np.isfinite(ub)
    x[only_ub] = ub[only_ub] - 1.0
    return x


# --------------------------------------------------------------------------


def solve_convex(program: ConvexProgram, tol: float = 1e-6, *, t0: float = 1.0,
                 mu: float = 10.0, inner_tol: float = 1e-8, max_newton: int = 500,
                 x0=None, debug_path=None) -> SolveReport:
    """Minimize a :class:`ConvexProgram` with the log-barrier method.

    Parameters
    ----------
    program : ConvexProgram
    tol : float
        Target relative duality gap ``m / (t max(1, |f0|))`` and relative
        stationarity tolerance.
    t0, mu : float
        Initial barrier weight (capped at ``m / max(1, |f0(x0)|)``) and its
        growth factor per outer step.
    inner_tol : float
        Newton-decrement threshold ending each centering.
    x0 : array, optional
        Start point (overrides ``program.x0``). If it is not strictly
        feasible a phase-I problem is solved first.
    debug_path : path, optional
        Append one JSON line per outer iteration.

    Returns
    -------
    SolveReport
        ``status`` is ``optimal``, ``max_iter``, ``infeasible`` or
        ``line_search_failed``; the point returned is always the last
        strictly feasible iterate (or the phase-I point when infeasible).
    """
    t_start = time.perf_counter()
    if x0 is not None:
        program = replace(program, x0=np.asarray(x0, dtype=float))
    red = _reduce(program)

    def report(status, z, kkt=np.nan, iters=0, gap=np.nan, hist=(), tau=np.nan, msg=""):
        x = red.lift(z) if z is not None else red.fixed_vals.copy()
        return SolveReport(status, program.objective(x), x, float(kkt), iters,
                           time.perf_counter() - t_start, gap, list(hist), tau, msg)

    if red.infeasible:
        return report("infeasible", None, msg=red.infeasible)
    prog = red.prog
    if prog.n == 0:
        ok = _max_constraint_value(prog, np.zeros(0)) <= 0 if prog.log is None or \
            prog.log.count == 0 else bool(np.all(prog.log.values(np.zeros(0))[1] <= 0))
        return report("optimal" if ok else "infeasible", np.zeros(0), 0.0, 0, 0.0)

    x = prog.x0 if prog.x0 is not None else _default_start(prog)
    x = np.asarray(x, dtype=float).copy()
    log_file = open(debug_path, "a") if debug_path is not None else None
    try:
        bar = _Barrier(prog)
        iters = 0
        tau = np.nan
        if not np.isfinite(bar.value(x, 0.0)):
            if prog.log is not None and prog.log.count and \
                    np.any(prog.log.M @ x + prog.log.m0 <= 0):
                return report("infeasible", x, msg="log arguments not positive at start")
            p1 = _phase1_program(prog, x)
            bar1 = _Barrier(p1)
            tau0 = max(_max_constraint_value(prog, x), 0.0)
            z = np.r_[x, tau0 + max(1.0, abs(tau0))]
            st = _path_following(bar1, z, tol * 1e-2, t0, mu, inner_tol, max_newton,
                                 stop=lambda zz: zz[-1] < 0.0, log_file=log_file)
            iters += st.newton
            tau = float(st.x[-1])
            if st.status != "stopped" or tau >= 0:
                return report("infeasible", st.x[:-1], iters=iters, tau=tau,
                              msg=f"phase I ended at tau={tau:.3g} ({st.status})")
            x = st.x[:-1]
        # a t0 far above m / |f0| leaves a long damped-Newton phase
        t_start0 = min(t0, bar.m / max(1.0, abs(prog.objective(x))))
        st = _path_following(bar, x, tol, t_start0, mu, inner_tol, max_newton - iters,
                             log_file=log_file)
        iters += st.newton
        gap = bar.m / st.t
        rel_gap = gap / max(1.0, abs(prog.objective(st.x)))
        kkt = max(st.stationarity, rel_gap)
        status = st.status
        if status == "optimal" and kkt > tol:
            xp, stat, k = _polish(bar, st.x, st.t, tol)
            iters += k
            kkt = max(stat, rel_gap)
            st.x = xp
            status = "optimal" if kkt <= tol else "max_iter"
        return report(status, st.x, kkt, iters, gap, st.history, tau)
    finally:
        if log_file is not None:
            log_file.close()
