"""Best-first branch-and-bound over binary variables of a convex program."""

from __future__ import annotations

import heapq
import itertools
import time
from dataclasses import replace

import numpy as np

from .barrier import ConvexProgram, SolveReport, solve_convex

__all__ = ["solve_binary_bnb"]


def _fix(program: ConvexProgram, fixings: dict) -> ConvexProgram:
    lb, ub = program.lb.copy(), program.ub.copy()
    for j, v in fixings.items():
        lb[j] = ub[j] = v
    return replace(program, lb=lb, ub=ub)


def solve_binary_bnb(program: ConvexProgram, binary_idx, tol: float = 1e-6,
                     max_nodes: int = 5000, int_tol: float = 1e-4,
                     rounding=None, incumbent=None) -> SolveReport:
    """Exact minimum of ``program`` with ``x[binary_idx]`` restricted to {0, 1}.

    Nodes are explored best-bound first and branched on the most fractional
    binary. ``rounding(x) -> x`` may supply a candidate incumbent from a node
    relaxation (it is re-solved with its binaries fixed); ``incumbent`` is a
    starting point treated the same way before the root. On budget exhaustion
    the best incumbent is returned with status ``max_iter``.
    """
    t_start = time.perf_counter()
    binary_idx = np.asarray(binary_idx, dtype=np.int64)
    lb = program.lb.copy()
    ub = program.ub.copy()
    lb[binary_idx] = np.maximum(lb[binary_idx], 0.0)
    ub[binary_idx] = np.minimum(ub[binary_idx], 1.0)
    program = replace(program, lb=lb, ub=ub)

    best = None
    upper = np.inf
    counter = itertools.count()
    nodes = 0
    total_newton = 0

    def try_incumbent(x, fixings):
        nonlocal best, upper, total_newton
        fix = dict(fixings)
        for j in binary_idx:
            fix[int(j)] = float(round(x[j]))
        rep = solve_convex(_fix(program, fix), tol, x0=x)
        total_newton += rep.iterations
        # a budget-limited solve still yields a feasible point and a valid value
        ok = rep.status == "optimal" or (rep.status == "max_iter" and
                                         program.max_violation(rep.x) <= tol)
        if ok and rep.objective < upper:
            best, upper = rep, rep.objective

    if incumbent is not None:
        try_incumbent(np.asarray(incumbent, dtype=float), {})
    root = solve_convex(program, tol)
    total_newton += root.iterations
    if root.status == "infeasible":
        root.wall_time = time.perf_counter() - t_start
        return root
    heap = [(root.objective, next(counter), {}, root)]
    while heap:
        bound, _, fixings, rep = heapq.heappop(heap)
        if bound >= upper - tol:
            continue
        nodes += 1
        if nodes > max_nodes:
            break
        xb = rep.x[binary_idx]
        frac = np.abs(xb - np.round(xb))
        if np.all(frac <= int_tol):
            try_incumbent(rep.x, fixings)
            continue
        if rounding is not None:
            try_incumbent(rounding(rep.x), fixings)
        j = int(binary_idx[int(np.argmax(frac))])
        for v in (float(rep.x[j] >= 0.5), float(rep.x[j] < 0.5)):
            child_fix = dict(fixings)
            child_fix[j] = v
            x0 = rep.x.copy()
            x0[j] = v
            child = solve_convex(_fix(program, child_fix), tol, x0=x0)
            total_newton += child.iterations
            if child.status == "infeasible":
                continue
            if child.objective < upper - tol:
                heapq.heappush(heap, (child.objective, next(counter), child_fix, child))

    elapsed = time.perf_counter() - t_start
    if best is None:
        status = "max_iter" if nodes > max_nodes else "infeasible"
        return SolveReport(status, np.inf, root.x, np.nan, total_newton, elapsed,
                           message=f"no integral incumbent after {nodes} nodes")
    status = "max_iter" if nodes > max_nodes else "optimal"
    return SolveReport(status, best.objective, best.x, best.kkt_residual, total_newton,
                       elapsed, best.gap, message=f"{nodes} nodes")
