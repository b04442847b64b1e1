"""Capacitated user-to-UAV assignment as a min-cost flow with lower bounds.

Network: source -> user (cap 1) -> UAV (cost = squared distance, only on
allowed pairs) -> sink with per-UAV bounds [cap_lo, cap_hi], closed by a
sink -> source arc with lower bound ``min_total``. Lower bounds are turned
into node supplies and the resulting transportation problem is solved by
successive shortest paths with Johnson potentials. The constraint matrix is
totally unimodular, so the flow optimum is the integer optimum.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

__all__ = ["AssignmentProblem", "AssignmentInfeasible", "solve_assignment", "max_served",
           "assignment_cost"]


class AssignmentInfeasible(RuntimeError):
    """No assignment satisfies coverage, capacities and the served minimum."""


@dataclass(frozen=True)
class AssignmentProblem:
    cost: np.ndarray      # (N, L) squared distances
    allowed: np.ndarray   # (N, L) bool coverage mask
    cap_lo: np.ndarray    # (L,)
    cap_hi: np.ndarray    # (L,)
    min_total: int

    def __post_init__(self):
        cost = np.asarray(self.cost, dtype=float)
        if cost.ndim != 2:
            raise ValueError("cost must be an N x L matrix")
        n_u, n_l = cost.shape
        allowed = np.asarray(self.allowed, dtype=bool).reshape(n_u, n_l)
        lo = np.broadcast_to(np.asarray(self.cap_lo, dtype=np.int64), (n_l,)).copy()
        hi = np.broadcast_to(np.asarray(self.cap_hi, dtype=np.int64), (n_l,)).copy()
        if np.any(cost[allowed] < 0):
            raise ValueError("costs must be nonnegative")
        if np.any(lo < 0) or np.any(lo > hi):
            raise ValueError("need 0 <= cap_lo <= cap_hi")
        if self.min_total > min(n_u, hi.sum()):
            raise ValueError("min_total exceeds N or the total capacity")
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "allowed", allowed)
        object.__setattr__(self, "cap_lo", lo)
        object.__setattr__(self, "cap_hi", hi)
        object.__setattr__(self, "min_total", int(self.min_total))

    @property
    def shape(self):
        return self.cost.shape


def assignment_cost(problem: AssignmentProblem, J) -> float:
    return float(np.sum(np.asarray(J) * np.where(problem.allowed, problem.cost, 0.0)))


class _Graph:
    def __init__(self, n_nodes):
        self.adj = [[] for _ in range(n_nodes)]
        self.to = []
        self.cap = []
        self.cost = []

    def add(self, u, v, cap, cost):
        self.adj[u].append(len(self.to))
        self.to.append(v)
        self.cap.append(cap)
        self.cost.append(cost)
        self.adj[v].append(len(self.to))
        self.to.append(u)
        self.cap.append(0)
        self.cost.append(-cost)
        return len(self.to) - 2


def _min_cost_flow(g: _Graph, s: int, t: int, need: int):
    """Push ``need`` units from s to t at minimum cost; returns units sent."""
    n = len(g.adj)
    pot = [0.0] * n  # all forward costs are >= 0, so zero potentials are valid
    sent = 0
    while sent < need:
        dist = [np.inf] * n
        prev = [-1] * n
        dist[s] = 0.0
        heap = [(0.0, s)]
        while heap:
            d, u = heapq.heappop(heap)
            if d > dist[u]:
                continue
            for e in g.adj[u]:
                if g.cap[e] <= 0:
                    continue
                v = g.to[e]
                nd = d + max(0.0, g.cost[e] + pot[u] - pot[v])
                if nd < dist[v] - 1e-12:
                    dist[v] = nd
                    prev[v] = e
                    heapq.heappush(heap, (nd, v))
        if dist[t] == np.inf:
            break
        for v in range(n):
            if dist[v] < np.inf:
                pot[v] += dist[v]
        # bottleneck along the path
        push = need - sent
        v = t
        while v != s:
            e = prev[v]
            push = min(push, g.cap[e])
            v = g.to[e ^ 1]
        v = t
        while v != s:
            e = prev[v]
            g.cap[e] -= push
            g.cap[e ^ 1] += push
            v = g.to[e ^ 1]
        sent += push
    return sent


def solve_assignment(problem: AssignmentProblem) -> np.ndarray:
    """Minimum-cost binary association matrix J (N x L).

    Each user is served at most once, UAV ``l`` serves between ``cap_lo[l]``
    and ``cap_hi[l]`` users, at least ``min_total`` users are served, and
    only allowed pairs are used.

    Raises
    ------
    AssignmentInfeasible
        When the mask and capacities cannot meet the bounds.
    """
    n_u, n_l = problem.shape
    src, snk = 0, 1 + n_u + n_l
    ss, tt = snk + 1, snk + 2
    user = lambda n: 1 + n  # noqa: E731
    uav = lambda l: 1 + n_u + l  # noqa: E731

    g = _Graph(snk + 3)
    excess = np.zeros(snk + 3, dtype=np.int64)
    for n in range(n_u):
        g.add(src, user(n), 1, 0.0)
    pair_arc = {}
    # insertion order fixes the tie-breaking: lowest user, then lowest UAV
    for n in range(n_u):
        for l in range(n_l):
            if problem.allowed[n, l]:
                pair_arc[n, l] = g.add(user(n), uav(l), 1, float(problem.cost[n, l]))
    for l in range(n_l):
        lo, hi = int(problem.cap_lo[l]), int(problem.cap_hi[l])
        g.add(uav(l), snk, hi - lo, 0.0)
        excess[snk] += lo
        excess[uav(l)] -= lo
    g.add(snk, src, n_u - problem.min_total, 0.0)
    excess[src] += problem.min_total
    excess[snk] -= problem.min_total

    need = 0
    for v in range(snk + 1):
        if excess[v] > 0:
            g.add(ss, v, int(excess[v]), 0.0)
            need += int(excess[v])
        elif excess[v] < 0:
            g.add(v, tt, int(-excess[v]), 0.0)
    sent = _min_cost_flow(g, ss, tt, need)
    if sent < need:
        raise AssignmentInfeasible(
            f"coverage mask and capacities cannot serve {problem.min_total} users "
            f"(lower bounds {problem.cap_lo.tolist()})")

    J = np.zeros((n_u, n_l), dtype=np.int64)
    for (n, l), e in pair_arc.items():
        if g.cap[e] == 0:
            J[n, l] = 1
    return J


def max_served(problem: AssignmentProblem) -> np.ndarray:
    """A maximum-cardinality association respecting mask and ``cap_hi``
    (lower bounds ignored). Used to locate users no UAV can absorb."""
    n_u, n_l = problem.shape
    src, snk = 0, 1 + n_u + n_l
    g = _Graph(snk + 1)
    for n in range(n_u):
        g.add(src, 1 + n, 1, 0.0)
    pair_arc = {}
    for n in range(n_u):
        for l in range(n_l):
            if problem.allowed[n, l]:
                pair_arc[n, l] = g.add(1 + n, 1 + n_u + l, 1, float(problem.cost[n, l]))
    for l in range(n_l):
        g.add(1 + n_u + l, snk, int(problem.cap_hi[l]), 0.0)
    _min_cost_flow(g, src, snk, n_u)
    J = np.zeros((n_u, n_l), dtype=np.int64)
    for (n, l), e in pair_arc.items():
        if g.cap[e] == 0:
            J[n, l] = 1
    return J
