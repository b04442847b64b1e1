import itertools

import numpy as np
import pytest
import scipy.sparse as sp

from uavplan.oracles import enumerate_assignment
from uavplan.solvers import (AssignmentInfeasible, AssignmentProblem, ConvexProgram,
                             LogConstraints, QuadConstraint, SocConstraint, assignment_cost,
                             solve_assignment, solve_binary_bnb, solve_convex)

cp = pytest.importorskip("cvxpy")


# --------------------------------------------------------------------------
# assignment


def _check_feasible(prob, J):
    assert set(np.unique(J)) <= {0, 1}
    assert np.all(J.sum(axis=1) <= 1)
    cnt = J.sum(axis=0)
    assert np.all(cnt >= prob.cap_lo) and np.all(cnt <= prob.cap_hi)
    assert J.sum() >= prob.min_total
    assert not np.any(J[~prob.allowed])


def test_assignment_forced():
    prob = AssignmentProblem(np.array([[4.0], [9.0]]), np.ones((2, 1), bool), np.array([0]),
                             np.array([2]), 2)
    J = solve_assignment(prob)
    assert J.tolist() == [[1], [1]]
    assert assignment_cost(prob, J) == 13.0


def test_assignment_nothing_allowed():
    prob = AssignmentProblem(np.ones((3, 2)), np.zeros((3, 2), bool), np.zeros(2, int),
                             np.full(2, 3), 1)
    with pytest.raises(AssignmentInfeasible):
        solve_assignment(prob)


def test_assignment_lower_bounds_force_costly_choice():
    # both users prefer UAV 0, but UAV 1 must serve at least one
    cost = np.array([[1.0, 10.0], [1.0, 3.0]])
    prob = AssignmentProblem(cost, np.ones((2, 2), bool), np.array([1, 1]), np.array([2, 2]), 2)
    J = solve_assignment(prob)
    assert J.tolist() == [[1, 0], [0, 1]]


def _random_assignment(rng, n, L):
    cost = rng.uniform(0, 100, (n, L)).round(1)
    allowed = rng.uniform(size=(n, L)) < 0.75
    lo = rng.integers(0, 2, L)
    hi = lo + rng.integers(1, 4, L)
    need = int(rng.integers(0, min(n, hi.sum()) + 1))
    return AssignmentProblem(cost, allowed, lo, hi, need)


@pytest.mark.parametrize("seed", range(30))
def test_assignment_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    prob = _random_assignment(rng, int(rng.integers(1, 7)), int(rng.integers(1, 3)))
    best, _ = enumerate_assignment(prob.cost, prob.allowed, prob.cap_lo, prob.cap_hi,
                                   prob.min_total)
    if not np.isfinite(best):
        with pytest.raises(AssignmentInfeasible):
            solve_assignment(prob)
        return
    J = solve_assignment(prob)
    _check_feasible(prob, J)
    assert assignment_cost(prob, J) == pytest.approx(best, abs=1e-9)


def test_assignment_tie_break_lowest_index():
    prob = AssignmentProblem(np.ones((3, 2)), np.ones((3, 2), bool), np.zeros(2, int),
                             np.array([1, 1]), 1)
    J1 = solve_assignment(prob)
    J2 = solve_assignment(prob)
    assert np.array_equal(J1, J2)
    assert J1.sum() == 1


# --------------------------------------------------------------------------
# barrier method


def test_lp_corner():
    prog = ConvexProgram(1, np.array([1.0]), lb=np.array([3.0]), ub=np.array([10.0]))
    rep = solve_convex(prog, 1e-7, x0=np.array([5.0]))
    assert rep.status == "optimal"
    assert rep.x[0] == pytest.approx(3.0, abs=1e-6)


def test_box_qp_interior():
    c = np.array([0.3, -0.2, 0.5])
    # ||x - c||^2 = x^T x - 2 c^T x + c^T c
    prog = ConvexProgram(3, -2 * c, Q=2 * np.eye(3), lb=-np.ones(3), ub=np.ones(3),
                         const=float(c @ c))
    rep = solve_convex(prog, 1e-7, x0=np.zeros(3))
    assert rep.status == "optimal"
    assert np.allclose(rep.x, c, atol=1e-6)
    assert rep.objective == pytest.approx(0.0, abs=1e-6)


def test_tight_tolerance_reports_budget_honestly():
    # below the attainable stationarity floor the solver says max_iter, and
    # the point it returns is still feasible and near-optimal
    rep = solve_convex(_log_program(), 1e-10, x0=np.array([0.2, 0.3, -1.0, -1.0]))
    assert rep.status in ("optimal", "max_iter")
    if rep.status == "optimal":
        assert rep.kkt_residual <= 1e-10
    assert _log_program().max_violation(rep.x) <= 1e-9
    assert rep.x[0] == pytest.approx(0.5, abs=1e-6)


def test_large_objective_scale_converges():
    # min ||x - c||^2 inside a cone with |f0| ~ 1e5 at the start: a unit t0
    # would spend the whole Newton budget in the first centering
    c = np.array([800.0, 300.0, 0.0])
    soc = [SocConstraint(np.array([[1.0, 0, 0], [0, 1.0, 0]]), np.array([-500.0, -500.0]),
                         np.array([0, 0, 1.0]), 0.0)]
    prog = ConvexProgram(3, -2 * c, Q=2 * np.eye(3), lb=np.array([0, 0, 21.0]),
                         ub=np.array([1000, 1000, 100.0]), soc=soc, const=float(c @ c))
    rep = solve_convex(prog, 1e-7, x0=np.array([500.0, 500.0, 90.0]))
    assert rep.status == "optimal"
    # projection onto {||xy - (500,500)|| <= h, h <= 100} lands on the rim at h = 100
    d = c[:2] - 500.0
    want = 500.0 + 100.0 * d / np.linalg.norm(d)
    assert rep.x[:2] == pytest.approx(want, abs=1e-3)
    assert rep.x[2] == pytest.approx(100.0, abs=1e-3)


def _log_program():
    # max log(1+x) + log(1+y), x + y <= 1; variables (x, y, t1, t2)
    M = sp.csr_matrix(np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0]]))
    C = sp.csr_matrix(np.array([[0, 0, 1.0, 0], [0, 0, 0, 1.0]]))
    log = LogConstraints(M, np.ones(2), np.array([0, 1]), C, np.zeros(2))
    G = sp.csr_matrix(np.array([[1.0, 1.0, 0, 0]]))
    lb = np.array([0.0, 0.0, -np.inf, -np.inf])
    return ConvexProgram(4, np.array([0, 0, -1.0, -1.0]), G=G, h=np.array([1.0]), lb=lb, log=log)


def test_log_program_symmetric_split():
    rep = solve_convex(_log_program(), 1e-7, x0=np.array([0.2, 0.3, -1.0, -1.0]))
    assert rep.status == "optimal"
    assert rep.x[0] == pytest.approx(0.5, abs=1e-5)
    assert rep.x[1] == pytest.approx(0.5, abs=1e-5)
    assert -rep.objective == pytest.approx(2 * np.log(1.5), abs=1e-7)


def test_infeasible_start_goes_through_phase_one():
    rep = solve_convex(_log_program(), 1e-7, x0=np.array([2.0, 2.0, 5.0, 5.0]))
    assert rep.status == "optimal"
    assert rep.x[0] == pytest.approx(0.5, abs=1e-5)


def test_infeasible_program_reported():
    G = sp.csr_matrix(np.array([[1.0], [-1.0]]))
    prog = ConvexProgram(1, np.array([1.0]), G=G, h=np.array([-1.0, -1.0]))
    rep = solve_convex(prog, 1e-7, x0=np.array([0.0]))
    assert rep.status == "infeasible"


def test_optimal_point_is_feasible_and_gap_small():
    rep = solve_convex(_log_program(), 1e-7, x0=np.array([0.1, 0.1, -1.0, -1.0]))
    assert rep.ok
    assert _log_program().max_violation(rep.x) <= 1e-7
    assert rep.kkt_residual <= 1e-7


def test_outer_objective_history_monotone():
    rep = solve_convex(_log_program(), 1e-7, x0=np.array([0.1, 0.1, -1.0, -1.0]))
    h = np.asarray(rep.history, dtype=float)
    if h.ndim > 1:
        h = h[:, 0]
    assert h.size >= 2
    assert np.all(np.diff(h) <= 1e-9 * np.maximum(1.0, np.abs(h[:-1])))


@pytest.mark.parametrize("seed", range(6))
def test_random_qcqp_vs_cvxpy(seed):
    rng = np.random.default_rng(seed)
    n = 4
    A = rng.normal(size=(n, n))
    Q = A @ A.T + 0.1 * np.eye(n)
    c = rng.normal(size=n)
    B = rng.normal(size=(n, n))
    P = B @ B.T
    G = rng.normal(size=(3, n))
    h = np.abs(rng.normal(size=3)) + 0.5
    quad = [QuadConstraint(P, np.zeros(n), -1.0)]
    M = rng.normal(size=(2, n))
    soc = [SocConstraint(M, np.zeros(2), np.zeros(n), 2.0)]
    prog = ConvexProgram(n, c, Q=Q, G=sp.csr_matrix(G), h=h, lb=-3 * np.ones(n),
                         ub=3 * np.ones(n), quad=quad, soc=soc)
    rep = solve_convex(prog, 1e-7, x0=np.zeros(n))
    assert rep.status == "optimal"

    x = cp.Variable(n)
    obj = 0.5 * cp.quad_form(x, Q) + c @ x
    cons = [G @ x <= h, x >= -3, x <= 3, 0.5 * cp.quad_form(x, P) <= 1.0,
            cp.norm(M @ x) <= 2.0]
    ref = cp.Problem(cp.Minimize(obj), cons)
    ref.solve()
    assert rep.objective == pytest.approx(ref.value, abs=1e-6 * max(1, abs(ref.value)))


@pytest.mark.parametrize("seed", range(4))
def test_random_log_program_vs_cvxpy(seed):
    # max sum_i w_i log(1 + g_i x_i)  s.t. sum x_i <= 1, x >= 0
    rng = np.random.default_rng(100 + seed)
    m = 4
    gvals = rng.uniform(0.5, 20, m)
    w = rng.uniform(0.5, 2, m)
    n = 2 * m
    M = sp.hstack([sp.diags(gvals), sp.csr_matrix((m, m))]).tocsr()
    C = sp.hstack([sp.csr_matrix((m, m)), sp.eye(m)]).tocsr()
    log = LogConstraints(M, np.ones(m), np.arange(m), C, np.zeros(m))
    G = sp.csr_matrix(np.r_[np.ones(m), np.zeros(m)][None, :])
    lb = np.r_[np.zeros(m), np.full(m, -np.inf)]
    prog = ConvexProgram(n, np.r_[np.zeros(m), -w], G=G, h=np.array([1.0]), lb=lb, log=log)
    rep = solve_convex(prog, 1e-7, x0=np.r_[np.full(m, 0.1), np.full(m, -1.0)])
    assert rep.status == "optimal"

    x = cp.Variable(m)
    ref = cp.Problem(cp.Maximize(w @ cp.log(1 + cp.multiply(gvals, x))), [cp.sum(x) <= 1, x >= 0])
    ref.solve()
    assert -rep.objective == pytest.approx(ref.value, abs=1e-6)


# --------------------------------------------------------------------------
# branch and bound


def test_bnb_all_fixed_equals_convex():
    prog = _log_program()
    prog.lb[0] = prog.ub[0] = 1.0
    prog.lb[1] = prog.ub[1] = 0.0
    rep_c = solve_convex(prog, 1e-7, x0=np.array([1.0, 0.0, -1.0, -1.0]))
    rep_b = solve_binary_bnb(prog, [0, 1], 1e-7)
    assert rep_b.objective == pytest.approx(rep_c.objective, abs=1e-7)


def test_bnb_two_binary_knapsack():
    # min -(3 z0 + 2 z1 + y) s.t. 2 z0 + 2 z1 + y <= 3, y in [0, 1]
    values = np.array([3.0, 2.0, 1.0])
    G = sp.csr_matrix(np.array([[2.0, 2.0, 1.0]]))
    prog = ConvexProgram(3, -values, G=G, h=np.array([3.0]), lb=np.zeros(3), ub=np.ones(3),
                         x0=np.array([0.3, 0.3, 0.3]))
    best = np.inf
    for z in itertools.product((0, 1), repeat=2):
        room = 3 - 2 * sum(z)
        if room < 0:
            continue
        best = min(best, -(3 * z[0] + 2 * z[1] + min(1.0, room)))
    rep = solve_binary_bnb(prog, [0, 1], 1e-7)
    assert rep.objective == pytest.approx(best, abs=1e-6)
    assert np.allclose(rep.x[:2], np.round(rep.x[:2]))


def test_bnb_not_better_than_relaxation():
    G = sp.csr_matrix(np.array([[2.0, 2.0, 1.0]]))
    prog = ConvexProgram(3, -np.array([3.0, 2.0, 1.0]), G=G, h=np.array([3.0]),
                         lb=np.zeros(3), ub=np.ones(3), x0=np.full(3, 0.3))
    relax = solve_convex(prog, 1e-7)
    rep = solve_binary_bnb(prog, [0, 1], 1e-7)
    # minimization: the binary optimum cannot beat its relaxation
    assert rep.objective >= relax.objective - 1e-7
