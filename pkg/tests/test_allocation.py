import json
import math

import numpy as np
import pytest

from uavplan.allocation import (AllocationError, RadioAllocation, ScaState, build_sca_subproblem,
                                feasibility_check, init_feasible, linearized_exp,
                                linearized_penalty, optimize_power, round_and_repair,
                                run_algorithm2, sum_rate)
from uavplan.channel import gain_tensor
from uavplan.oracles import power_grid_oracle, small_instance


def waterfill(c, total):
    """max sum log(1 + c_k p_k), sum p_k <= total, by bisection on the level."""
    lo, hi = 0.0, total + 1.0 / c.min()
    for _ in range(200):
        nu = 0.5 * (lo + hi)
        if np.maximum(0.0, nu - 1.0 / c).sum() > total:
            hi = nu
        else:
            lo = nu
    return np.maximum(0.0, lo - 1.0 / c)


def _wf_rate(scenario, plan, A):
    p = scenario.params
    g = gain_tensor(scenario, plan.uavs)
    c = (g[:, :, 0] / p.noise_power)[A[:, :, 0] > 0]
    pw = waterfill(c, p.p_max)
    return p.subcarrier_bandwidth * np.log2(1 + c * pw).sum()


def test_init_feasible_round_robin():
    sc, plan = small_instance(3, 4, 1, seed=0, qos_rate=0.0)
    a = init_feasible(sc, plan)
    # subcarrier k goes to user k mod 3
    assert [int(np.argmax(a.A[:, k, 0])) for k in range(4)] == [0, 1, 2, 0]
    assert np.allclose(a.P[a.A > 0], sc.params.p_max / 4)
    assert np.all(a.P[a.A == 0] == 0)
    # one UAV: no interference, s is the log noise power
    assert np.allclose(a.s, math.log(sc.params.noise_power))
    assert a.mode == "init"


def test_init_feasible_flags_overload():
    sc, plan = small_instance(5, 2, 1, seed=0, qos_rate=0.0)
    a = init_feasible(sc, plan)
    assert any("more users than subcarriers" in f for f in a.flags)


def test_linearized_exp_examples():
    assert linearized_exp(0.0, 0.0) == 1.0
    assert linearized_exp(2.0, 1.0) == pytest.approx(2 * math.e)
    s = np.linspace(-5, 5, 101)
    assert np.all(linearized_exp(s, 0.7) <= np.exp(s) + 1e-12)


def test_linearized_penalty_examples():
    assert linearized_penalty(0.3, 0.3) == pytest.approx(0.3 ** 2 - 0.3)
    assert linearized_penalty(1.0, 1.0) == 0.0
    assert linearized_penalty(0.0, 0.0) == 0.0
    a = np.linspace(0, 1, 51)
    for a_o in (0.0, 0.25, 0.5, 1.0):
        # tangent of a^2 shifted by -a_o
        assert np.all(linearized_penalty(a, a_o) <= a * a - a_o + 1e-12)


def test_single_user_single_subcarrier_closed_form():
    sc, plan = small_instance(1, 1, 1, seed=3, qos_rate=0.0)
    relaxed, state = run_algorithm2(sc, plan)
    out = round_and_repair(relaxed, sc, plan)
    p = sc.params
    g = gain_tensor(sc, plan.uavs)[0, 0, 0]
    want = p.subcarrier_bandwidth * math.log2(1 + p.p_max * g / p.noise_power)
    assert out.A[0, 0, 0] == 1.0
    assert out.P[0, 0, 0] == pytest.approx(p.p_max, rel=1e-4)
    assert sum_rate(out, sc, plan)[0] == pytest.approx(want, rel=1e-5)


@pytest.mark.parametrize("seed", range(3))
def test_single_user_waterfilling(seed):
    sc, plan = small_instance(1, 4, 1, seed=seed, qos_rate=0.0)
    relaxed, _ = run_algorithm2(sc, plan)
    out = round_and_repair(relaxed, sc, plan)
    assert np.all(out.A[0, :, 0] == 1.0)
    assert sum_rate(out, sc, plan)[0] == pytest.approx(_wf_rate(sc, plan, out.A), rel=1e-5)


@pytest.mark.parametrize("seed", range(3))
def test_optimize_power_is_waterfilling_on_one_uav(seed):
    sc, plan = small_instance(3, 5, 1, seed=seed, qos_rate=0.0)
    A = np.zeros((3, 5, 1))
    for k, n in enumerate([0, 1, 2, 0, 1]):
        A[n, k, 0] = 1.0
    out = optimize_power(sc, plan, A)
    assert np.array_equal(out.A, A)
    assert sum_rate(out, sc, plan)[0] == pytest.approx(_wf_rate(sc, plan, A), rel=1e-5)
    assert out.P.sum() <= sc.params.p_max * (1 + 1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_zero_qos_vs_power_grid(seed):
    sc, plan = small_instance(2, 2, 1, seed=seed, qos_rate=0.0)
    best, _, _ = power_grid_oracle(sc, plan, step_w=1e-3)
    relaxed, _ = run_algorithm2(sc, plan)
    got = sum_rate(round_and_repair(relaxed, sc, plan), sc, plan)[0]
    # the lattice is an inner approximation, so the continuous optimum may beat it
    assert got >= 0.95 * best


def test_bnb_exact_small_instance():
    sc, plan = small_instance(2, 2, 1, seed=1, qos_rate=1e6)
    best, _, _ = power_grid_oracle(sc, plan, step_w=1e-3)
    exact, state = run_algorithm2(sc, plan, mode="bnb_exact")
    got = sum_rate(exact, sc, plan)[0]
    assert np.all((exact.A == 0) | (exact.A == 1))
    assert got >= 0.99 * best
    assert feasibility_check(exact, plan, sc)["qos"]["ok"]


def _relaxed_from(sc, plan, A):
    P = A * sc.params.p_max / A.shape[1]
    N, _, L = A.shape
    return RadioAllocation(A, P, np.zeros((N, L)), np.zeros_like(A), 10.0, "relaxed")


def test_rounding_majority_share():
    sc, plan = small_instance(2, 2, 1, seed=0, qos_rate=0.0)
    A = np.zeros((2, 2, 1))
    A[:, 0, 0] = [0.7, 0.3]
    A[:, 1, 0] = [0.2, 0.8]
    out = round_and_repair(_relaxed_from(sc, plan, A), sc, plan)
    assert out.A[:, :, 0].tolist() == [[1.0, 0.0], [0.0, 1.0]]
    assert out.mode == "rounded"


def test_rounding_no_majority_leaves_idle():
    sc, plan = small_instance(3, 2, 1, seed=0, qos_rate=0.0)
    A = np.zeros((3, 2, 1))
    A[:, 0, 0] = [0.4, 0.4, 0.2]
    A[:, 1, 0] = [0.0, 0.9, 0.1]
    out = round_and_repair(_relaxed_from(sc, plan, A), sc, plan)
    # without QoS nobody needs repair, so subcarrier 0 stays idle
    assert out.A[:, 0, 0].sum() == 0
    assert out.A[1, 1, 0] == 1.0
    assert np.all(out.P[:, 0, 0] == 0)


def test_repair_feeds_starving_user():
    sc, plan = small_instance(3, 3, 1, seed=0, qos_rate=1e5)
    A = np.zeros((3, 3, 1))
    A[0, :, 0] = [0.9, 0.9, 0.4]
    A[1, 2, 0] = 0.6
    out = round_and_repair(_relaxed_from(sc, plan, A), sc, plan)
    assert np.all(out.A[:, :, 0].sum(axis=1) >= 1)
    assert np.all(out.A.sum(axis=0) <= 1)
    assert any(f.endswith(" 2") for f in out.flags)
    assert feasibility_check(out, plan, sc)["qos"]["ok"]


def test_qos_unreachable_names_users():
    sc, plan = small_instance(2, 2, 1, seed=0, qos_rate=1e12)
    with pytest.raises(AllocationError) as err:
        run_algorithm2(sc, plan)
    assert set(err.value.users) <= {0, 1} and err.value.users


def test_feasibility_check_examples():
    sc, plan = small_instance(3, 4, 1, seed=0, qos_rate=0.0)
    alloc = init_feasible(sc, plan)
    rep = feasibility_check(alloc, plan, sc)
    assert all(v["ok"] for v in rep.values()), rep
    doubled = RadioAllocation(alloc.A, 2 * alloc.P, alloc.eta, alloc.s, alloc.mu, "x")
    rep = feasibility_check(doubled, plan, sc)
    assert not rep["power_budget"]["ok"]
    assert rep["power_budget"]["max_violation"] == pytest.approx(1.0)
    assert rep["power_coupling"]["ok"]      # P_max / 2 per subcarrier is still <= P_max
    lone = RadioAllocation(alloc.A, alloc.P + 0.01 * (alloc.A == 0), alloc.eta, alloc.s, 0.0, "x")
    assert not feasibility_check(lone, plan, sc)["power_coupling"]["ok"]
    shared = alloc.A.copy()
    shared[:, 0, 0] = 1.0
    rep = feasibility_check(RadioAllocation(shared, alloc.P, alloc.eta, alloc.s, 0.0, "x"),
                            plan, sc)
    assert rep["one_user_per_subcarrier"]["max_violation"] == 2.0
    frac = RadioAllocation(alloc.A * 0.5, alloc.P * 0.5, alloc.eta, alloc.s, 0.0, "x")
    assert not feasibility_check(frac, plan, sc)["binary_shares"]["ok"]
    assert feasibility_check(frac, plan, sc, binary=False)["share_bounds"]["ok"]


def test_feasibility_capacity_cap():
    sc, plan = small_instance(3, 4, 1, seed=0, qos_rate=0.0)
    alloc = init_feasible(sc, plan)
    assert not feasibility_check(alloc, plan, sc, c_max=2)["capacity"]["ok"]
    assert feasibility_check(alloc, plan, sc, c_max=3)["capacity"]["ok"]


@pytest.fixture(scope="module")
def two_uav_run():
    sc, plan = small_instance(4, 4, 2, seed=2, qos_rate=2e5)
    relaxed, state = run_algorithm2(sc, plan)
    return sc, plan, relaxed, state, round_and_repair(relaxed, sc, plan)


def test_history_nondecreasing(two_uav_run):
    _, _, _, state, _ = two_uav_run
    h = np.asarray(state.history)
    assert h.size >= 2
    assert np.all(np.diff(h) >= -1e-6 * np.maximum(1.0, np.abs(h[:-1])))
    assert state.status in ("converged", "max_iter")


def test_true_rate_covers_eta(two_uav_run):
    sc, plan, relaxed, _, _ = two_uav_run
    _, R = sum_rate(relaxed, sc, plan)
    served = plan.J > 0
    assert np.all(R[served] >= relaxed.eta[served] * (1 - 1e-6))


def test_rounded_output_contract(two_uav_run):
    sc, plan, _, _, out = two_uav_run
    assert np.all(out.P[out.A == 0] == 0)
    assert np.all((out.A == 0) | (out.A == 1))
    assert np.all(out.A <= plan.J[:, None, :])
    rep = feasibility_check(out, plan, sc)
    assert max(v["max_violation"] for v in rep.values()) <= 1e-6, rep


def test_subproblem_objective_is_negated_rate():
    sc, plan = small_instance(1, 2, 1, seed=0, qos_rate=0.0)
    state = ScaState(0, np.zeros((1, 2)), np.full((1, 2), 0.5))
    prog = build_sca_subproblem(state, sc, plan, relaxed=False)
    # without the penalty the only objective weight is -1 on eta~
    assert np.count_nonzero(prog.c) == 1 and prog.c[prog.c != 0][0] == -1.0


def test_allocation_json_round_trip(tmp_path, two_uav_run):
    *_, out = two_uav_run
    out.to_json(tmp_path / "a.json")
    back = RadioAllocation.from_dict(json.loads((tmp_path / "a.json").read_text()))
    assert np.array_equal(back.A, out.A) and np.array_equal(back.P, out.P)
    assert back.mode == out.mode and back.flags == out.flags
