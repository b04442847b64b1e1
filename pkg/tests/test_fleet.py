import pytest

from uavplan.config import ConfigError, ENVIRONMENTS, SystemParams
from uavplan.fleet import compute_capacity, compute_num_uavs, compute_num_uavs_vtc, plan_fleet


def test_qos_above_capacity_is_fatal(params):
    with pytest.raises(ConfigError):
        compute_capacity(params.replace(qos_rate=1e9), ENVIRONMENTS["urban"],
                         spectral_efficiency=0.01)


def test_capacity_floor_arithmetic(params):
    lam, r_max, c = compute_capacity(params, ENVIRONMENTS["urban"], spectral_efficiency=0.33)
    assert r_max == pytest.approx(20e6 * 0.33)
    assert c == 6
    _, _, c2 = compute_capacity(params, ENVIRONMENTS["urban"], spectral_efficiency=0.66)
    assert c2 >= 2 * c


def test_capacity_stable_across_seeds(params):
    env = ENVIRONMENTS["urban"]
    a = compute_capacity(params, env, seed=0)
    b = compute_capacity(params, env, seed=1)
    assert a[2] == b[2]


@pytest.mark.parametrize("lam, n, c, want", [(1.0, 30, 7, 5), (0.5, 10, 10, 1), (1.0, 30, 6, 5)])
def test_num_uavs(lam, n, c, want):
    assert compute_num_uavs(SystemParams(n_users=n, serve_fraction=lam), c) == want


def test_num_uavs_inventory_cap():
    assert compute_num_uavs(SystemParams(n_users=30, max_uavs=3), 2) == 3
    with pytest.raises(ValueError):
        compute_num_uavs(SystemParams(), 0)


@pytest.mark.parametrize("n, want", [(30, 4), (8, 1), (50, 7)])
def test_num_uavs_vtc(n, want):
    assert compute_num_uavs_vtc(SystemParams(n_users=n)) == want


def test_n50_identical_across_seeds():
    p = SystemParams(n_users=50)
    env = ENVIRONMENTS["urban"]
    Ls = {plan_fleet(p, env, s).L for s in range(3)}
    assert len(Ls) == 1


def test_monotone_in_n_lambda_and_cmax():
    for c in (1, 3, 6, 9):
        Ls = [compute_num_uavs(SystemParams(n_users=n), c) for n in range(1, 60)]
        assert all(a <= b for a, b in zip(Ls, Ls[1:]))
        lams = [compute_num_uavs(SystemParams(n_users=40, serve_fraction=f), c)
                for f in (0.2, 0.5, 0.8, 1.0)]
        assert lams == sorted(lams)
    byc = [compute_num_uavs(SystemParams(n_users=40), c) for c in range(1, 20)]
    assert all(a >= b for a, b in zip(byc, byc[1:]))


def test_proposed_not_below_vtc_when_cmax_le_k():
    for n in range(1, 60):
        p = SystemParams(n_users=n)
        for c in range(1, p.n_subcarriers + 1):
            assert compute_num_uavs(p, c) >= compute_num_uavs_vtc(p)


def test_pinned_cmax_overrides(params):
    f = plan_fleet(params.replace(c_max=4, n_users=30), ENVIRONMENTS["urban"])
    assert f.c_max == 4 and f.L == 8


def test_table_config_n30():
    f = plan_fleet(SystemParams(n_users=30), ENVIRONMENTS["urban"], 0)
    assert f.L in (4, 5, 6)
    assert plan_fleet(SystemParams(n_users=30), ENVIRONMENTS["urban"], 0, "vtc_baseline").L == 4
