import os
import subprocess
import sys

import numpy as np
import pytest

from uavplan import _kernels as kn

pytest.importorskip("numba")


def test_interference_paths_agree(rng):
    P = rng.uniform(0, 0.1, (9, 4, 3))
    g = rng.uniform(0, 1e-10, P.shape)
    a = kn.NUMBA_KERNELS["interference"](P, g)
    b = kn.NUMPY_KERNELS["interference"](P, g)
    assert np.allclose(a, b, rtol=1e-12, atol=0)


def test_pathloss_paths_agree(rng):
    users = rng.uniform(0, 1000, (20, 2))
    uavs = np.column_stack([rng.uniform(0, 1000, (4, 2)), rng.uniform(21, 100, 4)])
    args = (9.61, 0.16, 1.0, 20.0, 9e8, 4.0, 299792458.0)
    a = kn.NUMBA_KERNELS["pathloss_matrix"](users, uavs, *args)
    b = kn.NUMPY_KERNELS["pathloss_matrix"](users, uavs, *args)
    assert np.allclose(a, b, rtol=1e-12, atol=0)


def test_placement_grid_paths_agree(rng):
    users = rng.uniform(480, 520, (4, 2))
    xs = np.arange(470.0, 531.0)
    ys = np.arange(470.0, 531.0)
    hs = np.arange(21.0, 60.0)
    a = kn.NUMBA_KERNELS["placement_grid_search"](users, xs, ys, hs, 1.7)
    b = kn.NUMPY_KERNELS["placement_grid_search"](users, xs, ys, hs, 1.7)
    assert a[0] == pytest.approx(b[0], rel=1e-12)
    assert tuple(a[1:]) == tuple(b[1:])


def test_placement_grid_infeasible():
    users = np.array([[0.0, 0.0], [1000.0, 0.0]])
    res = kn.NUMPY_KERNELS["placement_grid_search"](users, np.arange(0.0, 1001, 50),
                                                    np.zeros(1), np.arange(21.0, 101), 1.0)
    assert res[0] == np.inf


def test_power_grid_paths_agree(rng):
    table = np.sort(rng.uniform(0, 5e6, (3, 2, 11)), axis=2)
    table[:, :, 0] = 0.0
    assign = kn.all_assignments(2, 3)
    qos = np.array([1e6, 1e6])
    a = kn.NUMBA_KERNELS["power_grid_search"](table, assign, qos, 10)
    b = kn.NUMPY_KERNELS["power_grid_search"](table, assign, qos, 10)
    assert a[0] == pytest.approx(b[0], rel=1e-12)
    # ties may pick different maps, but both must reach the same optimum
    assert a[0] > 0


def test_all_assignments_shape():
    A = kn.all_assignments(2, 3)
    assert A.shape == (27, 3)
    assert A.min() == -1 and A.max() == 1
    assert len({tuple(r) for r in A}) == 27


@pytest.mark.parametrize("flag, want", [("0", "False"), ("1", "True"), ("off", "False")])
def test_env_flag_selects_path(flag, want):
    env = dict(os.environ, UAVPLAN_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c",
                          "from uavplan import _kernels as k; print(k.USE_NUMBA, "
                          "k._ACTIVE is k.NUMBA_KERNELS)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == [want, want]
