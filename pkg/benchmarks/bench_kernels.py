"""Time the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py --repeat 20

Both paths are imported in one process, so UAVPLAN_NUMBA does not matter
here. The first numba call (compilation) is excluded.
"""

import argparse
import time

import numpy as np

from uavplan import _kernels as kr


def _cases(rng, scale):
    N, K, L = 50 * scale, 8, 10 * scale
    P = rng.uniform(0, 0.05, (N, K, L))
    g = rng.uniform(0, 1e-9, (N, K, L))
    users = rng.uniform(0, 1000, (N, 2))
    uavs = np.column_stack([rng.uniform(0, 1000, (L, 2)), rng.uniform(21, 100, L)])
    pl_args = (users, uavs, 9.61, 0.16, 1.0, 20.0, 900e6, 4.0, 299792458.0)
    cluster = rng.uniform(400, 500, (5, 2))
    grid = (cluster, np.arange(300.0, 600.0, 2.0), np.arange(300.0, 600.0, 2.0),
            np.arange(21.0, 100.0, 2.0), 1.7)
    assign = kr.all_assignments(3, 3)
    units = 200
    table = rng.uniform(0, 1e6, (3, 3, units + 1)).cumsum(axis=2)
    return {
        "interference": (P, g),
        "pathloss_matrix": pl_args,
        "placement_grid_search": grid,
        "power_grid_search": (table, assign, np.full(3, 1e6), units),
    }


def _flat(res):
    parts = res if isinstance(res, tuple) else (res,)
    return np.concatenate([np.ravel(np.asarray(p, dtype=float)) for p in parts])


def _time(fn, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=10)
    ap.add_argument("--scale", type=int, default=1, help="problem size multiplier")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cases = _cases(np.random.default_rng(args.seed), args.scale)
    print(f"{'kernel':<24}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}  agree")
    for name, inp in cases.items():
        nb, npy = kr.NUMBA_KERNELS[name], kr.NUMPY_KERNELS[name]
        ref = npy(*inp)
        out = nb(*inp)  # compile
        agree = np.allclose(_flat(ref), _flat(out), rtol=1e-9, atol=0)
        t_np = _time(npy, inp, args.repeat)
        t_nb = _time(nb, inp, args.repeat)
        print(f"{name:<24}{t_np * 1e3:>12.3f}{t_nb * 1e3:>12.3f}{t_np / t_nb:>10.1f}  {agree}")


if __name__ == "__main__":
    main()
