"""Experiment runner: one pipeline run per (config, scheme, seed) and sweeps.

Pipeline: scenario -> fleet size -> deployment (or a placement/association
baseline) -> subcarrier and power allocation (or an allocation baseline) ->
metrics. Stage failures become a failed row with a reason instead of an
exception.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import baselines as bl
from .allocation import (AllocationError, RadioAllocation, ScaState, feasibility_check,
                         init_feasible, round_and_repair, run_algorithm2, sum_rate)
from .channel import gain_tensor
from .config import ENVIRONMENTS, ConfigError, EnvironmentParams, SystemParams, generate_scenario
from .deployment import DeploymentError, DeploymentPlan, run_algorithm1
from .fleet import plan_fleet
from .solvers import AssignmentInfeasible

__all__ = [
    "SCHEMES",
    "METRIC_COLUMNS",
    "RunResult",
    "run_pipeline",
    "outage_curve",
    "sweep",
    "summarize",
    "write_metrics",
    "read_metrics",
    "write_trace",
    "write_plan",
    "DEFAULT_THRESHOLDS",
]

log = logging.getLogger(__name__)

SCHEMES = ("proposed",) + bl.BASELINE_TAGS
SWEEP_AXES = ("N", "phi", "environment", "scheme")
DEFAULT_THRESHOLDS = tuple(np.round(np.arange(0.0, 2.01, 0.1), 10))

# column order of metrics.csv
METRIC_COLUMNS = [
    "seed", "scheme", "N", "phi", "environment", "status", "reason", "L", "L_fleet",
    "phi_final", "avg_pathloss_db", "sum_rate", "per_uav_rates", "served_fraction",
    "qos_violations", "max_violation", "outage_curve", "alg1_iterations", "alg2_iterations",
    "t_fleet", "t_deploy", "t_alloc", "t_total",
]
_INT_COLS = {"seed", "N", "L", "L_fleet", "qos_violations", "alg1_iterations", "alg2_iterations"}
_STR_COLS = {"scheme", "environment", "status", "reason"}


@dataclasses.dataclass
class RunResult:
    row: dict
    plan: DeploymentPlan | None = None
    alloc: RadioAllocation | None = None
    traces: dict = dataclasses.field(default_factory=dict)
    sca_state: ScaState | None = None


def outage_curve(spectral_eff, thresholds=DEFAULT_THRESHOLDS):
    """Fraction of users whose spectral efficiency (bit/s/Hz over the whole
    band) lies strictly below each threshold."""
    se = np.asarray(spectral_eff, dtype=float)
    if se.size == 0:
        raise ValueError("need at least one user")
    return [(float(t), float(np.mean(se < t))) for t in thresholds]


def _fmt_list(values):
    return ";".join(repr(float(v)) for v in values)


def _fmt_curve(curve):
    return ";".join(f"{t!r}:{p!r}" for t, p in curve)


def _empty_row(params: SystemParams, env: EnvironmentParams, scheme: str, seed: int) -> dict:
    row = {c: "" for c in METRIC_COLUMNS}
    row.update(seed=int(seed), scheme=scheme, N=params.n_users, phi=params.los_threshold,
               environment=env.name, status="ok", reason="")
    return row


# proposed deployment and allocation are shared by every baseline that only
# swaps a later stage; cached per process
_CACHE: dict = {}


def _proposed_stages(params, env, seed, scenario, fleet, allocate=True):
    key = (repr(params), repr(env), int(seed))
    out = _CACHE.setdefault(key, {})
    if len(_CACHE) > 64:
        _CACHE.clear()
        _CACHE[key] = out
    if "t_deploy" not in out:
        t = time.perf_counter()
        try:
            out["plan"] = run_algorithm1(scenario, fleet.L, c_max=fleet.c_max, seed=seed)
        except (DeploymentError, AssignmentInfeasible) as err:
            out["error"] = ("deployment", str(err))
        out["t_deploy"] = time.perf_counter() - t
    if allocate and "plan" in out and "t_alloc" not in out:
        t = time.perf_counter()
        try:
            relaxed, state = run_algorithm2(scenario, out["plan"])
            out["state"] = state
            out["alloc"] = round_and_repair(relaxed, scenario, out["plan"])
        except AllocationError as err:
            out["error"] = ("allocation", f"{err} users={err.users}")
        out["t_alloc"] = time.perf_counter() - t
    return out


def run_pipeline(params: SystemParams, env: EnvironmentParams, scheme: str = "proposed",
                 seed: int = 0, thresholds=DEFAULT_THRESHOLDS, allocate: bool = True) -> RunResult:
    """Run one (config, scheme, seed) cell. Never raises on stage failures.

    With ``allocate`` off the run stops after deployment (rate columns stay
    empty), which is all that path-loss comparisons need.
    """
    if scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme {scheme!r}; choose from {', '.join(SCHEMES)}")
    row = _empty_row(params, env, scheme, seed)
    res = RunResult(row)
    t0 = time.perf_counter()

    def fail(stage, reason):
        row["status"] = "failed"
        row["reason"] = f"{stage}: {reason}"
        row["t_total"] = time.perf_counter() - t0
        return res

    scenario = generate_scenario(params, env, seed)
    t = time.perf_counter()
    fleet = plan_fleet(params, env, seed, "vtc_baseline" if scheme == "vtc_sizing" else "proposed")
    row["t_fleet"] = time.perf_counter() - t
    row["L_fleet"] = fleet.L

    # deployment stage
    plan = None
    alloc = None
    t = time.perf_counter()
    if scheme in bl.PLACEMENT_TAGS:
        try:
            plan = bl.placement_baseline(scheme, scenario, fleet.L, seed, fleet.c_max)
        except (AssignmentInfeasible, ValueError) as err:
            return fail("deployment", str(err))
    elif scheme == "vtc_sizing":
        try:
            plan = run_algorithm1(scenario, fleet.L, c_max=fleet.c_max, seed=seed)
        except (DeploymentError, AssignmentInfeasible) as err:
            return fail("deployment", str(err))
    else:
        stages = _proposed_stages(params, env, seed, scenario, fleet,
                                  allocate and scheme not in ("random_association",
                                                              "random_subcarrier"))
        if "plan" not in stages:
            return fail(*stages["error"])
        plan = stages["plan"]
        if scheme == "random_association":
            plan = bl.random_association(scenario, plan, seed, fleet.c_max)
    row["t_deploy"] = time.perf_counter() - t
    res.plan = plan
    res.traces["alg1_pathloss_db"] = [10 * math.log10(v) for v in plan.trace]
    row["L"] = plan.L
    row["phi_final"] = plan.phi
    row["alg1_iterations"] = plan.iterations
    row["avg_pathloss_db"] = 10 * math.log10(plan.avg_pathloss)
    row["served_fraction"] = float(plan.J.sum()) / params.n_users
    if not allocate:
        row["t_total"] = time.perf_counter() - t0
        return res

    # allocation stage
    t = time.perf_counter()
    alg2_iter = 0
    try:
        if scheme == "proposed":
            if "alloc" not in stages:
                return fail(*stages["error"])
            alloc = stages["alloc"]
            alg2_iter = stages["state"].iteration
            res.sca_state = stages["state"]
            res.traces["alg2_objective"] = list(stages["state"].history)
        elif scheme in bl.ALLOCATION_TAGS and scheme != "random_subcarrier":
            A = stages["alloc"].A if "alloc" in stages else init_feasible(scenario, plan).A
            alloc = (bl.equal_power(scenario, plan, A) if scheme == "equal_power"
                     else bl.random_power(scenario, plan, A, seed))
            if "alloc" not in stages:
                alloc.flags.append("subcarrier map from round-robin start")
        elif scheme == "random_subcarrier":
            alloc = bl.random_subcarrier(scenario, plan, seed)
        else:
            relaxed, state = run_algorithm2(scenario, plan)
            alloc = round_and_repair(relaxed, scenario, plan)
            alg2_iter = state.iteration
            res.sca_state = state
            res.traces["alg2_objective"] = list(state.history)
    except AllocationError as err:
        row["t_alloc"] = time.perf_counter() - t
        return fail("allocation", f"{err} users={err.users}")
    row["t_alloc"] = (stages.get("t_alloc", 0.0) if scheme == "proposed"
                      else time.perf_counter() - t)
    if scheme == "proposed":
        row["t_deploy"] = stages["t_deploy"]
    res.alloc = alloc
    row["alg2_iterations"] = alg2_iter

    # metrics
    g = gain_tensor(scenario, plan.uavs)
    total, R = sum_rate(alloc, scenario, plan, g)
    row["sum_rate"] = total
    row["per_uav_rates"] = _fmt_list(R.sum(axis=0))
    user_rate = R.sum(axis=1)
    served = plan.J.sum(axis=1) > 0
    qos = params.qos_vector()
    row["qos_violations"] = int(np.sum(served & (user_rate < qos * (1 - 1e-6))))
    checks = feasibility_check(alloc, plan, scenario, g, c_max=fleet.c_max)
    row["max_violation"] = max(c["max_violation"] for c in checks.values())
    row["outage_curve"] = _fmt_curve(outage_curve(user_rate / params.bandwidth_total, thresholds))
    row["t_total"] = time.perf_counter() - t0
    return res


# --------------------------------------------------------------------------
# CSV / JSON emission


def write_metrics(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()
                        if k in METRIC_COLUMNS})


def _parse(col, text):
    if text == "" or col in _STR_COLS or col in ("per_uav_rates", "outage_curve"):
        return text
    if col in _INT_COLS:
        return int(text)
    return float(text)


def read_metrics(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [{k: _parse(k, v) for k, v in r.items()} for r in csv.DictReader(fh)]


def write_trace(res: RunResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["stage", "iteration", "value"])
        for stage, values in res.traces.items():
            for i, v in enumerate(values):
                w.writerow([stage, i, repr(float(v))])


def write_plan(res: RunResult, path) -> None:
    data = {"row": res.row}
    if res.plan is not None:
        data["deployment"] = res.plan.to_dict()
    if res.alloc is not None:
        nz = np.argwhere(res.alloc.A > 0)
        data["allocation"] = {
            "mode": res.alloc.mode,
            "mu": res.alloc.mu,
            "flags": res.alloc.flags,
            "shape": list(res.alloc.A.shape),
            # one entry per active (user, subcarrier, UAV): share and power
            "entries": [[int(n), int(k), int(l), float(res.alloc.A[n, k, l]),
                         float(res.alloc.P[n, k, l])] for n, k, l in nz],
        }
    Path(path).write_text(json.dumps(data, indent=1), encoding="utf-8")


# --------------------------------------------------------------------------
# sweeps


def _cell_config(params, env, axis, value):
    if axis == "N":
        return params.replace(n_users=int(value)), env, None
    if axis == "phi":
        return params.replace(los_threshold=float(value)), env, None
    if axis == "environment":
        if value not in ENVIRONMENTS:
            raise ConfigError(f"unknown environment {value!r}")
        return params, dataclasses.replace(ENVIRONMENTS[value], xi_scale=env.xi_scale), None
    if axis == "scheme":
        if value not in SCHEMES:
            raise ConfigError(f"unknown scheme {value!r}")
        return params, env, value
    raise ConfigError(f"axis must be one of {SWEEP_AXES}")


def _run_cell(args):
    params, env, scheme, seed = args
    return run_pipeline(params, env, scheme, seed)


def sweep(params: SystemParams, env: EnvironmentParams, axis: str, values, seeds,
          scheme: str = "proposed", out_dir=None, jobs: int = 1, seed0: int = 0):
    """Cross product of ``values`` on ``axis`` with ``seeds`` seeds.

    Returns ``(rows, summary)``; with ``out_dir`` the rows go to
    ``metrics.csv``, aggregates to ``summary.csv`` and per-run traces and
    plans next to them.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"axis must be one of {SWEEP_AXES}")
    n_seeds = seeds if isinstance(seeds, int) else None
    seed_list = list(range(seed0, seed0 + n_seeds)) if n_seeds is not None else list(seeds)
    tasks = []
    for v in values:
        p, e, sch = _cell_config(params, env, axis, v)
        for s in seed_list:
            tasks.append((p, e, sch or scheme, s))
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            results = list(ex.map(_run_cell, tasks))
    else:
        results = [_run_cell(t) for t in tasks]
    rows = [r.row for r in results]
    summary = summarize(rows, axis)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_metrics(rows, out / "metrics.csv")
        _write_summary(summary, out / "summary.csv")
        for res in results:
            tag = f"{res.row['scheme']}_{_axis_value(res.row, axis)}_{res.row['seed']}"
            write_trace(res, out / f"trace_{tag}.csv")
            write_plan(res, out / f"plan_{tag}.json")
    return rows, summary


def _axis_value(row, axis):
    # every sweep axis is also a metrics column
    return row[axis]


SUMMARY_METRICS = ("avg_pathloss_db", "sum_rate", "L", "served_fraction")


def summarize(rows, axis: str):
    """Mean and standard error per axis value over successful runs; failed
    runs are only counted."""
    cells = {}
    for r in rows:
        cells.setdefault((_axis_value(r, axis), r["scheme"]), []).append(r)
    out = []
    for (value, scheme), group in cells.items():
        ok = [r for r in group if r["status"] == "ok"]
        rec = {"axis": axis, "value": value, "scheme": scheme, "runs": len(group),
               "failures": len(group) - len(ok)}
        for m in SUMMARY_METRICS:
            vals = np.array([float(r[m]) for r in ok], dtype=float)
            rec[f"{m}_mean"] = float(vals.mean()) if vals.size else float("nan")
            rec[f"{m}_stderr"] = (float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1
                                  else float("nan"))
        out.append(rec)
    return out


def _write_summary(summary, path):
    if not summary:
        Path(path).write_text("")
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(summary[0]))
        w.writeheader()
        for r in summary:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
