"""Command line entry point.

    uavplan run --config cfg.toml --scheme proposed --seed 3 --out runs/
    uavplan sweep --config cfg.toml --axis N --values 10,20,30 --seeds 20 --out runs/

Exit status: 0 when every run succeeded, 2 when some runs failed, 1 on a
bad configuration.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness
from .config import ConfigError, ENVIRONMENTS, SystemParams, load_config

log = logging.getLogger("uavplan")


def _config(path):
    if path is None:
        return SystemParams(), ENVIRONMENTS["urban"]
    return load_config(path)


def _u64(text):
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors; 2 is kept for partial failure
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="uavplan", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="single pipeline run")
    run.add_argument("--config", type=Path, help="TOML configuration (defaults if omitted)")
    run.add_argument("--scheme", default="proposed", help=", ".join(harness.SCHEMES))
    run.add_argument("--seed", type=_u64, default=0)
    run.add_argument("--out", type=Path, default=Path("."))

    sw = sub.add_parser("sweep", help="parameter sweep over seeds")
    sw.add_argument("--config", type=Path)
    sw.add_argument("--axis", required=True, choices=harness.SWEEP_AXES)
    sw.add_argument("--values", required=True, help="comma separated axis values")
    sw.add_argument("--seeds", type=int, default=20)
    sw.add_argument("--seed0", type=_u64, default=0, help="first seed")
    sw.add_argument("--scheme", default="proposed")
    sw.add_argument("--jobs", type=int, default=1)
    sw.add_argument("--out", type=Path, default=Path("."))
    return ap


def _run(args) -> int:
    params, env = _config(args.config)
    if args.scheme not in harness.SCHEMES:
        raise ConfigError(f"unknown scheme {args.scheme!r}")
    res = harness.run_pipeline(params, env, args.scheme, args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    harness.write_metrics([res.row], args.out / "metrics.csv")
    harness.write_trace(res, args.out / f"trace_{args.seed}.csv")
    harness.write_plan(res, args.out / f"plan_{args.seed}.json")
    r = res.row
    if r["status"] != "ok":
        log.error("run failed: %s", r["reason"])
        return 2
    print(f"{r['scheme']} seed={r['seed']} L={r['L']} PL={r['avg_pathloss_db']:.2f} dB "
          f"sum_rate={r['sum_rate'] / 1e6:.3f} Mbps")
    return 0


def _sweep(args) -> int:
    params, env = _config(args.config)
    if args.seeds < 1:
        raise ConfigError("--seeds must be >= 1")
    if args.scheme not in harness.SCHEMES:
        raise ConfigError(f"unknown scheme {args.scheme!r}")
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("--values is empty")
    try:
        rows, summary = harness.sweep(params, env, args.axis, values, args.seeds, args.scheme,
                                      args.out, args.jobs, args.seed0)
    except ValueError as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(str(err)) from err
    for s in summary:
        print(f"{s['axis']}={s['value']} {s['scheme']}: PL={s['avg_pathloss_db_mean']:.2f} dB "
              f"rate={s['sum_rate_mean'] / 1e6:.3f} Mbps failures={s['failures']}/{s['runs']}")
    return 2 if any(r["status"] != "ok" for r in rows) else 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args) if args.command == "run" else _sweep(args)
    except (ConfigError, FileNotFoundError) as err:
        log.error("config error: %s", err)
        return 1


if __name__ == "__main__":
    sys.exit(main())
