"""Command line entry point.

Exit codes: 0 success, 1 user error (bad config, bad arguments, unwritable
output), 2 at least one run ended infeasible.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import bcd, harness, matching, offload
from .scenario import ConfigError

EXIT_OK, EXIT_USER, EXIT_INFEASIBLE = 0, 1, 2


def _config(args) -> harness.RunConfig:
    cfg = harness.load_config(args.config)
    if getattr(args, "preset", None):
        cfg = replace(cfg, scenario=replace(cfg.scenario, preset=args.preset))
    if getattr(args, "variant", None):
        cfg = replace(cfg, variant=args.variant)
    cfg.validate()
    return cfg


def _out(args) -> Path:
    return Path(args.out) if args.out else harness.default_out_dir()


def cmd_run(args) -> int:
    cfg = _config(args)
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    rec = harness.run(cfg, seed, _out(args))
    print(f"{rec.variant} seed={rec.seed} Q={rec.total_energy_j:.6g} J offload={rec.offload_fraction:.3f} "
          f"iters={rec.outer_iters} feasible={rec.feasible}")
    return EXIT_OK if rec.feasible else EXIT_INFEASIBLE


def cmd_sweep(args) -> int:
    cfg = _config(args)
    seeds = args.seeds if args.seeds else ([args.seed] if args.seed is not None else None)
    variants = args.variants or None
    rows = harness.sweep(cfg, args.param, args.values, _out(args), seeds=seeds, variants=variants, jobs=args.jobs)
    for s in harness.summarise(rows):
        print(f"{s['param']}={s['value']} {s['variant']}: Q={s['total_energy_j_mean']:.6g} "
              f"+/- {s['total_energy_j_ci95']:.2g} ({s['feasible_runs']}/{s['n']} feasible)")
    return EXIT_OK if all(r["feasible"] for r in rows) else EXIT_INFEASIBLE


def cmd_oracle(args) -> int:
    report = harness.oracle_suite(_out(args), seed=args.seed or 0, instances=args.instances)
    print(json.dumps(report, indent=1, sort_keys=True))
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = _config(args)
    print(json.dumps(cfg.to_dict(), indent=1, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sagmec", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--preset", choices=["physical", "paper-table"], help="override the scenario preset")
        sp.add_argument("--seed", type=int)
        if out:
            sp.add_argument("--out", help=f"output directory (default ${harness.OUT_ENV} or ./{harness.DEFAULT_OUT})")

    sp = sub.add_parser("run", help="one end-to-end run")
    common(sp)
    sp.add_argument("--variant", choices=bcd.VARIANTS)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="runs over one parameter axis")
    common(sp)
    sp.add_argument("--param", required=True, choices=harness.SWEEP_PARAMS)
    sp.add_argument("--values", required=True, nargs="+", type=float,
                    help="axis values (devices/uavs counts, data size in bits, deadline in s)")
    sp.add_argument("--seeds", nargs="+", type=int)
    sp.add_argument("--variants", nargs="+", choices=bcd.VARIANTS)
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("oracle", help="compare against exhaustive search on small instances")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--instances", type=int, default=harness.ORACLE_INSTANCES)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("validate-config", help="parse a configuration and print it resolved")
    common(sp, out=False)
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the message
        return EXIT_OK if exc.code == 0 else EXIT_USER
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USER
    try:
        return args.func(args)
    except (ConfigError, bcd.VariantError, matching.GuardError, offload.GuardError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_USER


if __name__ == "__main__":
    sys.exit(main())
