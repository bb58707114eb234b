"""Command line entry point: simulate, batch, report and oracle verbs."""

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import harness


def _load(args):
    config = harness.load_config(args.config) if args.config else harness.RunConfig()
    changes = {}
    if args.effector:
        changes["effectors"] = (args.effector,)
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out:
        changes["out_dir"] = args.out
    if getattr(args, "workers", None):
        changes["workers"] = args.workers
    return dataclasses.replace(config, **changes) if changes else config


def _default_single(config):
    if config.limbs:
        return config
    limb = harness.LimbSpec("cylinder-0.10", "arm", 0.10, 0.10, 0.40)
    return dataclasses.replace(config, limbs=(limb,))


def cmd_simulate(args):
    config = _default_single(_load(args))
    out = config.output_dir()
    trial = harness.plan_trials(config)[0]
    row = harness.execute_trial(config, trial, out)
    report = harness.BatchReport([row])
    report.write(out)
    print(json.dumps({k: row[k] for k in ("effector", "status", *harness.VIEW_KEYS, "duration_s", "message")}))
    return 1 if report.failed else 0


def cmd_batch(args):
    config = _load(args)
    report = harness.run_batch(config)
    harness.emit_plot_data(report, config.output_dir())
    sys.stdout.write(report.aggregate_csv())
    if report.failed:
        print(f"{len(report.failed)} trial(s) failed", file=sys.stderr)
    return 1 if report.failed else 0


def cmd_report(args):
    out = Path(args.out) if args.out else harness.RunConfig().output_dir()
    report = harness.BatchReport.read(out)
    report.write(out)
    harness.emit_plot_data(report, out)
    sys.stdout.write(report.aggregate_csv())
    return 1 if report.failed else 0


def cmd_oracle(args):
    config = _load(args)
    if not config.oracle_samples:
        config = dataclasses.replace(config, oracle_samples=400_000)
    report = harness.run_batch(config)
    worst = 0.0
    for row in report.rows:
        if row["status"] != "ok":
            continue
        for k in harness.VIEW_KEYS:
            worst = max(worst, abs(row[k] - row[f"oracle_{k}"]))
    print(f"max |grid - oracle| = {worst:.3f} percentage points over {len(report.rows)} trial(s)")
    return 1 if report.failed or worst > args.tolerance else 0


def build_parser():
    p = argparse.ArgumentParser(prog="capservo", description=__doc__)
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, workers=True):
        sp.add_argument("--config", help="YAML or JSON run configuration")
        sp.add_argument("--effector", choices=harness.EFFECTORS)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help=f"output directory (default ${harness.OUT_ENV} or ./runs)")
        if workers:
            sp.add_argument("--workers", type=int)

    sp = sub.add_parser("simulate", help="run one trial")
    common(sp, workers=False)
    sp.set_defaults(func=cmd_simulate)
    sp = sub.add_parser("batch", help="run a sweep and write the report")
    common(sp)
    sp.set_defaults(func=cmd_batch)
    sp = sub.add_parser("report", help="re-aggregate an existing trials.csv")
    sp.add_argument("--out", help="directory holding trials.csv")
    sp.set_defaults(func=cmd_report)
    sp = sub.add_parser("oracle", help="cross-check grid coverage against Monte Carlo")
    common(sp)
    sp.add_argument("--tolerance", type=float, default=1.0, help="allowed gap in percentage points")
    sp.set_defaults(func=cmd_oracle)
    return p


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except harness.ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
