"""Run the default synthetic sweep and print the headline comparison.

    python scripts/run_sweep.py [--out runs/sweep] [--seed 0] [--workers 1]

Writes trials.csv, aggregate.csv, telemetry and plot series to --out.
"""

import argparse
import dataclasses

from capservo import harness


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="runs/sweep")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--config", default=None)
    args = ap.parse_args()

    config = harness.load_config(args.config) if args.config else harness.RunConfig()
    config = dataclasses.replace(config, seed=args.seed, workers=args.workers, out_dir=args.out)
    report = harness.run_batch(config)
    harness.emit_plot_data(report, config.output_dir())

    print(f"{len(report.rows)} trials, {len(report.failed)} failed -> {config.output_dir()}")
    print(f"{'effector':8s} {'limb':5s} {'top':>6s} {'side':>6s} {'bottom':>6s} {'total':>6s}")
    for a in report.aggregates:
        print(f"{a['effector']:8s} {a['limb_kind']:5s} " + " ".join(f"{a[k]:6.1f}" for k in harness.VIEW_KEYS))
    for eff in harness.EFFECTORS:
        print(f"{eff} coverage slope vs arm diameter: {harness.trend_slope(report.rows, eff):+.1f} %/m")


if __name__ == "__main__":
    main()
