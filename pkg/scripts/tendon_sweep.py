"""Noise-free electrode readings while the finger tendons wind in.

    python scripts/tendon_sweep.py [--diameters 0.08 0.14] [--out tendon_sweep.csv]

For each limb diameter the limb is held concentric with the fingers as they
close; the readings rise through proximity and contact and then level off
once the foam is fully compressed.
"""

import argparse
import csv

import numpy as np

from capservo.limb import build_limb
from capservo.sensor import CapacitanceModel
from capservo.sim import capacitance_vs_tendon


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--diameters", type=float, nargs="+", default=[0.08, 0.14])
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    model = CapacitanceModel()
    rows = []
    for d in args.diameters:
        tendon, raw = capacitance_vs_tendon(build_limb(d, d, 0.40), model, n=args.n)
        back = raw[:, :6].mean(axis=1)
        norm = (back - back[0]) / (back[-1] - back[0])
        rows += [(d, t, b, x) for t, b, x in zip(tendon, back, norm)]
        # first displacement within 1% of the final reading
        knee = tendon[np.argmax(back >= 0.99 * back[-1])]
        print(f"d={d:.3f} m: {back[0]:.1f} -> {back[-1]:.1f}, plateau from {1000 * knee:.1f} mm of tendon")
    if args.out:
        with open(args.out, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(("diameter", "tendon", "raw_back_mean", "normalized"))
            w.writerows(rows)


if __name__ == "__main__":
    main()
