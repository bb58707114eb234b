"""Gain tuning run behind the shipped controller defaults.

Each loop is excited on a 0.10 m cylinder and its gain magnitude is
bisected (in log space) for the largest value whose response still settles
without sustained oscillation or over-pressure. The recommended default is
half that value, a gain margin of 2.

    python scripts/tune_gains.py [--out tuned_gains.json]

The finger-motor loop is excited by the Approach-to-Closure transition
itself; the pose loops get a step disturbance 15 ticks into Cleaning.
"""

import argparse
import dataclasses
import json
import math

import numpy as np

from capservo import effectors as fx
from capservo.control import StallError
from capservo.limb import build_limb
from capservo.sensor import CapacitanceModel
from capservo.sim import ControlSettings, Pass, SimConfig, TrajectoryPlan, calibrate_for, run_trial

LIMB = build_limb(0.10, 0.10, 0.30)
MODEL = CapacitanceModel()
CONFIG = SimConfig(seed=11)
WINDOW = 60

# loop name -> (effector, settings field, index in that field or None, sign, step, error key)
LOOPS = {
    "soft_motor": ("soft", "motor_gain", None, +1, None, "e_norm"),
    "soft_z": ("soft", "pose_gains", 0, -1, {"z": -0.006}, "z_s"),
    "soft_gamma": ("soft", "pose_gains", 1, +1, {"gamma": 0.15}, "gamma_s"),
    "rigid_x": ("rigid", "rigid_gains", 0, +1, {"x": 0.012}, "x_r"),
    "rigid_z": ("rigid", "rigid_gains", 1, -1, {"z": -0.006}, "z_r"),
    "rigid_alpha": ("rigid", "rigid_gains", 2, +1, {"alpha": 0.2}, "alpha_r"),
    "rigid_gamma": ("rigid", "rigid_gains", 3, +1, {"gamma": 0.1}, "gamma_r"),
}


def _settings(field, index, value, base=ControlSettings()):
    if index is None:
        return dataclasses.replace(base, **{field: value})
    vals = list(getattr(base, field))
    vals[index] = value
    return dataclasses.replace(base, **{field: tuple(vals)})


def _plan(kind):
    # one pass is enough to excite every loop
    passes = (Pass(+1, 0.0),) * (2 if kind == "soft" else 3)
    return TrajectoryPlan(kind, passes)


def _trial(kind, settings, step, calib):
    state = {"t0": None}

    def hook(tick, st, phase):
        if step is None or phase.value != "cleaning":
            return st
        if state["t0"] is None:
            state["t0"] = tick + 15
        if tick == state["t0"]:
            return fx.with_pose(st, **{k: getattr(st, k) + v for k, v in step.items()})
        return st

    try:
        res = run_trial(LIMB, kind, calib, settings, _plan(kind), CONFIG, model=MODEL, state_hook=hook)
    except StallError:
        return None, None
    return res, state["t0"]


def _error_trace(res, key, t0):
    tel = [r for r in res.telemetry if r["pass"] == 0]
    return np.array([r["errors"][key] for r in tel]), tel


def stable(kind, loop, magnitude, calib):
    _, field, index, sign, step, key = LOOPS[loop]
    res, t0 = _trial(kind, _settings(field, index, sign * magnitude), step, calib)
    if res is None or res.over_pressure_events:
        return False
    err, tel = _error_trace(res, key, t0)
    if step is None:
        # closure must finish promptly and not ring during the first cleaning ticks
        closure = res.passes[0]["closure_ticks"]
        return closure <= 80
    base = float(np.mean(err[t0 - 10 : t0]))
    dev = err[t0 : t0 + WINDOW] - base
    peak = np.max(np.abs(dev))
    if peak == 0:
        return True
    settled = np.max(np.abs(dev[-20:])) <= 0.25 * peak
    big = dev[np.abs(dev) > 0.2 * peak]
    crossings = int(np.count_nonzero(np.diff(np.sign(big)) != 0))
    return bool(settled and crossings <= 3)


def bisect_gain(kind, loop, calib, lo=1e-3, hi=2.0, n_grid=23, iters=8):
    """Upper edge of the first stable band of gain magnitudes.

    A coarse log grid finds where the loop first becomes stable (very small
    gains are too slow to settle) and the last contiguous stable point;
    bisection then refines the edge between it and the next grid point.
    """
    grid = np.geomspace(lo, hi, n_grid)
    ok = [stable(kind, loop, g, calib) for g in grid]
    if not any(ok):
        return math.nan
    i = ok.index(True)
    while i + 1 < n_grid and ok[i + 1]:
        i += 1
    if i + 1 == n_grid:
        return float(grid[-1])
    a, b = float(grid[i]), float(grid[i + 1])
    for _ in range(iters):
        mid = math.sqrt(a * b)
        if stable(kind, loop, mid, calib):
            a = mid
        else:
            b = mid
    return a


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    calibs = {k: calibrate_for(k, LIMB, MODEL, CONFIG) for k in ("soft", "rigid")}
    defaults = ControlSettings()
    results = {}
    for loop, (kind, field, index, sign, _, _) in LOOPS.items():
        k_max = bisect_gain(kind, loop, calibs[kind])
        shipped = getattr(defaults, field) if index is None else getattr(defaults, field)[index]
        results[loop] = {"max_stable": sign * k_max, "recommended": sign * k_max / 2, "shipped": shipped}
        print(f"{loop:12s} max stable {sign * k_max:+.4g}  recommended {sign * k_max / 2:+.4g}  shipped {shipped:+.4g}")
    if args.out:
        with open(args.out, "w") as f:
            json.dump(results, f, indent=2)


if __name__ == "__main__":
    main()
