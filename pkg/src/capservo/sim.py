"""Fixed-rate closed-loop bathing trials: sensing, control, motion and wiping."""

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import effectors as fx
from . import limb as limb_mod
from .control import (
    Phase,
    RigidController,
    SkinGripController,
    StallError,
    default_motor_gains,
)
from .sensor import CapacitanceModel, RehearsalTrace, SampleWindow, calibrate, normalize

PASS_OFFSET = np.pi / 3


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.1
    control_rate: float = 10.0
    feed_speed: float = 0.04
    seed: int = 0
    wipe_threshold: float = 0.05
    p_min: float = 0.05
    p_comfort: float = 0.2
    p_tight: float = 0.9
    start_clearance: float = 0.012
    bed_clearance: float = 0.05
    n_axial: int = 128
    n_circ: int = 96
    mass_per_area: float = 1.0
    initial_x: float = 0.0

    def __post_init__(self):
        if self.dt <= 0 or self.control_rate <= 0 or self.feed_speed <= 0:
            raise ValueError("dt, control_rate and feed_speed must be positive")
        if not np.isclose(self.dt * self.control_rate, 1.0):
            raise ValueError("dt * control_rate must equal 1")

    @property
    def feed_step(self):
        return self.feed_speed * self.dt


@dataclass(frozen=True)
class ControlSettings:
    """Gains and fixed constants for both controllers."""

    motor_gain: float = 0.1
    pose_gains: tuple = (-0.019, 0.44)
    rigid_gains: tuple = (0.004, -0.0084, 0.25, 0.094)
    delta_s: float = 0.003
    delta_r: float = 0.003
    eta: float = 0.01
    n_max: int = 600
    z_form: str = "servo"

    def make(self, kind, calib, params):
        if kind == "soft":
            return SkinGripController.from_profile(
                calib,
                motor_gains=default_motor_gains(self.motor_gain),
                pose_gains=self.pose_gains,
                delta=self.delta_s,
                eta=self.eta,
                n_max=self.n_max,
                theta_max=params.theta_max,
                z_form=self.z_form,
            )
        return RigidController.from_profile(calib, gains=self.rigid_gains, delta=self.delta_r)


@dataclass(frozen=True)
class Pass:
    direction: int
    beta: float


@dataclass(frozen=True)
class TrajectoryPlan:
    kind: str
    passes: tuple

    def __post_init__(self):
        expected = 2 if self.kind == "soft" else 3
        if len(self.passes) != expected:
            raise ValueError(f"{self.kind} plan needs {expected} passes, got {len(self.passes)}")


def plan_trajectories(kind):
    if kind == "soft":
        return TrajectoryPlan("soft", (Pass(+1, 0.0), Pass(-1, PASS_OFFSET)))
    if kind == "rigid":
        return TrajectoryPlan("rigid", (Pass(+1, 0.0), Pass(-1, PASS_OFFSET), Pass(+1, -PASS_OFFSET)))
    raise ValueError(f"unknown effector kind {kind!r}")


def default_params(kind):
    return fx.SoftGripperParams() if kind == "soft" else fx.RigidToolParams()


def wipe_update(grid, cmap, feeding, dt, threshold, p_min):
    """Accumulate wipe exposure under sliding contact and clear cream past the threshold."""
    if not feeding or len(cmap) == 0:
        return grid
    active = cmap.pressure >= p_min
    np.add.at(grid.wipe_exposure, (cmap.rows[active], cmap.cols[active]), cmap.pressure[active] * dt)
    done = grid.wipe_exposure >= threshold
    grid.cream_mass[done] = 0.0
    return grid


def _comfort_state(kind, limb, params, pressure, u=0.5, lift=0.0):
    if kind == "soft":
        z, tendon = fx.concentric_height(limb, params, pressure, u)
        theta = np.clip(tendon / params.spool_radius, 0.0, params.theta_max)
        return fx.SkinGripState(z=z + lift, theta=(theta, theta), axial=u * limb.length)
    z = fx.rigid_comfort_height(limb, params, pressure, u)
    return fx.RigidToolState(x=0.0, z=z + lift, axial=u * limb.length)


def record_rehearsal(kind, limb, model, config=SimConfig(), params=None, n_samples=10, rng=None):
    """Simulate the pre-trial threshold rehearsal at mid-limb.

    The effector is held far from the limb, swept down into tight contact,
    then held at the comfort pressure; each segment collects raw samples.
    """
    params = default_params(kind) if params is None else params
    rng = np.random.default_rng([config.seed, 7]) if rng is None else rng
    sense = lambda st: fx.sense(st, limb, params, model, rng=rng)  # noqa: E731

    far_state = _comfort_state(kind, limb, params, config.p_comfort, lift=0.1)
    if kind == "soft":
        far_state = fx.with_pose(far_state, theta=(0.0, 0.0))
    far = np.array([sense(far_state) for _ in range(n_samples)])
    sweep = np.array([sense(_comfort_state(kind, limb, params, p)) for p in np.linspace(-1.0, config.p_tight, 25)])
    tight = np.array([sense(_comfort_state(kind, limb, params, config.p_tight)) for _ in range(n_samples)])
    comfort = np.array([sense(_comfort_state(kind, limb, params, config.p_comfort)) for _ in range(n_samples)])
    return RehearsalTrace(kind, far=far, tight=tight, comfort=comfort, sweep=sweep)


def calibrate_for(kind, limb, model, config=SimConfig(), params=None):
    return calibrate(record_rehearsal(kind, limb, model, config, params))


@dataclass
class SimResult:
    kind: str
    status: str
    coverage: limb_mod.CoverageReport
    telemetry: list
    duration: float
    ticks: int
    grid_before: limb_mod.SurfaceGrid
    grid_after: limb_mod.SurfaceGrid
    over_pressure_events: int = 0
    over_travel_events: int = 0
    passes: list = field(default_factory=list)
    message: str = ""

    def telemetry_lines(self):
        return [json.dumps(rec, sort_keys=True) for rec in self.telemetry]

    def write_telemetry(self, path):
        with open(path, "w") as f:
            for line in self.telemetry_lines():
                f.write(line + "\n")


def start_inset(limb, params):
    """Start offset from the limb end that puts the whole footprint on the frustum.

    Grasping with part of the footprint past the end would calibrate against a
    different taper than the rehearsal saw; the pass still feeds one full limb
    length and finishes the same distance beyond the far end.
    """
    return min(fx.footprint_half_length(params), 0.25 * limb.length)


def _start_state(kind, limb, params, config, p):
    inset = start_inset(limb, params)
    s0 = inset if p.direction > 0 else limb.length - inset
    r = float(limb.radius(s0 / limb.length))
    if kind == "soft":
        return fx.SkinGripState(z=r + params.shell + config.start_clearance, axial=s0, beta=p.beta)
    return fx.RigidToolState(x=config.initial_x, z=r + params.shell + config.start_clearance, axial=s0, beta=p.beta)


def _apply(state, cmd):
    if state.kind == "soft":
        return fx.with_pose(state, z=state.z + cmd.dz, gamma=state.gamma + cmd.dgamma, theta=cmd.theta)
    return fx.with_pose(
        state, x=state.x + cmd.dx, z=state.z + cmd.dz, alpha=state.alpha + cmd.dalpha, gamma=state.gamma + cmd.dgamma
    )


def _pose_record(state):
    if state.kind == "soft":
        return {"z": state.z, "gamma": state.gamma, "theta": list(state.theta), "axial": state.axial, "beta": state.beta}
    return {"x": state.x, "z": state.z, "alpha": state.alpha, "gamma": state.gamma, "axial": state.axial, "beta": state.beta}


def _sense(state, limb, sensed, params, model, rng):
    # the effector is posed against the trial limb; a swapped limb only changes what it senses
    poses = fx.electrode_poses(state, limb, params)
    return fx.sense(state, sensed, params, model, rng=rng, poses=poses)


def _max_ticks(limb, config, settings):
    return int(settings.n_max + 200 + 2 * limb.length / config.feed_step)


def run_trial(
    limb,
    kind,
    calib,
    settings=ControlSettings(),
    plan=None,
    config=SimConfig(),
    params=None,
    model=None,
    rings=limb_mod.DEFAULT_RINGS,
    limb_hook=None,
    state_hook=None,
):
    """Run every pass of a trial and report coverage of the cream rings.

    ``limb_hook(tick, limb) -> limb`` may swap the sensed limb mid-trial (used
    to document failure modes). The effector stays posed against the trial
    limb; sensing and contact see the swapped geometry, and cream accounting
    keeps the original cells.
    ``state_hook(tick, state, phase) -> state`` may displace the effector
    before sensing, e.g. to inject a step disturbance.
    """
    params = default_params(kind) if params is None else params
    model = CapacitanceModel() if model is None else model
    plan = plan_trajectories(kind) if plan is None else plan
    if plan.kind != kind or calib.kind != kind:
        raise ValueError("plan, calibration and effector kind must match")
    rng = np.random.default_rng(config.seed)

    grid = limb_mod.build_grid(limb, config.n_axial, config.n_circ)
    if rings:
        limb_mod.apply_cream_rings(grid, limb, rings, config.mass_per_area)
    before = grid.copy()
    gg = fx.GridGeometry(limb, grid)
    n_e = 8 if kind == "soft" else 6

    telemetry = []
    tick = 0
    over_pressure = 0
    over_travel = 0
    pass_stats = []
    sensed = limb

    try:
        for k, p in enumerate(plan.passes):
            controller = settings.make(kind, calib, params)
            state = _start_state(kind, limb, params, config, p)
            window = SampleWindow(n_e)
            for _ in range(4):
                window.push(_sense(state, limb, sensed, params, model, rng))
            travelled = 0.0
            span = limb.length
            stats = {"pass": k, "closure_ticks": 0, "approach_ticks": 0}
            z_floor = -limb.base_radius - config.bed_clearance
            for _ in range(_max_ticks(limb, config, settings)):
                if limb_hook is not None:
                    swapped = limb_hook(tick, sensed)
                    if swapped is not sensed:
                        sensed = swapped
                        gg = fx.GridGeometry(sensed, grid)
                if state_hook is not None:
                    state = state_hook(tick, state, controller.phase)
                raw = _sense(state, limb, sensed, params, model, rng)
                window.push(raw)
                c_norm = normalize(window, calib)
                prev_phase = controller.phase
                if kind == "soft":
                    cmd = controller.step(c_norm, state.theta, z=state.z, z_floor=z_floor)
                else:
                    cmd = controller.step(c_norm, z=state.z, z_floor=z_floor)
                state = _apply(state, cmd)
                if cmd.phase == Phase.APPROACH:
                    stats["approach_ticks"] += 1
                if kind == "soft" and prev_phase != Phase.CLEANING and cmd.phase == Phase.CLEANING:
                    stats["closure_ticks"] = controller.closure_ticks
                    stats["closure_e_norm"] = cmd.errors["e_norm"]
                    stats["wrap_fraction"] = fx.wrap_fraction(state, limb, params)
                cmap = fx.contact_map(state, limb, params, gg)
                wipe_update(grid, cmap, cmd.feed, config.dt, config.wipe_threshold, config.p_min)
                over_pressure += cmap.over_pressure
                over_travel += int(cmd.over_travel)
                rec = {
                    "tick": tick,
                    "t": round(tick * config.dt, 10),
                    "pass": k,
                    "phase": cmd.phase.value,
                    "raw": raw.tolist(),
                    "norm": c_norm.tolist(),
                    "pose": _pose_record(state),
                    "errors": cmd.errors,
                    "contact_cells": len(cmap),
                    "max_pressure": float(cmap.pressure.max()) if len(cmap) else 0.0,
                    "mean_pressure": float(cmap.pressure.mean()) if len(cmap) else 0.0,
                    "over_pressure": cmap.over_pressure,
                    "over_travel": cmd.over_travel,
                }
                telemetry.append(rec)
                tick += 1
                if cmd.feed:
                    step = min(config.feed_step, span - travelled)
                    state = fx.with_pose(state, axial=state.axial + p.direction * step)
                    travelled += step
                    if travelled >= span - 1e-12:
                        break
            else:
                raise StallError(f"pass {k} did not reach the limb end", {"travelled": travelled})
            stats["travelled"] = travelled
            pass_stats.append(stats)
    except StallError as err:
        err.telemetry = telemetry
        err.passes = pass_stats
        raise

    status = "ok"
    try:
        report = limb_mod.coverage_report(before, grid)
    except limb_mod.UndefinedCoverageError:
        report = None
        status = "undefined_coverage"
    return SimResult(
        kind,
        status,
        report,
        telemetry,
        tick * config.dt,
        tick,
        before,
        grid,
        over_pressure,
        over_travel,
        pass_stats,
    )



def capacitance_vs_tendon(limb, model, params=None, n=200, u=0.5):
    """Noise-free soft-gripper readings while the tendon winds from 0 to its limit.

    The limb rests in a compliant support and is drawn concentric by the
    closing fingers, so every tendon setting is a concentric wrap; once the
    foam is fully compressed the finger stalls against the skin and further
    winding leaves the shape unchanged. Returns (tendon, readings (n, 8)).
    """
    params = fx.SoftGripperParams() if params is None else params
    model = model.noiseless()
    r = float(limb.radius(u))
    stall = fx.curvature_for_radius(r + params.shell - params.foam, params)
    tendon = np.linspace(0.0, params.tendon_max, n)
    rows = []
    for d in tendon:
        arc = fx.finger_shape(min(d, stall), params)
        state = fx.SkinGripState(z=arc.radius, theta=(arc.tendon_disp / params.spool_radius,) * 2, axial=u * limb.length)
        rows.append(fx.sense(state, limb, params, model))
    return tendon, np.array(rows)
