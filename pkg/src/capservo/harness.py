"""Run configuration, batch sweeps, reports, plot data and the coverage oracle."""

import csv
import dataclasses
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import limb as limb_mod
from .control import StallError
from .sensor import CalibrationProfile, CapacitanceModel
from .sim import ControlSettings, SimConfig, calibrate_for, run_trial

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
OUT_ENV = "CAPSERVO_OUT"
EFFECTORS = ("soft", "rigid")
LIMB_KINDS = ("arm", "leg")
VIEW_KEYS = ("top", "side", "bottom", "total")

REPORT_COLUMNS = (
    "trial_id",
    "participant",
    "limb_kind",
    "effector",
    "repeat",
    "base_diameter",
    "tip_diameter",
    "diameter",
    "length",
    "passes",
    "top",
    "side",
    "bottom",
    "total",
    "oracle_top",
    "oracle_side",
    "oracle_bottom",
    "oracle_total",
    "duration_s",
    "ticks",
    "over_pressure",
    "status",
    "message",
)


class ConfigError(ValueError):
    """Run configuration failed schema validation."""


@dataclass(frozen=True)
class LimbSpec:
    name: str
    kind: str
    base_diameter: float
    tip_diameter: float
    length: float

    def __post_init__(self):
        if self.kind not in LIMB_KINDS:
            raise ConfigError(f"limb kind must be one of {LIMB_KINDS}, got {self.kind!r}")

    def build(self):
        return limb_mod.build_limb(self.base_diameter, self.tip_diameter, self.length)

    @property
    def diameter(self):
        return 0.5 * (self.base_diameter + self.tip_diameter)


@dataclass(frozen=True)
class SweepSpec:
    """Synthetic participant population drawn uniformly from these ranges.

    The tip (wrist or ankle) diameter is the base diameter scaled by a draw
    from ``taper``, floored at the lower diameter bound.
    """

    participants: int = 12
    repeats: int = 2
    arm_diameter: tuple = (0.07, 0.11)
    leg_diameter: tuple = (0.09, 0.16)
    arm_length: tuple = (0.25, 0.40)
    leg_length: tuple = (0.30, 0.45)
    arm_taper: tuple = (0.75, 0.95)
    leg_taper: tuple = (0.70, 0.90)

    def __post_init__(self):
        if self.participants < 1 or self.repeats < 1:
            raise ConfigError("participants and repeats must be >= 1")
        for f in ("arm_diameter", "leg_diameter", "arm_length", "leg_length", "arm_taper", "leg_taper"):
            lo, hi = getattr(self, f)
            if not 0 < lo <= hi:
                raise ConfigError(f"{f} must be an increasing positive pair, got {(lo, hi)}")
            object.__setattr__(self, f, (float(lo), float(hi)))


@dataclass(frozen=True)
class RunConfig:
    schema_version: int = SCHEMA_VERSION
    limbs: tuple = ()
    sweep: SweepSpec = field(default_factory=SweepSpec)
    effectors: tuple = EFFECTORS
    calibration: object = "auto"
    gains: ControlSettings = field(default_factory=ControlSettings)
    sim: SimConfig = field(default_factory=SimConfig)
    sensor: CapacitanceModel = field(default_factory=CapacitanceModel)
    seed: int = 0
    out_dir: str = None
    oracle_samples: int = 400_000
    telemetry: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}; expected {SCHEMA_VERSION}")
        bad = [e for e in self.effectors if e not in EFFECTORS]
        if bad or not self.effectors:
            raise ConfigError(f"effectors must be a non-empty subset of {EFFECTORS}, got {list(self.effectors)}")
        if self.oracle_samples and self.oracle_samples < 100_000:
            raise ConfigError("oracle_samples must be 0 (off) or >= 100000")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.calibration != "auto" and not isinstance(self.calibration, dict):
            raise ConfigError('calibration must be "auto" or a mapping effector -> profile path')

    def output_dir(self):
        root = self.out_dir or os.environ.get(OUT_ENV) or "runs"
        return Path(root)


def _strict(cls, data, where):
    if isinstance(data, cls):
        return data
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    kw = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
    try:
        return cls(**kw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{where}: {err}") from err


def config_from_dict(data):
    """Validate a plain mapping against the run schema; unknown keys are errors."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    if "schema_version" not in data:
        raise ConfigError("config is missing schema_version")
    data = dict(data)
    names = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in config: {', '.join(unknown)}")
    if "limbs" in data:
        data["limbs"] = tuple(_strict(LimbSpec, d, f"limbs[{i}]") for i, d in enumerate(data["limbs"] or []))
    if "sweep" in data:
        data["sweep"] = _strict(SweepSpec, data["sweep"], "sweep")
    if "gains" in data:
        data["gains"] = _strict(ControlSettings, data["gains"], "gains")
    if "sim" in data:
        data["sim"] = _strict(SimConfig, data["sim"], "sim")
    if "sensor" in data:
        data["sensor"] = _strict(CapacitanceModel, data["sensor"], "sensor")
    if "effectors" in data:
        eff = data["effectors"]
        data["effectors"] = (eff,) if isinstance(eff, str) else tuple(eff)
    try:
        return RunConfig(**data)
    except ConfigError:
        raise
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err)) from err


def load_config(path):
    """Read a YAML (or JSON) run configuration file."""
    with open(path) as f:
        data = yaml.safe_load(f)
    return config_from_dict(data or {})


def config_to_dict(config):
    out = dataclasses.asdict(config)
    out["limbs"] = [dataclasses.asdict(s) for s in config.limbs]
    return json.loads(json.dumps(out, default=list))


def synthetic_participants(sweep, seed):
    """Seeded arm and leg dimensions for each synthetic participant."""
    rng = np.random.default_rng([seed, 1009])
    limbs = []
    for p in range(sweep.participants):
        for kind in LIMB_KINDS:
            d_lo, d_hi = getattr(sweep, f"{kind}_diameter")
            base = rng.uniform(d_lo, d_hi)
            tip = max(d_lo, base * rng.uniform(*getattr(sweep, f"{kind}_taper")))
            length = rng.uniform(*getattr(sweep, f"{kind}_length"))
            limbs.append((p, LimbSpec(f"p{p:02d}-{kind}", kind, round(base, 4), round(tip, 4), round(length, 4))))
    return limbs


@dataclass(frozen=True)
class TrialSpec:
    trial_id: int
    participant: int
    limb: LimbSpec
    effector: str
    repeat: int
    seed: int


def plan_trials(config):
    """Ordered trial list: participant, limb, effector, repeat."""
    if config.limbs:
        limbs = [(i, spec) for i, spec in enumerate(config.limbs)]
        repeats = 1
    else:
        limbs = synthetic_participants(config.sweep, config.seed)
        repeats = config.sweep.repeats
    trials = []
    for participant, spec in limbs:
        for effector in config.effectors:
            for r in range(repeats):
                tid = len(trials)
                seed = int(np.random.SeedSequence([config.seed, tid]).generate_state(1)[0])
                trials.append(TrialSpec(tid, participant, spec, effector, r, seed))
    return trials


def _calibration(config, trial, limb, sim_config):
    if config.calibration == "auto":
        return calibrate_for(trial.effector, limb, config.sensor, sim_config)
    try:
        return CalibrationProfile.load(config.calibration[trial.effector])
    except KeyError:
        raise ConfigError(f"no calibration profile given for effector {trial.effector!r}") from None


def _blank_row(trial):
    row = {c: "" for c in REPORT_COLUMNS}
    row.update(
        trial_id=trial.trial_id,
        participant=trial.participant,
        limb_kind=trial.limb.kind,
        effector=trial.effector,
        repeat=trial.repeat,
        base_diameter=trial.limb.base_diameter,
        tip_diameter=trial.limb.tip_diameter,
        diameter=trial.limb.diameter,
        length=trial.limb.length,
        passes=2 if trial.effector == "soft" else 3,
    )
    for k in VIEW_KEYS:
        row[k] = math.nan
        row[f"oracle_{k}"] = math.nan
    return row


def execute_trial(config, trial, out_dir=None):
    """Run one trial and return its report row (failed trials yield a failed row)."""
    row = _blank_row(trial)
    sim_config = dataclasses.replace(config.sim, seed=trial.seed)
    telemetry = None
    try:
        limb = trial.limb.build()
        calib = _calibration(config, trial, limb, sim_config)
        result = run_trial(limb, trial.effector, calib, config.gains, config=sim_config, model=config.sensor)
    except (StallError, limb_mod.LimbValidationError, ConfigError, ValueError) as err:
        row["status"] = "failed"
        row["message"] = f"{type(err).__name__}: {err}"
        telemetry = getattr(err, "telemetry", None)
    else:
        row["status"] = result.status
        row["duration_s"] = result.duration
        row["ticks"] = result.ticks
        row["over_pressure"] = result.over_pressure_events
        telemetry = result.telemetry
        if result.coverage is not None:
            for k in VIEW_KEYS:
                row[k] = float(getattr(result.coverage, k))
            if config.oracle_samples:
                est = oracle_coverage(
                    limb,
                    grid_predicate(result.grid_before, result.grid_after),
                    config.oracle_samples,
                    bands=creamed_bands(result.grid_before),
                    rng=np.random.default_rng([trial.seed, 31]),
                )
                for k in VIEW_KEYS:
                    row[f"oracle_{k}"] = est[k]
    if out_dir is not None and config.telemetry and telemetry is not None:
        tdir = Path(out_dir) / "telemetry"
        tdir.mkdir(parents=True, exist_ok=True)
        with open(tdir / f"trial_{trial.trial_id:03d}.jsonl", "w") as f:
            for rec in telemetry:
                f.write(json.dumps(rec, sort_keys=True) + "\n")
    return row


def _execute_packed(args):
    return execute_trial(*args)


@dataclass
class BatchReport:
    rows: list
    aggregates: list = field(default_factory=list)

    def __post_init__(self):
        if not self.aggregates:
            self.aggregates = aggregate_rows(self.rows)

    @property
    def failed(self):
        return [r for r in self.rows if r["status"] == "failed"]

    def trials_csv(self):
        return _to_csv(self.rows, REPORT_COLUMNS)

    def aggregate_csv(self):
        return _to_csv(self.aggregates, AGGREGATE_COLUMNS)

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "trials.csv").write_text(self.trials_csv())
        (out / "aggregate.csv").write_text(self.aggregate_csv())
        return out

    @classmethod
    def read(cls, out_dir):
        with open(Path(out_dir) / "trials.csv", newline="") as f:
            rows = [_parse_row(r) for r in csv.DictReader(f)]
        return cls(rows)


AGGREGATE_COLUMNS = ("effector", "limb_kind", "n", "n_failed", "top", "side", "bottom", "total")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else repr(v)
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def _to_csv(rows, columns):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


_INT_COLUMNS = {"trial_id", "participant", "repeat", "passes", "ticks", "over_pressure"}
_STR_COLUMNS = {"limb_kind", "effector", "status", "message"}


def _parse_row(raw):
    row = {}
    for c in REPORT_COLUMNS:
        v = raw[c]
        if c in _STR_COLUMNS:
            row[c] = v
        elif v == "":
            row[c] = ""
        elif c in _INT_COLUMNS:
            row[c] = int(v)
        else:
            row[c] = float(v)
    return row


def _mean(values):
    return math.fsum(values) / len(values) if values else math.nan


def aggregate_rows(rows):
    """Per-effector means by limb kind and overall; failed rows are counted but excluded."""
    out = []
    for eff in EFFECTORS:
        for kind in LIMB_KINDS + ("all",):
            sel = [r for r in rows if r["effector"] == eff and (kind == "all" or r["limb_kind"] == kind)]
            if not sel:
                continue
            ok = [r for r in sel if r["status"] == "ok"]
            agg = {"effector": eff, "limb_kind": kind, "n": len(ok), "n_failed": len(sel) - len(ok)}
            for k in ("top", "side", "bottom", "total"):
                agg[k] = _mean([r[k] for r in ok])
            out.append(agg)
    return out


def run_batch(config, out_dir=None):
    """Execute every planned trial and write trials.csv, aggregate.csv and telemetry.

    Rows are ordered by trial id whatever the worker count.
    """
    out = config.output_dir() if out_dir is None else Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trials = plan_trials(config)
    jobs = [(config, t, out) for t in trials]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            rows = list(pool.map(_execute_packed, jobs))
    else:
        rows = [execute_trial(*j) for j in jobs]
    rows.sort(key=lambda r: r["trial_id"])
    report = BatchReport(rows)
    report.write(out)
    with open(out / "config.json", "w") as f:
        json.dump(config_to_dict(config), f, indent=2, sort_keys=True)
    for r in report.failed:
        log.warning("trial %s failed: %s", r["trial_id"], r["message"])
    return report


def creamed_bands(grid):
    """Axial fraction intervals of the creamed cell rows, merged where adjacent."""
    rows = np.flatnonzero((grid.initial_mass > 0).any(axis=1))
    edges = grid.u_edges
    bands = []
    for i in rows:
        if bands and np.isclose(bands[-1][1], edges[i]):
            bands[-1][1] = edges[i + 1]
        else:
            bands.append([edges[i], edges[i + 1]])
    return [tuple(b) for b in bands]


def grid_predicate(grid_before, grid_after):
    """Cleaned-region predicate over surface coordinates backed by a final grid."""
    cleaned = (grid_before.initial_mass > 0) & (
        grid_after.cream_mass < limb_mod.CLEANED_RESIDUAL * grid_before.initial_mass
    )

    def predicate(u, phi):
        i, j = grid_after.cell_index(u, phi)
        return cleaned[i, j]

    return predicate


def _sample_frustum_u(limb, lo, hi, n, rng):
    # lateral area density is proportional to the radius, linear in u
    a, b = limb.tip_radius, limb.base_radius - limb.tip_radius
    cdf = lambda u: a * u + 0.5 * b * u * u  # noqa: E731
    target = cdf(lo) + rng.random(n) * (cdf(hi) - cdf(lo))
    if abs(b) < 1e-12:
        return target / a
    return (-a + np.sqrt(a * a + 2 * b * target)) / b


def oracle_coverage(limb, cleaned, n_samples, bands=None, views=limb_mod.ViewPartition(), rng=None):
    """Monte Carlo coverage estimate by area-uniform sampling of the creamed bands.

    ``cleaned(u, phi)`` returns a boolean array; ``bands`` is a list of
    (u_lo, u_hi) intervals (defaults to the whole limb). Returns percentages
    per view and in total.
    """
    if n_samples < 100_000:
        raise ValueError("oracle needs at least 1e5 samples")
    rng = np.random.default_rng(0) if rng is None else rng
    bands = [(0.0, 1.0)] if not bands else bands
    a, b = limb.tip_radius, limb.base_radius - limb.tip_radius
    weights = np.array([a * (hi - lo) + 0.5 * b * (hi * hi - lo * lo) for lo, hi in bands])
    counts = rng.multinomial(n_samples, weights / weights.sum())
    u = np.concatenate([_sample_frustum_u(limb, lo, hi, n, rng) for (lo, hi), n in zip(bands, counts)])
    phi = rng.uniform(-np.pi, np.pi, size=u.shape)
    hit = np.asarray(cleaned(u, phi), dtype=bool)
    labels = views.label(phi)
    out = {}
    for k, name in enumerate(("top", "side", "bottom")):
        sel = labels == k
        out[name] = 100.0 * hit[sel].mean() if sel.any() else math.nan
    out["total"] = 100.0 * hit.mean()
    return out


def trend_slope(rows, effector, limb_kind="arm", column="total"):
    """Least-squares slope of coverage against mean diameter (percent per metre)."""
    sel = [r for r in rows if r["effector"] == effector and r["limb_kind"] == limb_kind and r["status"] == "ok"]
    if len(sel) < 2:
        return math.nan
    x = np.array([r["diameter"] for r in sel])
    y = np.array([r[column] for r in sel])
    return float(np.polyfit(x, y, 1)[0])


def emit_plot_data(report, out_dir):
    """Write scatter series per effector and a per-view bar table; returns the paths."""
    rows = [r for r in report.rows if r["status"] == "ok"]
    if not rows:
        log.warning("empty report: no plot data written")
        return []
    out = Path(out_dir) / "plots"
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for eff in EFFECTORS:
        sel = [r for r in rows if r["effector"] == eff]
        if not sel:
            continue
        for x in ("diameter", "length"):
            path = out / f"coverage_vs_{x}_{eff}.csv"
            path.write_text(_to_csv(sel, ("trial_id", "limb_kind", x, "total")))
            paths.append(path)
    bars = [a for a in report.aggregates if a["n"] > 0]
    path = out / "coverage_by_view.csv"
    path.write_text(_to_csv(bars, ("effector", "limb_kind", "top", "side", "bottom", "total")))
    paths.append(path)
    return paths
