"""Simulated capacitive proximity electrodes, windowing, normalization and calibration."""

import json
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from . import limb as limb_mod

WINDOW_LENGTH = 5
SOFT_LABELS = (
    "left top",
    "left middle",
    "left bottom",
    "right top",
    "right middle",
    "right bottom",
    "left inner",
    "right inner",
)
RIGID_LABELS = SOFT_LABELS[:6]


class CalibrationError(ValueError):
    pass


class WindowNotWarmError(RuntimeError):
    """Normalized reading requested before the sample window holds 5 samples."""


@dataclass(frozen=True)
class ElectrodeGeom:
    """Electrode face size and mount relative to its parent finger or plate.

    ``mount`` holds the mount coordinates in the parent's own convention:
    (arc position, axial offset) on a finger, (lateral, axial) on the plate.
    ``side`` is "back" or "inner" for finger electrodes and "plate" otherwise.
    """

    label: str
    width: float
    height: float
    mount: tuple
    side: str


@dataclass(frozen=True)
class CapacitanceModel:
    """Monotone distance law with a compression plateau at contact.

    raw(d) = c_far + c_gain * d0 / (d + d0) for a gap d > 0, and
    c_far + c_gain + compression_gain * min(p, plateau_pressure) in contact.
    """

    c_far: float = 100.0
    c_gain: float = 100.0
    decay_length: float = 0.01
    compression_gain: float = 40.0
    plateau_pressure: float = 0.6
    noise_sigma: float = 0.5

    def __post_init__(self):
        if self.decay_length <= 0 or self.c_gain <= 0:
            raise ValueError("decay_length and c_gain must be positive")
        if self.compression_gain < 0 or self.plateau_pressure <= 0 or self.noise_sigma < 0:
            raise ValueError("compression_gain, plateau_pressure and noise_sigma must be >= 0")

    def noiseless(self):
        return CapacitanceModel(
            self.c_far,
            self.c_gain,
            self.decay_length,
            self.compression_gain,
            self.plateau_pressure,
            0.0,
        )

    def law(self, gap, pressure=0.0):
        """Noise-free reading for a shell-to-skin gap (m) and contact pressure proxy."""
        gap = np.asarray(gap, dtype=float)
        pressure = np.broadcast_to(np.asarray(pressure, dtype=float), gap.shape)
        far = self.c_far + self.c_gain * self.decay_length / (np.maximum(gap, 0.0) + self.decay_length)
        contact = (
            self.c_far
            + self.c_gain
            + self.compression_gain * np.minimum(np.maximum(pressure, 0.0), self.plateau_pressure)
        )
        return np.where(gap > 0.0, far, contact)


def raw_capacitance(model, sample_points, limb, shell, foam, local_pressure=None, rng=None):
    """Raw reading of one or more electrodes.

    ``sample_points`` has shape (..., k, 3) with k >= 9 points on each face;
    ``shell`` is the electrode-to-skin standoff at first touch (foam plus any
    finger wall) and ``foam`` the compressible part of it. Contact pressure
    defaults to foam penetration / foam; pass ``local_pressure`` to override
    it for contacting points. Returns one reading per electrode.
    """
    pts = np.asarray(sample_points, dtype=float)
    if pts.shape[-2] < 9:
        raise ValueError("need at least 9 sample points per electrode face")
    shell = np.asarray(shell, dtype=float)[..., None]
    gap = limb_mod.signed_distance(limb, pts) - shell
    if local_pressure is None:
        pressure = np.clip(-gap / foam, 0.0, 1.0)
    else:
        pressure = np.broadcast_to(np.asarray(local_pressure, dtype=float)[..., None], gap.shape)
    reading = model.law(gap, pressure).mean(axis=-1)
    if model.noise_sigma > 0:
        if rng is None:
            raise ValueError("a seeded generator is required when noise_sigma > 0")
        reading = reading + rng.normal(0.0, model.noise_sigma, size=reading.shape)
    return reading


class SampleWindow:
    """Ring buffer of the last five raw samples per electrode."""

    def __init__(self, n_electrodes, length=WINDOW_LENGTH):
        self.n_electrodes = n_electrodes
        self.length = length
        self._buf = deque(maxlen=length)

    def push(self, sample):
        sample = np.asarray(sample, dtype=float)
        if sample.shape != (self.n_electrodes,):
            raise ValueError(f"expected {self.n_electrodes} readings, got shape {sample.shape}")
        self._buf.append(sample.copy())

    @property
    def warm(self):
        return len(self._buf) == self.length

    def __len__(self):
        return len(self._buf)

    def mean(self):
        if not self.warm:
            raise WindowNotWarmError(f"window holds {len(self._buf)} of {self.length} samples")
        return np.sum(np.stack(self._buf), axis=0) / self.length

    def clear(self):
        self._buf.clear()


@dataclass
class CalibrationProfile:
    kind: str
    c_min: np.ndarray
    c_max: np.ndarray
    thresholds: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.c_min = np.asarray(self.c_min, dtype=float)
        self.c_max = np.asarray(self.c_max, dtype=float)
        self.thresholds = np.asarray(self.thresholds, dtype=float)
        n = 8 if self.kind == "soft" else 6
        if self.kind not in ("soft", "rigid"):
            raise CalibrationError(f"unknown effector kind {self.kind!r}")
        for name in ("c_min", "c_max", "thresholds"):
            if getattr(self, name).shape != (n,):
                raise CalibrationError(f"{name} must have {n} entries for a {self.kind} profile")
        if np.any(self.c_max <= self.c_min):
            bad = np.flatnonzero(self.c_max <= self.c_min) + 1
            raise CalibrationError(f"c_max <= c_min on electrode(s) {bad.tolist()}")
        if np.any((self.thresholds <= 0) | (self.thresholds >= 1)):
            raise CalibrationError(f"thresholds must lie in (0, 1): {self.thresholds}")

    @property
    def s1(self):
        return self.thresholds[:6]

    @property
    def s2(self):
        return float(self.thresholds[6])

    @property
    def s3(self):
        return float(self.thresholds[7])

    def to_dict(self):
        return {
            "kind": self.kind,
            "c_min": self.c_min.tolist(),
            "c_max": self.c_max.tolist(),
            "thresholds": self.thresholds.tolist(),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data["kind"], data["c_min"], data["c_max"], data["thresholds"], data.get("meta", {}))

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


def normalize_mean(mean, calib):
    span = calib.c_max - calib.c_min
    if np.any(span <= 0):
        raise CalibrationError("c_max equals c_min on at least one electrode")
    return np.clip((np.asarray(mean, dtype=float) - calib.c_min) / span, 0.0, 1.0)


def normalize(window, calib):
    """Windowed mean of the last five samples mapped to [0, 1] per electrode."""
    return normalize_mean(window.mean(), calib)


@dataclass
class RehearsalTrace:
    """Raw samples recorded during the pre-trial threshold rehearsal.

    Each segment is an (n_samples, n_electrodes) array; ``comfort`` holds the
    samples taken at the comfort pressure setpoint.
    """

    kind: str
    far: np.ndarray = None
    tight: np.ndarray = None
    comfort: np.ndarray = None
    sweep: np.ndarray = None

    def as_dict(self):
        return {k: (None if v is None else np.asarray(v).tolist()) for k, v in asdict(self).items()}


def calibrate(trace):
    """Derive per-electrode min/max and normalized thresholds from a rehearsal."""
    for name in ("far", "tight", "comfort"):
        seg = getattr(trace, name)
        if seg is None or len(seg) == 0:
            raise CalibrationError(f"rehearsal trace is missing its {name!r} segment")
    far = np.atleast_2d(np.asarray(trace.far, dtype=float))
    tight = np.atleast_2d(np.asarray(trace.tight, dtype=float))
    comfort = np.atleast_2d(np.asarray(trace.comfort, dtype=float))
    c_min = far.min(axis=0)
    c_max = tight.max(axis=0)
    if np.any(c_max <= c_min):
        raise CalibrationError("rehearsal did not separate far and tight readings (c_max <= c_min)")
    thresholds = np.clip((comfort.mean(axis=0) - c_min) / (c_max - c_min), 0.0, 1.0)
    return CalibrationProfile(trace.kind, c_min, c_max, thresholds)
