"""Capacitive-servoing controllers for the soft gripper and the rigid baseline tool.

Pose heights are measured upward, so an Approach step is ``-delta``. The
servo error on height is positive when contact is too light; the default
height gains are therefore negative, turning a light-contact error into a
descent.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class Phase(str, Enum):
    APPROACH = "approach"
    CLOSURE = "closure"
    CLEANING = "cleaning"


_ORDER = {Phase.APPROACH: 0, Phase.CLOSURE: 1, Phase.CLEANING: 2}


class StallError(RuntimeError):
    """Controller failed to leave a phase; ``diagnostics`` describes the state."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


def default_motor_gains(k=0.1):
    """Left-finger electrodes (1-3) drive motor 1, right (4-6) motor 2."""
    K = np.zeros((2, 6))
    K[0, :3] = k
    K[1, 3:] = k
    return K


def motor_update(theta_prev, c_norm, thresholds, gains):
    """theta_t = theta_{t-1} + K e_s with e_s = thresholds - c_norm[0:6].

    Returns (theta_next, e_s).
    """
    e_s = np.asarray(thresholds, dtype=float) - np.asarray(c_norm, dtype=float)[:6]
    theta = np.asarray(theta_prev, dtype=float) + np.asarray(gains, dtype=float) @ e_s
    return theta, e_s


def skin_grip_pose_errors(c7, c8, th2, th3, z_form="servo"):
    """Height and roll errors from the two inner electrodes.

    ``z_form="servo"`` uses th2 - c7 (zero at the setpoint); ``"printed"``
    reproduces -c7 - th2 for fidelity experiments.
    """
    if z_form == "servo":
        z_s = th2 - c7
    elif z_form == "printed":
        z_s = -c7 - th2
    else:
        raise ValueError(f"unknown z_form {z_form!r}")
    gamma_s = (c7 - th2) - (c8 - th3)
    return z_s, gamma_s


def rigid_errors(c, th):
    """Lateral, height, yaw and roll errors from the 2x3 electrode grid."""
    c1, c2, c3, c4, c5, c6 = np.asarray(c, dtype=float)[:6]
    th = np.asarray(th, dtype=float)
    x_r = c1 - c3 + c4 - c6
    z_r = th[1] - c2 + th[4] - c5
    alpha_r = c4 - c1 + c3 - c6
    gamma_r = c1 + c2 + c3 - c4 - c5 - c6
    return x_r, z_r, alpha_r, gamma_r


@dataclass
class ControlCommand:
    phase: Phase
    dz: float = 0.0
    dgamma: float = 0.0
    dx: float = 0.0
    dalpha: float = 0.0
    theta: tuple = None
    feed: bool = False
    over_travel: bool = False
    errors: dict = field(default_factory=dict)


def _advance(current, new):
    if _ORDER[new] < _ORDER[current]:
        raise RuntimeError(f"phase regression {current} -> {new}")
    return new


@dataclass
class SkinGripController:
    thresholds_s1: np.ndarray
    th2: float
    th3: float
    motor_gains: np.ndarray = field(default_factory=default_motor_gains)
    pose_gains: tuple = (-0.019, 0.44)
    delta: float = 0.003
    eta: float = 0.01
    n_max: int = 600
    theta_max: float = 4.0
    z_form: str = "servo"
    servo_in_closure: bool = True
    phase: Phase = Phase.APPROACH
    closure_ticks: int = 0

    @classmethod
    def from_profile(cls, profile, **kw):
        return cls(profile.s1.copy(), profile.s2, profile.s3, **kw)

    def step(self, c_norm, theta, z=None, z_floor=None):
        """Advance one tick on normalized readings; returns a ControlCommand."""
        c_norm = np.asarray(c_norm, dtype=float)
        z_s, gamma_s = skin_grip_pose_errors(c_norm[6], c_norm[7], self.th2, self.th3, self.z_form)
        e_s = np.asarray(self.thresholds_s1) - c_norm[:6]
        errors = {"z_s": z_s, "gamma_s": gamma_s, "e_s": e_s.tolist(), "e_norm": float(np.linalg.norm(e_s))}
        theta = tuple(float(t) for t in theta)

        if self.phase == Phase.APPROACH:
            if c_norm[6] < self.th2:
                if z is not None and z_floor is not None and z - self.delta < z_floor:
                    raise StallError("approach overran the bed plane", {"z": z, "c7": float(c_norm[6])})
                return ControlCommand(self.phase, dz=-self.delta, theta=theta, errors=errors)
            self.phase = _advance(self.phase, Phase.CLOSURE)

        if self.phase == Phase.CLOSURE:
            if errors["e_norm"] < self.eta:
                self.phase = _advance(self.phase, Phase.CLEANING)
            else:
                self.closure_ticks += 1
                if self.closure_ticks > self.n_max:
                    raise StallError(
                        f"closure did not converge in {self.n_max} ticks",
                        {"e_s": errors["e_s"], "e_norm": errors["e_norm"], "theta": theta},
                    )
                new_theta, over = self._motors(theta, c_norm)
                dz, dgamma = self._pose(z_s, gamma_s) if self.servo_in_closure else (0.0, 0.0)
                return ControlCommand(
                    self.phase, dz=dz, dgamma=dgamma, theta=new_theta, over_travel=over, errors=errors
                )

        dz, dgamma = self._pose(z_s, gamma_s)
        new_theta, over = self._motors(theta, c_norm)
        return ControlCommand(
            self.phase, dz=dz, dgamma=dgamma, theta=new_theta, feed=True, over_travel=over, errors=errors
        )

    def _pose(self, z_s, gamma_s):
        dz, dgamma = np.diag(self.pose_gains) @ np.array([z_s, gamma_s])
        return float(dz), float(dgamma)

    def _motors(self, theta, c_norm):
        raw, _ = motor_update(theta, c_norm, self.thresholds_s1, self.motor_gains)
        clipped = np.clip(raw, 0.0, self.theta_max)
        over = bool(np.any(raw >= self.theta_max))
        return tuple(float(t) for t in clipped), over


@dataclass
class RigidController:
    thresholds: np.ndarray
    gains: tuple = (0.004, -0.0084, 0.25, 0.094)
    delta: float = 0.003
    phase: Phase = Phase.APPROACH

    @classmethod
    def from_profile(cls, profile, **kw):
        return cls(profile.thresholds.copy(), **kw)

    def step(self, c_norm, z=None, z_floor=None):
        c_norm = np.asarray(c_norm, dtype=float)
        x_r, z_r, alpha_r, gamma_r = rigid_errors(c_norm, self.thresholds)
        errors = {"x_r": x_r, "z_r": z_r, "alpha_r": alpha_r, "gamma_r": gamma_r}
        if self.phase == Phase.APPROACH:
            if np.all(c_norm[:6] < np.asarray(self.thresholds)):
                if z is not None and z_floor is not None and z - self.delta < z_floor:
                    raise StallError("approach overran the bed plane", {"z": z, "c_norm": c_norm.tolist()})
                return ControlCommand(self.phase, dz=-self.delta, errors=errors)
            self.phase = _advance(self.phase, Phase.CLEANING)
        dx, dz, dalpha, dgamma = np.diag(self.gains) @ np.array([x_r, z_r, alpha_r, gamma_r])
        return ControlCommand(
            self.phase, dz=float(dz), dgamma=float(dgamma), dx=float(dx), dalpha=float(dalpha), feed=True, errors=errors
        )


def skin_grip_step(controller, c_norm, state, z_floor=None):
    return controller.step(c_norm, state.theta, z=state.z, z_floor=z_floor)


def rigid_step(controller, c_norm, state, z_floor=None):
    return controller.step(c_norm, z=state.z, z_floor=z_floor)
