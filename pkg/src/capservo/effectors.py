"""Kinematics and contact of the two-finger soft gripper and the flat rigid tool.

Soft gripper frame: origin at the finger root, x along the limb axis, z up,
+y toward the left finger. Each finger is a constant-curvature arc leaving
the root horizontally and curling down around the limb; the left finger
sits at axial offset -a and the right finger at +a so the two can pass each
other under the limb.

Rigid tool frame: x across the limb, y along it, z up; the 2x3 electrode
grid lies in the z = 0 plane with the left column (1-3) at +y and the top
row (1, 4) at +x.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import geometry
from . import limb as limb_mod
from .sensor import ElectrodeGeom, SOFT_LABELS, RIGID_LABELS, raw_capacitance

CONTACT_TOLERANCE = 1e-3


@dataclass(frozen=True)
class SoftGripperParams:
    rest_diameter: float = 0.160
    width: float = 0.030
    thickness: float = 0.003
    foam: float = 0.020
    spool_radius: float = 0.01
    tendon_max: float = 0.04
    min_wrap_radius: float = 0.035
    axial_gap: float = 0.001
    back_size: tuple = (0.020, 0.065)
    inner_size: tuple = (0.015, 0.025)
    inner_center: float = 0.0175
    back_centers: tuple = (0.0525, 0.1275, 0.2025)

    @property
    def shell(self):
        """Centerline-to-skin standoff of the inner face at first touch."""
        return 0.5 * self.thickness + self.foam

    @property
    def rest_curvature(self):
        # the rest cradle's contact surface is a rest_diameter circle
        return 1.0 / (0.5 * self.rest_diameter + self.shell)

    @property
    def max_curvature(self):
        return 1.0 / self.min_wrap_radius

    @property
    def curvature_gain(self):
        return (self.max_curvature - self.rest_curvature) / self.tendon_max

    @property
    def arc_length(self):
        # each rest finger spans a half circle
        return np.pi / self.rest_curvature

    @property
    def theta_max(self):
        return self.tendon_max / self.spool_radius

    @property
    def axial_offset(self):
        return 0.5 * self.width + self.axial_gap

    def finger_axial(self, side):
        return -self.axial_offset if side == "left" else self.axial_offset

    def electrodes(self):
        out = []
        for k, side in enumerate(("left", "right")):
            for m, s in enumerate(self.back_centers):
                out.append(
                    ElectrodeGeom(SOFT_LABELS[3 * k + m], *self.back_size, (s, self.finger_axial(side)), "back")
                )
        for k, side in enumerate(("left", "right")):
            out.append(
                ElectrodeGeom(SOFT_LABELS[6 + k], *self.inner_size, (self.inner_center, self.finger_axial(side)), "inner")
            )
        return tuple(out)


@dataclass(frozen=True)
class RigidToolParams:
    plate_width: float = 0.09
    plate_length: float = 0.06
    foam: float = 0.020
    electrode_size: tuple = (0.020, 0.025)
    row_offsets: tuple = (0.03, 0.0, -0.03)
    column_offsets: tuple = (0.015, -0.015)

    @property
    def shell(self):
        return self.foam

    def electrodes(self):
        out = []
        for c, y in enumerate(self.column_offsets):
            for r, x in enumerate(self.row_offsets):
                out.append(ElectrodeGeom(RIGID_LABELS[3 * c + r], *self.electrode_size, (x, y), "plate"))
        return tuple(out)


@dataclass(frozen=True)
class SkinGripState:
    """Soft gripper pose: height z and roll gamma of the root, motor angles theta.

    ``axial`` and ``beta`` place the gripper along and around the limb;
    ``y`` is an uncontrolled lateral offset of the root.
    """

    z: float
    gamma: float = 0.0
    theta: tuple = (0.0, 0.0)
    axial: float = 0.0
    beta: float = 0.0
    y: float = 0.0

    kind = "soft"

    def tendon(self, params):
        return params.spool_radius * np.asarray(self.theta, dtype=float)


@dataclass(frozen=True)
class RigidToolState:
    x: float
    z: float
    alpha: float = 0.0
    gamma: float = 0.0
    axial: float = 0.0
    beta: float = 0.0

    kind = "rigid"


@dataclass(frozen=True)
class FingerArc:
    curvature: float
    arc_length: float
    tendon_disp: float
    clamped: bool

    @property
    def radius(self):
        return 1.0 / self.curvature

    @property
    def span(self):
        return self.curvature * self.arc_length

    def centerline(self, n=50):
        """Sampled centerline (y, z) points and unit inward normals of the left finger."""
        psi = np.linspace(0.0, self.span, n)
        R = self.radius
        pts = np.stack([R * np.sin(psi), R * (np.cos(psi) - 1.0)], axis=-1)
        normals = -np.stack([np.sin(psi), np.cos(psi)], axis=-1)
        return pts, normals


def finger_shape(tendon_disp, params=SoftGripperParams()):
    """Constant-curvature finger arc for a tendon displacement (clamped to range)."""
    d = float(tendon_disp)
    clamped = not 0.0 <= d <= params.tendon_max
    d = min(max(d, 0.0), params.tendon_max)
    kappa = params.rest_curvature + params.curvature_gain * d
    return FingerArc(kappa, params.arc_length, d, clamped)


def curvature_for_radius(radius, params=SoftGripperParams()):
    """Tendon displacement giving a centerline radius; may lie outside the motor range."""
    return (1.0 / radius - params.rest_curvature) / params.curvature_gain


def _world_from_limb_local(limb, T_local):
    return limb.axis_pose @ T_local


def soft_frame(state, limb):
    """limb-local and world transform of the soft gripper root frame."""
    T = geometry.transform(geometry.circumferential_frame(state.beta))
    T = T @ geometry.transform(translation=(state.axial, state.y, state.z))
    T = T @ geometry.transform(geometry.rot_x(state.gamma))
    return _world_from_limb_local(limb, T)


_TOOL_BASIS = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])


def rigid_frame(state, limb):
    T = geometry.transform(geometry.circumferential_frame(state.beta))
    T = T @ geometry.transform(translation=(state.axial, 0.0, 0.0))
    T = T @ geometry.transform(_TOOL_BASIS)
    T = T @ geometry.transform(translation=(state.x, 0.0, state.z))
    T = T @ geometry.transform(geometry.rot_z(state.alpha) @ geometry.rot_x(state.gamma))
    return _world_from_limb_local(limb, T)


def effector_frame(state, limb):
    return soft_frame(state, limb) if state.kind == "soft" else rigid_frame(state, limb)


def _finger_point(arc, side, s, axial, offset):
    """Point on a finger in the gripper frame.

    ``s`` is arc length from the root, ``offset`` a signed distance along the
    inward normal (positive toward the limb).
    """
    psi = arc.curvature * np.asarray(s, dtype=float)
    R = arc.radius
    sign = 1.0 if side == "left" else -1.0
    y = sign * (R - offset) * np.sin(psi)
    z = -R + (R - offset) * np.cos(psi)
    x = np.broadcast_to(np.asarray(axial, dtype=float), y.shape)
    return np.stack([x, y, z], axis=-1)


def _face_grid(n=3):
    f = (np.arange(n) + 0.5) / n - 0.5
    a, b = np.meshgrid(f, f, indexing="ij")
    return a.ravel(), b.ravel()


@dataclass(frozen=True)
class ElectrodePose:
    label: str
    center: np.ndarray
    normal: np.ndarray
    samples: np.ndarray
    shell: float


def finger_arcs(state, params):
    tendon = state.tendon(params)
    return finger_shape(tendon[0], params), finger_shape(tendon[1], params)


def electrode_poses(state, limb, params, n_side=3):
    """World poses of the electrodes in label order (8 soft, 6 rigid).

    ``normal`` points from the face toward the skin side; ``samples`` holds
    n_side**2 points on each face used by the sensor model.
    """
    fa, fb = _face_grid(n_side)
    poses = []
    if state.kind == "soft":
        T = soft_frame(state, limb)
        arcs = dict(zip(("left", "right"), finger_arcs(state, params)))
        for geom in params.electrodes():
            side = geom.label.split()[0]
            arc = arcs[side]
            s_c, x_c = geom.mount
            w, h = geom.width, geom.height
            offset = -0.5 * params.thickness if geom.side == "back" else 0.5 * params.thickness
            shell = params.thickness + params.foam if geom.side == "back" else params.foam
            s = s_c + fb * h
            samples = _finger_point(arc, side, s, x_c + fa * w, offset)
            center = _finger_point(arc, side, s_c, x_c, offset)
            inward = _finger_point(arc, side, s_c, x_c, offset + 1.0) - center
            poses.append(
                ElectrodePose(
                    geom.label,
                    geometry.apply(T, center),
                    geometry.apply_rotation(T, inward),
                    geometry.apply(T, samples),
                    shell,
                )
            )
    else:
        T = rigid_frame(state, limb)
        down = geometry.apply_rotation(T, [0.0, 0.0, -1.0])
        for geom in params.electrodes():
            x_c, y_c = geom.mount
            local = np.stack([x_c + fa * geom.width, y_c + fb * geom.height, np.zeros_like(fa)], axis=-1)
            poses.append(
                ElectrodePose(
                    geom.label,
                    geometry.apply(T, np.array([x_c, y_c, 0.0])),
                    down,
                    geometry.apply(T, local),
                    params.shell,
                )
            )
    return poses


def sense(state, limb, params, model, rng=None, poses=None):
    """Raw readings of every electrode for the current state."""
    poses = electrode_poses(state, limb, params) if poses is None else poses
    samples = np.stack([p.samples for p in poses])
    shells = np.array([p.shell for p in poses])
    return raw_capacitance(model, samples, limb, shells, params.foam, rng=rng)


@dataclass
class ContactMap:
    """Effector contact registered to limb grid cells.

    ``pressure`` is foam penetration / foam thickness, capped at 1;
    ``over_pressure`` counts patches where the foam is fully compressed.
    """

    rows: np.ndarray
    cols: np.ndarray
    pressure: np.ndarray
    points: np.ndarray
    over_pressure: int = 0
    column_means: tuple = field(default=None)

    @property
    def in_contact(self):
        return self.pressure > 0.0

    def __len__(self):
        return int(np.count_nonzero(self.in_contact))

    @classmethod
    def empty(cls):
        z = np.zeros(0)
        return cls(z.astype(int), z.astype(int), z, np.zeros((0, 3)))


class GridGeometry:
    """Cached cell-center coordinates of a limb grid (limb-local frame)."""

    def __init__(self, limb, grid):
        self.limb = limb
        self.grid = grid
        u = grid.u_centers
        phi = grid.phi_centers
        r = limb.radius(u)
        self.s = u * limb.length
        Y = r[:, None] * np.sin(phi)[None, :]
        Z = r[:, None] * np.cos(phi)[None, :]
        X = np.broadcast_to(self.s[:, None], Y.shape)
        self.local = np.stack([X, Y, Z], axis=-1)
        self.world = geometry.apply(limb.axis_pose, self.local)

    def rows_between(self, lo, hi):
        return np.flatnonzero((self.s >= lo) & (self.s <= hi))


def _contact_from_penetration(rows, cols, pen, foam, pts):
    pressure = np.minimum(np.maximum(pen, 0.0) / foam, 1.0)
    keep = pressure > 0.0
    over = int(np.count_nonzero(pen[keep] >= foam))
    return ContactMap(rows[keep], cols[keep], pressure[keep], pts[keep], over)


def contact_map(state, limb, params, grid_geom):
    """Per-cell contact pressure of the effector's compliant shell on the limb.

    ``limb`` places the effector frame; the skin points come from ``grid_geom``.
    """
    if state.kind == "soft":
        return _soft_contact(state, limb, params, grid_geom)
    return _rigid_contact(state, limb, params, grid_geom)


def _soft_contact(state, limb, params, gg):
    T_inv = geometry.invert(soft_frame(state, limb))
    # the root frame may be rolled or rotated around the limb; cells are
    # preselected by axial distance from the root, which the roll preserves
    reach = params.axial_offset + 0.5 * params.width
    rows = gg.rows_between(state.axial - reach - 1e-9, state.axial + reach + 1e-9)
    parts = []
    for side, arc in zip(("left", "right"), finger_arcs(state, params)):
        x_f = params.finger_axial(side)
        pts_world = gg.world[rows].reshape(-1, 3)
        local = geometry.apply(T_inv, pts_world)
        in_band = np.abs(local[:, 0] - x_f) <= 0.5 * params.width
        R = arc.radius
        dy = local[:, 1] if side == "left" else -local[:, 1]
        dz = local[:, 2] + R
        psi = np.mod(np.arctan2(dy, dz), 2 * np.pi)
        rho = np.hypot(dy, dz)
        on_arc = psi <= min(arc.span, 2 * np.pi)
        pen = rho - (R - params.shell)
        # skin farther out than one more shell lies beyond the finger, not under it
        near = pen <= 2.0 * params.shell
        pen = np.where(in_band & on_arc & near, pen, -1.0)
        rr, cc = np.divmod(np.arange(pts_world.shape[0]), gg.grid.n_circ)
        parts.append((rows[rr], cc, pen, pts_world))
    rows_all = np.concatenate([p[0] for p in parts])
    cols_all = np.concatenate([p[1] for p in parts])
    pen_all = np.concatenate([p[2] for p in parts])
    pts_all = np.concatenate([p[3] for p in parts])
    return _contact_from_penetration(rows_all, cols_all, pen_all, params.foam, pts_all)


def _rigid_contact(state, limb, params, gg):
    T = rigid_frame(state, limb)
    T_inv = geometry.invert(T)
    reach = 0.5 * np.hypot(params.plate_width, params.plate_length)
    rows = gg.rows_between(state.axial - reach, state.axial + reach)
    pts_world = gg.world[rows].reshape(-1, 3)
    local = geometry.apply(T_inv, pts_world)
    inside = (np.abs(local[:, 0]) <= 0.5 * params.plate_width) & (
        np.abs(local[:, 1]) <= 0.5 * params.plate_length
    )
    pen = np.where(inside, local[:, 2] + params.foam, -1.0)
    rr, cc = np.divmod(np.arange(pts_world.shape[0]), gg.grid.n_circ)
    cmap = _contact_from_penetration(rows[rr], cc, pen, params.foam, pts_world)
    # mean pressure under each electrode column, for roll diagnostics
    left = inside & (local[:, 1] > 0)
    right = inside & (local[:, 1] < 0)
    p_all = np.minimum(np.maximum(pen, 0.0) / params.foam, 1.0)
    cmap.column_means = (
        float(p_all[left].mean()) if left.any() else 0.0,
        float(p_all[right].mean()) if right.any() else 0.0,
    )
    return cmap


def wrap_fraction(state, limb, params, n_arc=120, n_width=3):
    """Fraction of the fingers' skin-facing surface within 1 mm of the skin or pressing into it."""
    if state.kind != "soft":
        raise ValueError("wrap_fraction applies to the soft gripper only")
    T = soft_frame(state, limb)
    fracs = []
    for side, arc in zip(("left", "right"), finger_arcs(state, params)):
        s = np.linspace(0.0, arc.arc_length, n_arc)
        x = params.finger_axial(side) + np.linspace(-0.5, 0.5, n_width + 2)[1:-1] * params.width
        S, X = np.meshgrid(s, x, indexing="ij")
        pts = _finger_point(arc, side, S.ravel(), X.ravel(), params.shell)
        d = limb_mod.signed_distance(limb, geometry.apply(T, pts))
        fracs.append(np.mean(d <= CONTACT_TOLERANCE))
    return float(np.mean(fracs))


def concentric_height(limb, params, pressure, u=None):
    """Root height that centres a finger of the matching radius on the limb axis.

    Returns (z, tendon) such that the shell presses uniformly at ``pressure``
    around the limb cross-section at fraction ``u`` (defaults to mid-length).
    """
    u = 0.5 if u is None else u
    r = float(limb.radius(u))
    R = r + params.shell - pressure * params.foam
    return R, curvature_for_radius(R, params)


def rigid_comfort_height(limb, params, pressure, u=None):
    u = 0.5 if u is None else u
    r = float(limb.radius(u))
    return r + params.foam * (1.0 - pressure)


def footprint_half_length(params):
    """Axial half-extent of the effector's contact footprint about its frame origin."""
    if isinstance(params, SoftGripperParams):
        return params.axial_offset + 0.5 * params.width
    return 0.5 * params.plate_length


def with_pose(state, **kw):
    return replace(state, **kw)
