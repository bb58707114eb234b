"""Tapered-cylinder limb geometry, cream application and coverage accounting.

The limb is a linear frustum. In its own frame the axis runs along +X from
the distal end (u = 0, wrist or ankle, diameter ``tip_diameter``) to the
proximal end (u = 1, shoulder or knee, diameter ``base_diameter``). Surface
points are addressed by (u, phi) with phi = 0 on top (+Z) and increasing
toward +Y.
"""

from dataclasses import dataclass, field

import numpy as np

from . import geometry

DIAMETER_ENVELOPE = (0.06, 0.20)
CLEANED_RESIDUAL = 0.01


class LimbValidationError(ValueError):
    """Limb or cream-ring parameters outside the supported envelope."""


class UndefinedCoverageError(ValueError):
    """Coverage requested on a grid with no initial cream (A_b = 0)."""


@dataclass(frozen=True)
class LimbModel:
    base_diameter: float
    tip_diameter: float
    length: float
    axis_pose: np.ndarray = field(default_factory=lambda: np.eye(4), compare=False, repr=False)

    @property
    def base_radius(self):
        return 0.5 * self.base_diameter

    @property
    def tip_radius(self):
        return 0.5 * self.tip_diameter

    @property
    def mean_diameter(self):
        return 0.5 * (self.base_diameter + self.tip_diameter)

    def radius(self, u):
        """Radius at axial fraction ``u``; clamped to the end radii outside [0, 1]."""
        u = np.clip(u, 0.0, 1.0)
        return self.tip_radius + (self.base_radius - self.tip_radius) * u

    @property
    def slant_length(self):
        return float(np.hypot(self.length, self.base_radius - self.tip_radius))

    def lateral_area(self):
        return float(np.pi * (self.base_radius + self.tip_radius) * self.slant_length)

    def surface_point(self, u, phi):
        """World coordinates of the surface point at (u, phi)."""
        u = np.asarray(u, dtype=float)
        phi = np.asarray(phi, dtype=float)
        r = self.radius(u)
        local = np.stack([u * self.length, r * np.sin(phi), r * np.cos(phi)], axis=-1)
        return geometry.apply(self.axis_pose, local)

    def to_local(self, points):
        return geometry.apply(geometry.invert(self.axis_pose), points)


def build_limb(base_diameter, tip_diameter, length, axis_pose=None):
    """Validate dimensions and return a frustum ``LimbModel``."""
    lo, hi = DIAMETER_ENVELOPE
    for name, value in (("base_diameter", base_diameter), ("tip_diameter", tip_diameter)):
        if not np.isfinite(value) or value <= 0:
            raise LimbValidationError(f"{name} must be positive, got {value!r}")
        if not lo <= value <= hi:
            raise LimbValidationError(f"{name}={value} outside supported envelope [{lo}, {hi}] m")
    if not np.isfinite(length) or length <= 0:
        raise LimbValidationError(f"length must be positive, got {length!r}")
    if tip_diameter > base_diameter:
        raise LimbValidationError(
            f"tip_diameter={tip_diameter} exceeds base_diameter={base_diameter}"
        )
    pose = np.eye(4) if axis_pose is None else np.asarray(axis_pose, dtype=float)
    if pose.shape != (4, 4) or not np.all(np.isfinite(pose)):
        raise LimbValidationError("axis_pose must be a finite 4x4 transform")
    return LimbModel(float(base_diameter), float(tip_diameter), float(length), pose)


def signed_distance(limb, points):
    """Signed distance (m) from ``points`` to the limb's lateral surface.

    Positive outside the skin, negative inside. Beyond the ends the limb is
    continued as a cylinder of the end radius (hand or torso stand-in), so the
    field stays smooth for effectors hanging past u = 0 or u = 1.
    """
    local = limb.to_local(points)
    s = local[..., 0]
    rho = np.hypot(local[..., 1], local[..., 2])
    r0, r1, L = limb.tip_radius, limb.base_radius, limb.length
    dr = r1 - r0
    slant = np.hypot(L, dr)
    # projection of (s, rho) onto the generator line (0, r0) -> (L, r1)
    t = (s * L + (rho - r0) * dr) / slant**2
    along_line = ((rho - r0) * L - s * dr) / slant
    capped = rho - limb.radius(s / L)
    out = np.where((t >= 0.0) & (t <= 1.0), along_line, capped)
    return out if out.ndim else float(out)


@dataclass
class SurfaceGrid:
    """Cell grid over the lateral surface carrying cream and wipe state.

    Cell (i, j) spans u in [i, i+1]/n_axial and phi in
    [-pi + j*dphi, -pi + (j+1)*dphi).
    """

    n_axial: int
    n_circ: int
    area: np.ndarray
    cream_mass: np.ndarray
    wipe_exposure: np.ndarray
    initial_mass: np.ndarray

    @property
    def u_edges(self):
        return np.linspace(0.0, 1.0, self.n_axial + 1)

    @property
    def phi_edges(self):
        return np.linspace(-np.pi, np.pi, self.n_circ + 1)

    @property
    def u_centers(self):
        e = self.u_edges
        return 0.5 * (e[1:] + e[:-1])

    @property
    def phi_centers(self):
        e = self.phi_edges
        return 0.5 * (e[1:] + e[:-1])

    @property
    def creamed_area(self):
        return float(self.area[self.initial_mass > 0].sum())

    def copy(self):
        return SurfaceGrid(
            self.n_axial,
            self.n_circ,
            self.area.copy(),
            self.cream_mass.copy(),
            self.wipe_exposure.copy(),
            self.initial_mass.copy(),
        )

    def cell_index(self, u, phi):
        """Cell indices for surface coordinates; ``phi`` is wrapped into [-pi, pi)."""
        u = np.asarray(u, dtype=float)
        phi = np.mod(np.asarray(phi, dtype=float) + np.pi, 2 * np.pi)
        i = np.clip((u * self.n_axial).astype(int), 0, self.n_axial - 1)
        j = np.clip((phi / (2 * np.pi) * self.n_circ).astype(int), 0, self.n_circ - 1)
        return i, j


def build_grid(limb, n_axial=128, n_circ=96):
    u = np.linspace(0.0, 1.0, n_axial + 1)
    r = limb.radius(u)
    ds = limb.length / n_axial
    band = np.pi * (r[1:] + r[:-1]) * np.hypot(ds, np.diff(r))
    area = np.repeat((band / n_circ)[:, None], n_circ, axis=1)
    zeros = np.zeros((n_axial, n_circ))
    return SurfaceGrid(n_axial, n_circ, area, zeros.copy(), zeros.copy(), zeros.copy())


@dataclass(frozen=True)
class CreamRing:
    axial_center: float
    axial_width: float

    def bounds(self, limb):
        c = self.axial_center * limb.length
        return c - 0.5 * self.axial_width, c + 0.5 * self.axial_width


DEFAULT_RINGS = (CreamRing(0.3, 0.04), CreamRing(0.5, 0.04), CreamRing(0.7, 0.04))


def validate_rings(rings, limb):
    spans = []
    for ring in rings:
        if not 0.0 < ring.axial_center < 1.0:
            raise LimbValidationError(f"ring center {ring.axial_center} not in (0, 1)")
        if ring.axial_width <= 0:
            raise LimbValidationError(f"ring width {ring.axial_width} must be positive")
        lo, hi = ring.bounds(limb)
        if lo < 0.0 or hi > limb.length:
            raise LimbValidationError(f"ring at u={ring.axial_center} extends past the limb")
        spans.append((lo, hi))
    spans.sort()
    for (_, hi_a), (lo_b, _) in zip(spans, spans[1:]):
        if lo_b < hi_a:
            raise LimbValidationError("cream rings overlap")


def apply_cream_rings(grid, limb, rings, mass_per_area=1.0):
    """Cream every cell row whose axial span intersects a ring, full circumference."""
    validate_rings(rings, limb)
    s_edges = grid.u_edges * limb.length
    creamed = np.zeros(grid.n_axial, dtype=bool)
    for ring in rings:
        lo, hi = ring.bounds(limb)
        creamed |= (s_edges[1:] > lo) & (s_edges[:-1] < hi)
    mass = np.where(creamed[:, None], mass_per_area * grid.area, 0.0)
    grid.cream_mass = mass.copy()
    grid.initial_mass = mass.copy()
    grid.wipe_exposure = np.zeros_like(mass)
    return grid


@dataclass(frozen=True)
class ViewPartition:
    """Circumferential split into camera views (degrees).

    top = [-top_half, top_half), sides = the next ``side_width`` on each side,
    bottom = the remainder around phi = 180.
    """

    top_half: float = 60.0
    side_width: float = 60.0

    def __post_init__(self):
        if self.top_half <= 0 or self.side_width <= 0 or self.top_half + self.side_width >= 180:
            raise ValueError("view partition must leave a non-empty bottom band")

    def label(self, phi):
        """Return 0 (top), 1 (side) or 2 (bottom) for each angle in radians."""
        # rounding keeps angles given in degrees on the intended side of a boundary
        deg = np.round(np.degrees(np.mod(np.asarray(phi, dtype=float) + np.pi, 2 * np.pi) - np.pi), 9)
        t, edge = self.top_half, self.top_half + self.side_width
        top = (deg >= -t) & (deg < t)
        side = ((deg >= t) & (deg < edge)) | ((deg >= -edge) & (deg < -t))
        return np.where(top, 0, np.where(side, 1, 2))

    def measures(self):
        """Angular measure (radians) of top, side (both bands) and bottom."""
        top = 2 * self.top_half
        side = 2 * self.side_width
        return tuple(np.radians(x) for x in (top, side, 360.0 - top - side))


VIEWS = ("top", "side", "bottom")


@dataclass(frozen=True)
class CoverageReport:
    top: float
    side: float
    bottom: float
    total: float
    creamed_area: float

    def as_dict(self):
        return {"top": self.top, "side": self.side, "bottom": self.bottom, "total": self.total}


def cleaned_mask(grid):
    creamed = grid.initial_mass > 0
    return creamed & (grid.cream_mass < CLEANED_RESIDUAL * grid.initial_mass)


def coverage_report(grid_before, grid_after, views=ViewPartition()):
    """Percent of the initially creamed area that was cleaned, per view and total."""
    if (grid_before.n_axial, grid_before.n_circ) != (grid_after.n_axial, grid_after.n_circ):
        raise ValueError("grids must share dimensions")
    creamed = grid_before.cream_mass > 0
    a_before = float(grid_before.area[creamed].sum())
    if a_before <= 0.0:
        raise UndefinedCoverageError("no cream applied: coverage is undefined")
    cleaned = creamed & (grid_after.cream_mass < CLEANED_RESIDUAL * grid_before.cream_mass)
    labels = np.broadcast_to(views.label(grid_before.phi_centers)[None, :], creamed.shape)
    out = []
    for k in range(3):
        in_view = creamed & (labels == k)
        denom = grid_before.area[in_view].sum()
        num = grid_before.area[in_view & cleaned].sum()
        out.append(100.0 * num / denom if denom > 0 else float("nan"))
    total = 100.0 * grid_before.area[cleaned].sum() / a_before
    return CoverageReport(out[0], out[1], out[2], float(total), a_before)
