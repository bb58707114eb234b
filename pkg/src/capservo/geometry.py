"""Small rigid-transform helpers shared by the limb and effector models.

All transforms are 4x4 homogeneous numpy arrays. The world frame has X along
the limb axis, Z pointing up and Y completing a right-handed frame.
"""

import numpy as np


def rot_x(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def transform(rotation=None, translation=None):
    T = np.eye(4)
    if rotation is not None:
        T[:3, :3] = rotation
    if translation is not None:
        T[:3, 3] = translation
    return T


def invert(T):
    R = T[:3, :3]
    out = np.eye(4)
    out[:3, :3] = R.T
    out[:3, 3] = -R.T @ T[:3, 3]
    return out


def apply(T, points):
    """Apply transform ``T`` to an (..., 3) array of points."""
    points = np.asarray(points, dtype=float)
    return points @ T[:3, :3].T + T[:3, 3]


def apply_rotation(T, vectors):
    return np.asarray(vectors, dtype=float) @ T[:3, :3].T


def circumferential_frame(beta):
    """Rotation about the limb axis that carries the top direction (phi=0) to phi=beta.

    Circumferential angle phi is measured from +Z toward +Y, so a surface
    point at angle phi sits at (Y, Z) = r*(sin phi, cos phi).
    """
    # rot_x(a) maps +Z to (0, -sin a, cos a); we want (0, sin beta, cos beta)
    return rot_x(-beta)
