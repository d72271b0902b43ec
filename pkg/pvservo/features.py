import numpy as np

from .base import BaseVector
from .exceptions import BehindCameraError, CoincidentPointsError
from .utils import skew


class PointFeature(BaseVector):
    """Image point (u, v) in pixels with the camera-frame depth of its scene point"""
    _fields = ('u', 'v', 'depth')

    @classmethod
    def from_values(cls, u, v, depth=np.nan):
        return cls([u, v, depth])

    def with_depth(self, depth):
        return type(self)([self._values[0], self._values[1], depth])


class LineFeature(BaseVector):
    """Polar image line u sin(theta) + v cos(theta) = r, theta in (-pi/2, pi/2]"""
    _fields = ('r', 'theta')

    def _normalize(self, values):
        theta = values[1]
        folded = _fold(theta)
        if np.isfinite(theta) and folded != theta:
            # a half-turn of theta flips the sign of the normal
            turns = int(np.round((folded - theta) / np.pi))
            if turns % 2:
                values[0] = -values[0]
            values[1] = folded
        return values


class TwistTransform:
    """Velocity twist transform T = [R, [t]x R; 0, R] mapping camera twists to body twists"""
    def __init__(self, R, t):
        self.R = np.asarray(R, dtype=float)
        self.t = np.asarray(t, dtype=float)
        S = skew(self.t)
        self.matrix = np.block([
            [self.R, S @ self.R],
            [np.zeros((3, 3)), self.R],
        ])

    def __array__(self, dtype=None, copy=None):
        return self.matrix.astype(dtype) if dtype is not None else self.matrix.copy()

    @property
    def inverse(self):
        Rt = self.R.T
        return np.block([
            [Rt, -Rt @ skew(self.t)],
            [np.zeros((3, 3)), Rt],
        ])

    def to_camera(self, body_twist):
        return self.inverse @ np.asarray(body_twist, dtype=float)

    def to_body(self, camera_twist):
        return self.matrix @ np.asarray(camera_twist, dtype=float)


def project_point(p_c, lam):
    x, y, z = np.asarray(p_c, dtype=float)
    if not z > 0:
        raise BehindCameraError(f'Point {(x, y, z)} is not in front of the camera')
    scale = lam / z
    return PointFeature([scale * x, scale * y, z])


def point_interaction_matrix(zeta, lam):
    """Rows of J_f for one point: (u', v') as a function of the camera twist (v, w)"""
    u, v, depth = np.asarray(zeta, dtype=float)
    if not depth > 0:
        raise BehindCameraError(f'Feature depth must be positive, got {depth}')
    return np.array([
        [-lam / depth, 0.0, u / depth, u * v / lam, -(lam + u * u / lam), v],
        [0.0, -lam / depth, v / depth, lam + v * v / lam, -u * v / lam, -u],
    ])


def twist_transform(rig):
    return TwistTransform(rig.R_bc, rig.t_bc)


def line_from_points(z1, z2):
    u1, v1 = np.asarray(z1, dtype=float)[:2]
    u2, v2 = np.asarray(z2, dtype=float)[:2]
    du, dv = u2 - u1, v2 - v1
    if np.hypot(du, dv) <= 1e-12:
        raise CoincidentPointsError(f'Cannot fit a line through coincident points {(u1, v1)}')
    theta = _fold(np.arctan2(-dv, du))
    r = v1 * np.cos(theta) + u1 * np.sin(theta)
    return LineFeature([r, theta])


def line_jacobian(xi, z1, z2):
    """Derivative of (r, theta) with respect to (u1, v1, u2, v2)"""
    u1, v1 = np.asarray(z1, dtype=float)[:2]
    u2, v2 = np.asarray(z2, dtype=float)[:2]
    du, dv = u2 - u1, v2 - v1
    norm2 = du * du + dv * dv
    if norm2 <= 1e-24:
        raise CoincidentPointsError(f'Cannot fit a line through coincident points {(u1, v1)}')
    theta = _fold(np.arctan2(-dv, du))
    c, s = np.cos(theta), np.sin(theta)
    dtheta = np.array([-dv, du, dv, -du]) / norm2
    along = u1 * c - v1 * s
    dr = along * dtheta
    dr[0] += s
    dr[1] += c
    return np.vstack([dr, dtheta])


def compact_jacobian(xi, z1, z2, rig):
    """J = J_l J_f T^-1 mapping a body twist to (r', theta')"""
    J_f = np.vstack([
        point_interaction_matrix(z1, rig.focal),
        point_interaction_matrix(z2, rig.focal),
    ])
    return line_jacobian(xi, z1, z2) @ J_f @ twist_transform(rig).inverse


def points_from_line(u_o, v_o, theta, p_f):
    if p_f < 0:
        raise ValueError(f'p_f must be non-negative, got {p_f}')
    du, dv = p_f * np.cos(theta), p_f * np.sin(theta)
    return PointFeature([u_o + du, v_o + dv, np.nan]), PointFeature([u_o - du, v_o - dv, np.nan])


def _fold(theta):
    """Fold a line direction angle into (-pi/2, pi/2]"""
    if not np.isfinite(theta):
        return theta
    while theta > np.pi / 2:
        theta -= np.pi
    while theta <= -np.pi / 2:
        theta += np.pi
    return theta
