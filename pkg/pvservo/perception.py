import logging

import numpy as np
from scipy import ndimage
from scipy.spatial.transform import Rotation

from .exceptions import FeatureLossError, RankDeficientError
from .features import LineFeature, line_from_points, points_from_line
from .scene import camera_rotation, render_edge_mask
from .utils import as_matrix

logger = logging.getLogger(__name__)

DEFAULT_PROCESS_NOISE = 1e-3 * np.eye(4)
DEFAULT_MEASUREMENT_NOISE = np.diag([4.0, 1e-4, 4.0, 1e-4])
DEFAULT_INITIAL_COVARIANCE = 10.0 * np.eye(4)
# |cos theta| below this puts the crossing with u = 0 far outside the image
MIN_AXIS_COS = 1e-3


class EdgeObservation:
    """The two fitted edge lines of one frame; a missing side is ``None``"""
    def __init__(self, left=None, right=None, *, counts=(0, 0)):
        self.left = left
        self.right = right
        self.counts = tuple(int(c) for c in counts)

    @classmethod
    def empty(cls):
        return cls()

    @classmethod
    def from_measurement(cls, values):
        """Build from (r1, theta1, r2, theta2); non-finite pairs become invalid sides"""
        values = np.asarray(values, dtype=float)
        left = LineFeature(values[:2]) if np.all(np.isfinite(values[:2])) else None
        right = LineFeature(values[2:]) if np.all(np.isfinite(values[2:])) else None
        return cls(left, right)

    def __repr__(self):
        return f'EdgeObservation(left={self.left!r}, right={self.right!r})'

    @property
    def valid_left(self):
        return self.left is not None and bool(np.all(np.isfinite(self.left.to_values())))

    @property
    def valid_right(self):
        return self.right is not None and bool(np.all(np.isfinite(self.right.to_values())))

    @property
    def d_l1l2(self):
        """Separation of the two lines along the image's central vertical axis"""
        if not (self.valid_left and self.valid_right):
            return np.nan
        return abs(_axis_crossing(self.right) - _axis_crossing(self.left))

    def measurement(self):
        values = np.full(4, np.nan)
        if self.valid_left:
            values[:2] = self.left.to_values()
        if self.valid_right:
            values[2:] = self.right.to_values()
        return values


class LineEstimator:
    """Kalman filter over s = (r1, theta1, r2, theta2) with a linear predictor s+ = A s + B twist"""
    def __init__(self, A=None, B=None, *, process_noise=None, measurement_noise=None, initial_covariance=None,
                 dropout_horizon=15):
        self.A = np.eye(4) if A is None else as_matrix(A, (4, 4), 'A')
        self.B = np.zeros((4, 6)) if B is None else as_matrix(B, (4, 6), 'B')
        self.Qk = DEFAULT_PROCESS_NOISE if process_noise is None else as_matrix(process_noise, (4, 4), 'Qk')
        self.Rm = DEFAULT_MEASUREMENT_NOISE if measurement_noise is None else as_matrix(
            measurement_noise, (4, 4), 'Rm')
        self.P0 = DEFAULT_INITIAL_COVARIANCE if initial_covariance is None else as_matrix(
            initial_covariance, (4, 4), 'P0')
        self.H = np.eye(4)
        self.dropout_horizon = int(dropout_horizon)
        self.s = None
        self.P = self.P0.copy()
        self.missed = 0

    def __repr__(self):
        return f'LineEstimator(s={None if self.s is None else self.s.tolist()}, missed={self.missed})'

    @property
    def initialized(self):
        return self.s is not None

    @property
    def lost(self):
        return not self.initialized or self.missed > self.dropout_horizon

    def dup(self):
        est = object.__new__(type(self))
        est.__dict__.update(self.__dict__)
        est.s = None if self.s is None else self.s.copy()
        est.P = self.P.copy()
        return est


def extract_edge_lines(mask, depth, rig, *, min_pixels=50, min_component=20, min_separation=12.0,
                       depth_window=None):
    """Fit the two lateral edge lines of an edge mask.

    Stages: depth thresholding, a 3x3 majority filter, removal of connected
    components smaller than ``min_component``, a split of the remaining pixels
    into two sides of their principal axis, and a total-least-squares fit per
    side.  Coordinates of the result are centred on the principal point.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != rig.shape:
        raise ValueError(f'Mask shape {mask.shape} does not match the camera image {rig.shape}')
    if depth is not None:
        near, far = rig.depth_range if depth_window is None else depth_window
        mask = mask & (depth > 0) & (depth >= near) & (depth <= far)
    mask = ndimage.uniform_filter(mask.astype(np.float32), size=3, mode='constant') > 0.5
    labels, count = ndimage.label(mask, structure=np.ones((3, 3)))
    if count:
        sizes = np.bincount(labels.ravel())
        keep = sizes >= min_component
        keep[0] = False
        mask = keep[labels]
    rows, cols = np.nonzero(mask)
    if rows.size < min_pixels:
        return EdgeObservation(counts=(0, 0))
    u, v = rig.pixel_to_image(rows.astype(float), cols.astype(float))
    points = np.column_stack([u, v])
    centroid, direction = _principal_axis(points)
    normal = np.array([-direction[1], direction[0]])
    offsets = (points - centroid) @ normal
    if np.ptp(offsets) < min_separation:
        line = _fit_line(points)
        if _band_is_left(centroid, normal, depth, rig):
            return EdgeObservation(line, None, counts=(len(points), 0))
        return EdgeObservation(None, line, counts=(0, len(points)))
    sides = [points[offsets < 0], points[offsets >= 0]]
    sides.sort(key=lambda side: side[:, 1].mean())
    lines = [_fit_line(side) if len(side) >= min_pixels else None for side in sides]
    return EdgeObservation(lines[0], lines[1], counts=[len(side) for side in sides])


def kalman_step(est, measurement, cam_twist):
    """Advance the line filter by one frame.

    Predict with the linear model, then update with the valid sides of the
    measurement.  An uninitialised filter is seeded from the first frame with
    both sides valid.
    """
    cam_twist = np.asarray(cam_twist, dtype=float)
    if cam_twist.shape != (6,) or not np.all(np.isfinite(cam_twist)):
        raise ValueError(f'cam_twist must be a finite 6-vector, got {cam_twist}')
    if isinstance(measurement, EdgeObservation):
        z = measurement.measurement()
    else:
        z = np.asarray(measurement, dtype=float)
    rows = [i for side in ((0, 1), (2, 3)) if np.all(np.isfinite(z[list(side)])) for i in side]
    new = est.dup()
    if not est.initialized:
        if len(rows) == 4:
            new.s = z.copy()
            new.P = est.P0.copy()
            new.missed = 0
        else:
            new.missed += 1
        return new
    s = est.A @ est.s + est.B @ cam_twist
    P = est.A @ est.P @ est.A.T + est.Qk
    if rows:
        H = est.H[rows]
        S = H @ P @ H.T + est.Rm[np.ix_(rows, rows)]
        K = np.linalg.solve(S, H @ P).T
        s = s + K @ (z[rows] - H @ s)
        P = (np.eye(4) - K @ H) @ P
        P = (P + P.T) / 2
        new.missed = 0
    else:
        new.missed += 1
    new.s = s
    new.P = P
    return new


def dmd_fit(snapshots):
    """Least-squares fit of s' = A s + B twist over snapshot triples; returns (A, B, residual RMS)"""
    snapshots = list(snapshots)
    if len(snapshots) < 100:
        raise ValueError(f'dmd_fit needs at least 100 snapshots, got {len(snapshots)}')
    states = np.array([np.asarray(s, dtype=float) for s, _, _ in snapshots])
    twists = np.array([np.asarray(g, dtype=float) for _, g, _ in snapshots])
    following = np.array([np.asarray(s, dtype=float) for _, _, s in snapshots])
    if states.shape[1:] != (4,) or twists.shape[1:] != (6,) or following.shape[1:] != (4,):
        raise ValueError('Snapshots must be (4-vector, 6-vector, 4-vector) triples')
    regressor = np.hstack([states, twists])
    rank = np.linalg.matrix_rank(regressor)
    if rank < 10:
        raise RankDeficientError(f'Snapshot regressor has rank {rank} < 10; the inputs are not persistently exciting')
    coef, *_ = np.linalg.lstsq(regressor, following, rcond=None)
    residual = following - regressor @ coef
    rms = float(np.sqrt(np.mean(residual ** 2)))
    return coef[:4].T, coef[4:].T, rms


def midline_features(est, rig, *, depth=None, eta_zd=3.0, c_p=0.75):
    """Two points on the array midline, each with its depth, and the edge separation d_L1L2.

    The midline has the mean angle of both edges and passes through the
    midpoint of their crossings with the central vertical axis u = 0.
    """
    if est.lost:
        raise FeatureLossError(
            f'Edges lost for {est.missed} frames (horizon {est.dropout_horizon})'
            if est.initialized else 'Line filter was never initialised'
        )
    if not np.all(np.isfinite(est.s)):
        raise FeatureLossError(f'Line filter state is not finite: {est.s}')
    left = LineFeature(est.s[:2])
    right = LineFeature(est.s[2:])
    v1, v2 = _axis_crossing(left), _axis_crossing(right)
    if not (np.isfinite(v1) and np.isfinite(v2)):
        raise FeatureLossError(f'Edge lines do not cross the central image axis: {est.s}')
    v_o = (v1 + v2) / 2
    theta = (left.theta + right.theta) / 2
    separation = abs(v2 - v1)
    p_f = c_p * separation
    c, s = abs(np.cos(theta)), abs(np.sin(theta))
    if c > 0:
        p_f = min(p_f, (rig.image_width / 2 - 1) / c)
    if s > 0:
        p_f = min(p_f, (rig.image_height / 2 - 1 - abs(v_o)) / s)
    p_f = max(p_f, 1.0)
    # points_from_line takes the direction angle, which is -theta in u-right/v-down coordinates
    points = points_from_line(0.0, v_o, -theta, p_f)
    return tuple(p.with_depth(_depth_at(p, depth, rig, eta_zd)) for p in points) + (separation,)


def excitation_flight(scene, rig, *, duration=60.0, period=0.05, start=10.0, heights=(2.5, 4.0), wobble=0.05,
                      min_pixels=50):
    """Snapshot triples (s_k, camera twist_k, s_k+1) from a scripted sweep over the array.

    The camera sweeps v_x over [0, 1], v_y over [-0.3, 0.3], its height over
    ``heights`` and omega_z over [-0.2, 0.2], with a small roll/pitch wobble so
    that every twist component is excited.
    """
    t = np.arange(int(round(duration / period)) + 1) * period
    low, high = heights
    x = start + 0.5 * t - 0.5 * 20 / (2 * np.pi) * (np.cos(2 * np.pi * t / 20) - 1)
    y = 0.3 * 12 / (2 * np.pi) * np.sin(2 * np.pi * t / 12)
    z = (low + high) / 2 + (high - low) / 2 * np.sin(2 * np.pi * t / 25)
    psi = 0.2 * 8 / (2 * np.pi) * np.sin(2 * np.pi * t / 8)
    roll = wobble * np.sin(2 * np.pi * t / 3.1)
    pitch = wobble * np.sin(2 * np.pi * t / 4.3 + 1.0)
    direction = np.array([scene.direction, scene.normal]).T
    xy = scene.origin + np.column_stack([x, y]) @ direction.T
    positions = np.column_stack([xy, z])
    rotations = [camera_rotation(p, rig, (r, q)) for p, r, q in zip(psi, roll, pitch)]
    measurements = []
    for k in range(len(t)):
        mask, depth = render_edge_mask(scene, (*positions[k], psi[k]), rig, tilt=(roll[k], pitch[k]))
        measurements.append(extract_edge_lines(mask, depth, rig, min_pixels=min_pixels).measurement())
    snapshots = []
    for k in range(len(t) - 1):
        if not (np.all(np.isfinite(measurements[k])) and np.all(np.isfinite(measurements[k + 1]))):
            continue
        R_k = rotations[k]
        omega = Rotation.from_matrix(R_k.T @ rotations[k + 1]).as_rotvec() / period
        velocity = R_k.T @ (positions[k + 1] - positions[k]) / period
        snapshots.append((measurements[k], np.concatenate([velocity, omega]), measurements[k + 1]))
    return snapshots


def identify_line_model(scene, rig, *, period=0.05, duration=60.0):
    """Run the excitation flight and fit (A, B); results are cached per scene, rig and period"""
    key = _model_key(scene, rig, period, duration)
    if key not in _model_cache:
        snapshots = excitation_flight(scene, rig, duration=duration, period=period)
        A, B, rms = dmd_fit(snapshots)
        logger.info('Identified line model from %d snapshots, residual RMS %.4g', len(snapshots), rms)
        _model_cache[key] = (A, B, rms)
    A, B, rms = _model_cache[key]
    return A.copy(), B.copy(), rms


def _axis_crossing(line):
    """v coordinate where the line crosses u = 0, NaN for near-vertical lines"""
    c = np.cos(line.theta)
    if abs(c) < MIN_AXIS_COS:
        return np.nan
    return line.r / c


def _principal_axis(points):
    centroid = points.mean(axis=0)
    _, vectors = np.linalg.eigh(np.cov(points.T))
    return centroid, vectors[:, -1]


def _fit_line(points):
    centroid, direction = _principal_axis(points)
    return line_from_points(centroid - 50 * direction, centroid + 50 * direction)


def _band_is_left(centroid, normal, depth, rig, step=10.0):
    """Whether a lone band is the left edge: the array (closer to the camera) lies below it in the image"""
    if depth is not None:
        samples = []
        for sign in (1, -1):
            row, col = rig.image_to_pixel(*(centroid + sign * step * normal))
            inside = 0 <= row < rig.image_height and 0 <= col < rig.image_width
            value = depth[row, col] if inside else 0.0
            samples.append(value if value > 0 else np.inf)
        if samples[0] != samples[1]:
            towards_array = normal if samples[0] < samples[1] else -normal
            return towards_array[1] > 0
    return centroid[1] < 0


def _depth_at(point, depth, rig, fallback):
    if depth is None:
        return fallback
    row, col = rig.image_to_pixel(point.u, point.v)
    if 0 <= row < rig.image_height and 0 <= col < rig.image_width and depth[row, col] > 0:
        return float(depth[row, col])
    return fallback


def _model_key(scene, rig, period, duration):
    return (
        tuple(scene.origin), tuple(scene.direction), scene.panel_size, scene.panel_count, scene.rows,
        scene.edge_thickness, scene.ground_offset, tuple(rig.t_bc), tuple(rig.R_bc.ravel()), rig.focal,
        rig.image_width, rig.image_height, rig.depth_range, float(period), float(duration),
    )


_model_cache = {}
