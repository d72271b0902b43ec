import numpy as np
from scipy.spatial.transform import Rotation

from .features import line_from_points, project_point


class PvScene:
    """A straight row of PV panels lying on the plane z = 0.

    Panels are laid with their long side along ``direction``; ``rows`` rows of
    panels side by side make up the array width.  The ground is
    ``ground_offset`` meters below the panel surface.
    """
    def __init__(self, origin=(0.0, 0.0), direction=(1.0, 0.0), *, panel_size=(2.0, 1.0), panel_count=80, rows=1,
                 edge_thickness=0.05, ground_offset=1.0):
        direction = np.asarray(direction, dtype=float)
        norm = np.hypot(*direction)
        if direction.shape != (2,) or norm == 0:
            raise ValueError(f'direction must be a non-zero 2-vector, got {direction}')
        length, width = panel_size
        if length <= 0 or width <= 0 or panel_count < 1 or rows < 1:
            raise ValueError(f'Invalid panel layout {panel_size} x {panel_count} x {rows}')
        if edge_thickness <= 0:
            raise ValueError(f'edge_thickness must be positive, got {edge_thickness}')
        self.origin = np.asarray(origin, dtype=float)
        self.direction = direction / norm
        self.normal = np.array([-self.direction[1], self.direction[0]])
        self.panel_size = (float(length), float(width))
        self.panel_count = int(panel_count)
        self.rows = int(rows)
        self.edge_thickness = float(edge_thickness)
        self.ground_offset = float(ground_offset)

    @property
    def width(self):
        return self.rows * self.panel_size[1]

    @property
    def length(self):
        return self.panel_count * self.panel_size[0]

    def __repr__(self):
        return f'PvScene(origin={self.origin.tolist()}, direction={self.direction.tolist()}, width={self.width})'

    def along(self, xy):
        return (np.asarray(xy, dtype=float) - self.origin) @ self.direction

    def lateral(self, xy):
        """Signed distance of a world point to the array midline, positive on the left"""
        return (np.asarray(xy, dtype=float) - self.origin) @ self.normal

    def edge_point(self, side, along):
        """World point on the left (side=+1) or right (side=-1) edge"""
        xy = self.origin + along * self.direction + side * self.width / 2 * self.normal
        return np.array([xy[0], xy[1], 0.0])


def camera_rotation(psi, rig, tilt=None):
    """World-from-camera rotation for a camera with yaw psi and optional body (roll, pitch)"""
    roll, pitch = (0.0, 0.0) if tilt is None else tilt
    R_wb = Rotation.from_euler('ZYX', [psi, pitch, roll]).as_matrix()
    return R_wb @ rig.R_bc


def render_edge_mask(scene, cam_pose, rig, *, tilt=None):
    """Rasterize the lateral edges of the array and the sensor depth image.

    Returns a boolean mask of edge pixels and a depth image holding the
    camera-frame depth of every pixel, with 0 where the ray misses or the depth
    is outside the sensor range.
    """
    x, y, z, psi = np.asarray(cam_pose, dtype=float)
    if not z > -scene.ground_offset:
        raise ValueError(f'Camera must be above the ground plane, got z={z}')
    R_wc = camera_rotation(psi, rig, tilt)
    rays = rig.rays @ R_wc.T
    down = rays[..., 2] < 0
    dz = np.where(down, rays[..., 2], -1.0)
    t_array = np.where(down, -z / dz, -1.0)
    t_ground = np.where(down, -(z + scene.ground_offset) / dz, -1.0)
    px = x + t_array * rays[..., 0] - scene.origin[0]
    py = y + t_array * rays[..., 1] - scene.origin[1]
    along = px * scene.direction[0] + py * scene.direction[1]
    lateral = np.abs(px * scene.normal[0] + py * scene.normal[1])
    half_width = scene.width / 2
    half_edge = scene.edge_thickness / 2
    visible = down & (t_array > 0) & (along >= 0) & (along <= scene.length)
    mask = visible & (np.abs(lateral - half_width) <= half_edge)
    on_array = visible & (lateral <= half_width + half_edge)
    depth = np.where(on_array, t_array, t_ground)
    near, far = rig.depth_range
    depth = np.where(down & (depth >= near) & (depth <= far), depth, 0.0)
    return mask, depth


def project_edge_lines(scene, cam_pose, rig, *, tilt=None, span=1.0):
    """Exact image lines (left, right) of the two array edges seen from ``cam_pose``"""
    position = np.asarray(cam_pose, dtype=float)[:3]
    psi = float(np.asarray(cam_pose, dtype=float)[3])
    R_wc = camera_rotation(psi, rig, tilt)
    centre = scene.along(position[:2])
    lines = []
    for side in (1, -1):
        points = [
            project_point(R_wc.T @ (scene.edge_point(side, centre + offset) - position), rig.focal)
            for offset in (-span, span)
        ]
        lines.append(line_from_points(*points))
    return tuple(lines)
