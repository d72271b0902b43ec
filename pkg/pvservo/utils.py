import numpy as np


def wrap_angle(angle):
    """Wrap an angle (or array of angles) to (-pi, pi]; angles already in range come back unchanged"""
    angle = np.asarray(angle, dtype=float)
    wrapped = np.pi - np.mod(np.pi - angle, 2 * np.pi)
    return np.where((angle > -np.pi) & (angle <= np.pi), angle, wrapped)[()]


def skew(t):
    x, y, z = np.asarray(t, dtype=float)
    return np.array([
        [0.0, -z, y],
        [z, 0.0, -x],
        [-y, x, 0.0],
    ])


def rot_z(psi):
    c, s = np.cos(psi), np.sin(psi)
    return np.array([
        [c, -s, 0.0],
        [s, c, 0.0],
        [0.0, 0.0, 1.0],
    ])


def as_vector(values, size, name='value'):
    values = np.asarray(values, dtype=float)
    if values.shape != (size,):
        raise ValueError(f'{name} must have shape ({size},), got {values.shape}')
    return values


def as_matrix(values, shape, name='value'):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1 and values.shape[0] == shape[0] == shape[1]:
        values = np.diag(values)
    if values.shape != shape:
        raise ValueError(f'{name} must have shape {shape}, got {values.shape}')
    return values


def is_spd(matrix, *, tol=0.0):
    matrix = np.asarray(matrix, dtype=float)
    if not np.allclose(matrix, matrix.T, rtol=0, atol=1e-12):
        return False
    return bool(np.linalg.eigvalsh(matrix).min() > tol)


def body_twist(nu4):
    """Embed a 4-DOF body command (v_x, v_y, v_z, omega_z) in a 6-vector twist"""
    v_x, v_y, v_z, omega_z = np.asarray(nu4, dtype=float)
    return np.array([v_x, v_y, v_z, 0.0, 0.0, omega_z])


# Twist components realised by the vehicle's 4-DOF interface
COMMAND_INDEX = (0, 1, 2, 5)
