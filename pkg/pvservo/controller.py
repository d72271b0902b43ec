import copy

import numpy as np

from .exceptions import RankDeficientError
from .features import LineFeature, compact_jacobian, line_from_points
from .plant import BodyVel4
from .utils import COMMAND_INDEX, as_matrix, as_vector, is_spd

MAX_CONDITION = 1e12


class VsGains:
    """Gains of the null-space visual-servoing law; defaults are the nominal tuning"""
    def __init__(self, K=(150.0, 0.5), W=(1.0, 1.0, 1.0, 50.0, 50.0, 1.0), *, k1=10.0, k2=10.0, v_x_max=1.0,
                 eta_zd=3.0, eta_zd_rate=0.0, xi_d=(0.0, 0.0), xi_d_rate=(0.0, 0.0), eta_z_max=np.inf,
                 v_z_range=(-np.inf, np.inf)):
        self.K = as_matrix(K, (2, 2), 'K')
        self.W = as_matrix(W, (6, 6), 'W')
        if not is_spd(self.K):
            raise ValueError(f'K must be symmetric positive definite, got {self.K.tolist()}')
        if not is_spd(self.W):
            raise ValueError(f'W must be symmetric positive definite, got {self.W.tolist()}')
        if not (k1 > 0 and k2 > 0):
            raise ValueError(f'k1 and k2 must be positive, got {k1}, {k2}')
        if v_x_max < 0:
            raise ValueError(f'v_x_max must be non-negative, got {v_x_max}')
        self.k1 = float(k1)
        self.k2 = float(k2)
        self.v_x_max = float(v_x_max)
        self.eta_zd = float(eta_zd)
        self.eta_zd_rate = float(eta_zd_rate)
        self.xi_d = LineFeature(xi_d)
        self.xi_d_rate = as_vector(xi_d_rate, 2, 'xi_d_rate')
        v_z_low, v_z_high = v_z_range
        if not v_z_low < v_z_high:
            raise ValueError(f'v_z_range must be increasing, got {v_z_range}')
        self.eta_z_max = float(eta_z_max)
        self.v_z_range = (float(v_z_low), float(v_z_high))

    def __repr__(self):
        return (
            f'VsGains(K={np.diag(self.K).tolist()}, W={np.diag(self.W).tolist()}, k1={self.k1}, k2={self.k2}, '
            f'v_x_max={self.v_x_max}, eta_zd={self.eta_zd})'
        )

    def limited(self, *, eta_z_max=np.inf, v_z_range=(-np.inf, np.inf)):
        """Copy whose height task stays below ``eta_z_max`` and within the vertical speed range ``v_z_range``"""
        gains = copy.copy(self)
        gains.eta_z_max = min(self.eta_z_max, float(eta_z_max))
        low, high = v_z_range
        gains.v_z_range = (max(self.v_z_range[0], float(low)), min(self.v_z_range[1], float(high)))
        if not gains.v_z_range[0] < gains.v_z_range[1]:
            raise ValueError(f'Empty vertical speed range {gains.v_z_range}')
        return gains


class ServoOutput:
    """One evaluation of the visual-servoing law with its diagnostics"""
    def __init__(self, xi, xi_err, nu_d, nu_c4, nu_c6):
        self.xi = xi
        self.xi_err = xi_err
        self.nu_d = nu_d
        self.nu_c4 = nu_c4
        self.nu_c6 = nu_c6

    @property
    def residual(self):
        """Commanded roll and pitch rates, which the vehicle cannot realise"""
        return self.nu_c6[3:5].copy()


def feature_error(xi_d, xi, r_max):
    if not r_max > 0:
        raise ValueError(f'r_max must be positive, got {r_max}')
    r_d, theta_d = np.asarray(xi_d, dtype=float)
    r, theta = np.asarray(xi, dtype=float)
    return np.array([r_d / r_max - r / r_max, theta_d - theta])


def weighted_pinv(J, W):
    """J^+ = W^-1 J^T (J W^-1 J^T)^-1"""
    J = as_matrix(J, (2, 6), 'J')
    W_inv = np.linalg.inv(as_matrix(W, (6, 6), 'W'))
    gram = J @ W_inv @ J.T
    condition = np.linalg.cond(gram)
    if not np.isfinite(condition) or condition > MAX_CONDITION:
        raise RankDeficientError(f'Feature Jacobian is rank deficient (condition number {condition:.3g})')
    return W_inv @ J.T @ np.linalg.inv(gram)


def desired_velocities(xi_err, gains, eta_z):
    xi_err = np.asarray(xi_err, dtype=float)
    v_xd = gains.v_x_max / (1 + gains.k1 * np.linalg.norm(xi_err))
    eta_zd = min(gains.eta_zd, gains.eta_z_max)
    v_zd = np.clip(gains.eta_zd_rate + gains.k2 * np.tanh(eta_zd - eta_z), *gains.v_z_range)
    return np.array([v_xd, 0.0, v_zd, 0.0, 0.0, 0.0])


def control_law(J, xi_err, xi_d_rate, nu_d, gains):
    """nu_c = J^+ (xi_d' + K xi_err) + (I - J^+ J) nu_d, and its 4-DOF part"""
    J = as_matrix(J, (2, 6), 'J')
    J_pinv = weighted_pinv(J, gains.W)
    task = np.asarray(xi_d_rate, dtype=float) + gains.K @ np.asarray(xi_err, dtype=float)
    projector = np.eye(6) - J_pinv @ J
    nu_c6 = J_pinv @ task + projector @ np.asarray(nu_d, dtype=float)
    return BodyVel4(nu_c6[list(COMMAND_INDEX)]), nu_c6


def hold_command(gains, eta_z):
    """Command used when features are lost: keep height, no planar motion"""
    v_zd = desired_velocities(np.zeros(2), gains, eta_z)[2]
    return BodyVel4([0.0, 0.0, v_zd, 0.0])


def visual_servo(z1, z2, rig, gains, eta_z):
    """One pass of the visual-servoing law from the two midline points"""
    xi = line_from_points(z1, z2)
    J = compact_jacobian(xi, z1, z2, rig)
    xi_err = feature_error(gains.xi_d, xi, rig.r_max)
    nu_d = desired_velocities(xi_err, gains, eta_z)
    nu_c4, nu_c6 = control_law(J, xi_err, gains.xi_d_rate, nu_d, gains)
    return ServoOutput(xi, xi_err, nu_d, nu_c4, nu_c6)
