import numpy as np
from scipy import linalg

from .base import BaseVector
from .exceptions import SingularMassError
from .utils import as_vector, wrap_angle

# pi1..pi4 inertia, pi5..pi6 yaw coupling, pi7..pi10 linear damping,
# pi11..pi14 omega_z coupling, pi15..pi18 quadratic drag
DEFAULT_PI = np.array([0.6] * 4 + [0.05] * 2 + [1.0] * 4 + [0.1] * 4 + [0.05] * 4)


class Pose4(BaseVector):
    """World-frame pose (x, y, z, psi); psi is kept in (-pi, pi]"""
    _fields = ('x', 'y', 'z', 'psi')

    def _normalize(self, values):
        values[3] = wrap_angle(values[3])
        return values

    @property
    def position(self):
        return self._values[:3].copy()


class BodyVel4(BaseVector):
    _fields = ('v_x', 'v_y', 'v_z', 'omega_z')


class State8(BaseVector):
    """Plant state x = (eta, nu): world pose followed by body velocity"""
    _fields = ('x', 'y', 'z', 'psi', 'v_x', 'v_y', 'v_z', 'omega_z')

    @classmethod
    def from_parts(cls, pose, vel):
        return cls(np.concatenate([np.asarray(pose, dtype=float), np.asarray(vel, dtype=float)]))

    def _normalize(self, values):
        values[3] = wrap_angle(values[3])
        return values

    @property
    def pose(self):
        return Pose4(self._values[:4])

    @property
    def vel(self):
        return BodyVel4(self._values[4:])


class DynParams:
    """The 18 coefficients of the velocity-tracking model M nu' + C(nu) nu = nu_ref.

    M is constant: diagonal pi1..pi4 with m14 = m41 = pi5 and m24 = m42 = pi6.
    C(nu) is diag(pi7..pi10) plus quadratic drag pi15..pi18 * |nu_i| on the
    diagonal and the omega_z coupling terms c12 = -pi11 w, c21 = pi12 w,
    c14 = pi13 w, c24 = pi14 w.
    """
    def __init__(self, pi=None):
        if pi is None:
            pi = DEFAULT_PI
        pi = as_vector(pi, 18, 'pi').copy()
        if not np.all(np.isfinite(pi)):
            raise ValueError('DynParams coefficients must be finite')
        pi.setflags(write=False)
        self.pi = pi
        mass = np.diag(pi[:4])
        mass[0, 3] = mass[3, 0] = pi[4]
        mass[1, 3] = mass[3, 1] = pi[5]
        try:
            self._cho = linalg.cho_factor(mass)
        except linalg.LinAlgError:
            raise SingularMassError(f'Mass matrix is not positive definite: {mass.tolist()}') from None
        mass.setflags(write=False)
        self.mass = mass
        self.mass_inv = linalg.cho_solve(self._cho, np.eye(4))

    @classmethod
    def default(cls):
        return cls(DEFAULT_PI)

    def __repr__(self):
        return f'DynParams({self.pi.tolist()!r})'

    def perturbed(self, fraction):
        """Scale inertia, coupling and drag terms by (1 + fraction); linear damping is kept"""
        pi = self.pi.copy()
        pi[:6] *= 1 + fraction
        pi[10:] *= 1 + fraction
        return type(self)(pi)

    def coriolis(self, nu):
        p = self.pi
        w = nu[3]
        damping = np.diag(p[6:10] + p[14:18] * np.abs(nu))
        damping[0, 1] = -p[10] * w
        damping[1, 0] = p[11] * w
        damping[0, 3] = p[12] * w
        damping[1, 3] = p[13] * w
        return damping

    def coriolis_jacobian(self, nu):
        """Derivative of C(nu) nu with respect to nu"""
        p = self.pi
        a, b, _, w = nu
        jac = np.diag(p[6:10] + 2 * p[14:18] * np.abs(nu))
        jac[0, 1] = -p[10] * w
        jac[0, 3] = -p[10] * b + 2 * p[12] * w
        jac[1, 0] = p[11] * w
        jac[1, 3] = p[11] * a + 2 * p[13] * w
        return jac

    def feedforward(self, nu):
        """Input holding nu at steady state: C(nu) nu"""
        nu = np.asarray(nu, dtype=float)
        return self.coriolis(nu) @ nu


class CameraRig:
    """Camera extrinsics in the body frame and pinhole intrinsics.

    Image coordinates are centred on the principal point with u to the right
    and v down; the default mounting looks straight down with u along body x.
    """
    def __init__(self, t_bc=(0.1, 0.0, -0.05), R_bc=None, *, focal=385.0, image_width=640, image_height=480,
                 depth_range=(0.2, 4.6)):
        if R_bc is None:
            R_bc = np.diag([1.0, -1.0, -1.0])
        R_bc = np.asarray(R_bc, dtype=float)
        if R_bc.shape != (3, 3):
            raise ValueError(f'R_bc must have shape (3, 3), got {R_bc.shape}')
        if not np.allclose(R_bc @ R_bc.T, np.eye(3), atol=1e-9) or np.linalg.det(R_bc) < 0:
            raise ValueError('R_bc must be a rotation matrix (orthonormal, determinant +1)')
        if focal <= 0:
            raise ValueError(f'focal must be positive, got {focal}')
        if image_width <= 0 or image_height <= 0:
            raise ValueError(f'Invalid image size {image_width}x{image_height}')
        near, far = depth_range
        if not 0 <= near < far:
            raise ValueError(f'Invalid depth range {depth_range}')
        self.t_bc = as_vector(t_bc, 3, 't_bc')
        self.R_bc = R_bc
        self.focal = float(focal)
        self.image_width = int(image_width)
        self.image_height = int(image_height)
        self.depth_range = (float(near), float(far))
        self._rays = None

    def __repr__(self):
        return (
            f'CameraRig(t_bc={self.t_bc.tolist()}, focal={self.focal}, '
            f'size={self.image_width}x{self.image_height})'
        )

    @property
    def r_max(self):
        return self.image_width / 2

    @property
    def shape(self):
        return (self.image_height, self.image_width)

    def pixel_to_image(self, rows, cols):
        return cols + 0.5 - self.image_width / 2, rows + 0.5 - self.image_height / 2

    def image_to_pixel(self, u, v):
        """Nearest (row, col) for image coordinates"""
        col = np.floor(u + self.image_width / 2).astype(int)
        row = np.floor(v + self.image_height / 2).astype(int)
        return row, col

    def contains(self, u, v, *, margin=0.0):
        return (abs(u) <= self.image_width / 2 - margin) and (abs(v) <= self.image_height / 2 - margin)

    @property
    def rays(self):
        """Camera-frame ray (u / f, v / f, 1) through every pixel centre, shape (H, W, 3)"""
        if self._rays is None:
            rows, cols = np.mgrid[0:self.image_height, 0:self.image_width]
            u, v = self.pixel_to_image(rows, cols)
            rays = np.stack([u / self.focal, v / self.focal, np.ones(u.shape)], axis=-1)
            rays.setflags(write=False)
            self._rays = rays
        return self._rays


def camera_pose_world(body_pose, rig):
    x, y, z, psi = np.asarray(body_pose, dtype=float)
    c, s = np.cos(psi), np.sin(psi)
    tx, ty, tz = rig.t_bc
    return Pose4([x + c * tx - s * ty, y + s * tx + c * ty, z + tz, psi])


def body_jacobian(psi):
    c, s = np.cos(psi), np.sin(psi)
    return np.array([
        [c, -s, 0.0, 0.0],
        [s, c, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ])


def dynamics_accel(nu, nu_ref, params):
    nu = np.asarray(nu, dtype=float)
    nu_ref = np.asarray(nu_ref, dtype=float)
    return BodyVel4(_accel(nu, nu_ref, params))


def state_derivative(x, u, params):
    return _derivative(np.asarray(x, dtype=float), np.asarray(u, dtype=float), params)


def rk4(f, x, u, dt):
    """Classical RK4 step of x' = f(x, u) with u held over the step"""
    k1 = f(x, u)
    k2 = f(x + 0.5 * dt * k1, u)
    k3 = f(x + 0.5 * dt * k2, u)
    k4 = f(x + dt * k3, u)
    return x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def rk4_step(x, u, dt, params):
    if not dt > 0:
        raise ValueError(f'dt must be positive, got {dt}')
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    return State8(rk4(lambda x, u: _derivative(x, u, params), x, u, dt))


def rk4_step_jacobians(x, u, dt, params):
    """RK4 successor of (x, u) with its sensitivities A = dF/dx and B = dF/du.

    The successor is returned unwrapped so that it differentiates consistently
    with A and B.
    """
    eye = np.eye(8)
    h = dt
    k1 = _derivative(x, u, params)
    fx1, fu1 = _derivative_jacobians(x, u, params)
    x2 = x + 0.5 * h * k1
    k2 = _derivative(x2, u, params)
    fx2, fu2 = _derivative_jacobians(x2, u, params)
    dk2x = fx2 @ (eye + 0.5 * h * fx1)
    dk2u = fx2 @ (0.5 * h * fu1) + fu2
    x3 = x + 0.5 * h * k2
    k3 = _derivative(x3, u, params)
    fx3, fu3 = _derivative_jacobians(x3, u, params)
    dk3x = fx3 @ (eye + 0.5 * h * dk2x)
    dk3u = fx3 @ (0.5 * h * dk2u) + fu3
    x4 = x + h * k3
    k4 = _derivative(x4, u, params)
    fx4, fu4 = _derivative_jacobians(x4, u, params)
    dk4x = fx4 @ (eye + h * dk3x)
    dk4u = fx4 @ (h * dk3u) + fu4
    x_next = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    A = eye + h / 6 * (fx1 + 2 * dk2x + 2 * dk3x + dk4x)
    B = h / 6 * (fu1 + 2 * dk2u + 2 * dk3u + dk4u)
    return x_next, A, B


def _accel(nu, u, params):
    return linalg.cho_solve(params._cho, u - params.coriolis(nu) @ nu)


def _derivative(x, u, params):
    nu = x[4:]
    c, s = np.cos(x[3]), np.sin(x[3])
    eta_dot = np.array([c * nu[0] - s * nu[1], s * nu[0] + c * nu[1], nu[2], nu[3]])
    return np.concatenate([eta_dot, _accel(nu, u, params)])


def _derivative_jacobians(x, u, params):
    psi = x[3]
    nu = x[4:]
    c, s = np.cos(psi), np.sin(psi)
    fx = np.zeros((8, 8))
    fx[0, 3] = -s * nu[0] - c * nu[1]
    fx[1, 3] = c * nu[0] - s * nu[1]
    fx[:4, 4:] = body_jacobian(psi)
    fx[4:, 4:] = -params.mass_inv @ params.coriolis_jacobian(nu)
    fu = np.zeros((8, 4))
    fu[4:, :] = params.mass_inv
    return fx, fu
