import numpy as np
import pytest
from pytest import raises

from pvservo.exceptions import SingularMassError
from pvservo.plant import (
    DEFAULT_PI, BodyVel4, CameraRig, DynParams, Pose4, State8, body_jacobian, camera_pose_world, dynamics_accel,
    rk4, rk4_step, rk4_step_jacobians, state_derivative,
)
from pvservo.utils import wrap_angle
from .utils import compare, numeric_jacobian


@pytest.fixture
def params():
    return DynParams.default()


def test_value_types():
    p = Pose4.from_values(1, 2, 3, 3 * np.pi / 2)
    assert p.psi == pytest.approx(-np.pi / 2)
    assert Pose4.from_values(0, 0, 0, np.pi).psi == np.pi
    assert Pose4.from_values(0, 0, 0, -np.pi).psi == np.pi
    compare(p.position, [1, 2, 3])
    assert Pose4.new().isequal(Pose4([0, 0, 0, 0]))
    x = State8.from_parts(p, BodyVel4.from_values(0.5, 0, 0, 0.1))
    assert x.vel.v_x == 0.5
    assert x.pose.isclose(p)
    assert x.dup().isequal(x)
    assert x.dup() is not x
    assert x == State8(np.asarray(x))
    with raises(TypeError):
        x.isequal(p)
    with raises(ValueError, match='takes 4 values'):
        BodyVel4([1, 2, 3])
    with raises(ValueError):
        x._values[0] = 1.0


def test_angles_in_range_are_kept():
    rng = np.random.default_rng(3)
    angles = rng.uniform(-np.pi, np.pi, 200)
    assert np.array_equal(wrap_angle(angles), angles)
    for psi in angles[:20]:
        x = State8([1.0, 2.0, 3.0, psi, 0.5, 0.0, 0.0, 0.0])
        assert x.psi == psi
        assert Pose4([0.0, 0.0, 0.0, psi]).psi == psi
    assert wrap_angle(0.1) == 0.1
    assert wrap_angle(np.pi) == np.pi
    assert wrap_angle(-np.pi) == np.pi
    assert wrap_angle(2 * np.pi + 0.1) == pytest.approx(0.1)
    compare(wrap_angle([3 * np.pi / 2, -3 * np.pi / 2]), [-np.pi / 2, np.pi / 2])


def test_camera_pose_world():
    rig = CameraRig()
    compare(camera_pose_world(Pose4([0, 0, 3, 0]), rig), [0.1, 0, 2.95, 0], rtol=1e-12)
    rig = CameraRig((0.1, 0, 0))
    compare(camera_pose_world([1, 2, 3, np.pi / 2], rig), [1, 2.1, 3, np.pi / 2], rtol=1e-12)
    rig = CameraRig((0, 0, 0))
    compare(camera_pose_world([0, 0, 0, 0], rig), np.zeros(4))


def test_body_jacobian():
    compare(body_jacobian(0.0), np.eye(4))
    compare(body_jacobian(np.pi / 2) @ [1, 0, 0, 0], [0, 1, 0, 0], rtol=1e-12)
    for psi in np.linspace(-np.pi, np.pi, 13):
        J = body_jacobian(psi)
        assert np.abs(J.T @ J - np.eye(4)).max() < 1e-12
        assert np.linalg.det(J) == pytest.approx(1.0)


def test_dyn_params(params):
    compare(params.mass, params.mass.T)
    assert np.linalg.eigvalsh(params.mass).min() > 0
    compare(params.mass @ params.mass_inv, np.eye(4), rtol=1e-12)
    # unit DC gain at rest
    compare(params.coriolis(np.zeros(4)), np.eye(4))
    pi = DEFAULT_PI.copy()
    pi[0] = -0.6
    with raises(SingularMassError):
        DynParams(pi)
    with raises(ValueError):
        DynParams(np.ones(17))
    scaled = params.perturbed(0.1)
    compare(scaled.pi[:6], 1.1 * DEFAULT_PI[:6])
    compare(scaled.pi[6:10], DEFAULT_PI[6:10])
    compare(scaled.pi[10:], 1.1 * DEFAULT_PI[10:])


def test_coriolis_jacobian(params):
    nu = np.array([0.4, -0.3, 0.2, 0.25])
    compare(params.coriolis_jacobian(nu), numeric_jacobian(lambda n: params.coriolis(n) @ n, nu), rtol=1e-8)


def test_dynamics_accel(params):
    compare(dynamics_accel(np.zeros(4), np.zeros(4), params), np.zeros(4))
    accel = np.asarray(dynamics_accel(np.zeros(4), [1, 0, 0, 0], params))
    compare(params.mass @ accel, [1, 0, 0, 0], rtol=1e-12)
    nu = np.array([0.5, 0.2, -0.1, 0.3])
    accel = np.asarray(dynamics_accel(nu, params.feedforward(nu), params))
    assert np.abs(accel).max() < 1e-12
    nu_ref = np.array([0.3, -0.7, 0.2, 0.1])
    accel = np.asarray(dynamics_accel(nu, nu_ref, params))
    residual = params.mass @ accel + params.coriolis(nu) @ nu - nu_ref
    assert np.abs(residual).max() < 1e-12


def test_state_derivative(params):
    assert np.abs(state_derivative(np.zeros(8), np.zeros(4), params)).max() == 0
    nu = np.array([1.0, 0, 0, 0])
    x = np.concatenate([[0, 0, 3, 0], nu])
    compare(state_derivative(x, params.feedforward(nu), params), [1, 0, 0, 0, 0, 0, 0, 0], atol=1e-12)
    x = np.array([1, 2, 3, 0.7, 0.3, -0.2, 0.1, 0.4])
    rate = state_derivative(x, [0.1, 0.2, 0.3, 0.4], params)
    compare(rate[:4], body_jacobian(0.7) @ x[4:], rtol=1e-12)


def test_rk4_equilibrium(params):
    nu = np.array([0.5, 0.0, 0.0, 0.0])
    x = np.concatenate([[0, 0, 3, 0], np.zeros(4)])
    assert rk4_step(x, np.zeros(4), 0.05, params).isequal(State8(x))
    with raises(ValueError):
        rk4_step(x, nu, 0.0, params)


def test_rk4_linear_system():
    dt = 0.05
    x = rk4(lambda x, u: -x, np.array([1.0]), None, dt)
    # one RK4 step of x' = -x is the degree-4 Taylor polynomial of exp(-dt)
    taylor = 1 - dt + dt ** 2 / 2 - dt ** 3 / 6 + dt ** 4 / 24
    assert x[0] == pytest.approx(taylor, rel=1e-14)
    # local error dt^5 / 120
    assert abs(x[0] - np.exp(-dt)) < 5e-9


def test_rk4_order():
    def error(dt):
        x = np.array([1.0, 0.0])
        f = lambda x, u: np.array([x[1], -x[0]])  # noqa: E731
        for _ in range(int(round(2.0 / dt))):
            x = rk4(f, x, None, dt)
        return np.abs(x - [np.cos(2.0), -np.sin(2.0)]).max()

    order = np.log2(error(0.1) / error(0.05))
    assert 3.7 <= order <= 4.3


def test_rk4_matches_derivative(params):
    x = np.array([1, 2, 3, 0.3, 0.4, -0.2, 0.1, 0.2])
    u = np.array([0.5, 0.1, -0.3, 0.2])
    dt = 1e-5
    f = lambda x, u: state_derivative(x, u, params)  # noqa: E731
    central = (rk4(f, x, u, dt) - rk4(f, x, u, -dt)) / (2 * dt)
    expected = state_derivative(x, u, params)
    assert np.linalg.norm(central - expected) / np.linalg.norm(expected) < 1e-6


def test_steady_state_velocity(params):
    u = np.array([0.5, 0.2, 0.1, 0.1])
    x = State8.new()
    for _ in range(2000):
        x = rk4_step(x, u, 0.01, params)
    nu = np.asarray(x.vel)
    compare(params.coriolis(nu) @ nu, u, atol=1e-6, rtol=0)


def test_rk4_step_jacobians(params):
    x = np.array([1, 2, 3, 0.3, 0.4, -0.2, 0.1, 0.2])
    u = np.array([0.5, 0.1, -0.3, 0.2])
    dt = 0.05
    f = lambda x, u: state_derivative(x, u, params)  # noqa: E731
    x_next, A, B = rk4_step_jacobians(x, u, dt, params)
    compare(x_next, rk4(f, x, u, dt), rtol=1e-12)
    compare(A, numeric_jacobian(lambda x: rk4(f, x, u, dt), x), rtol=1e-7)
    compare(B, numeric_jacobian(lambda u: rk4(f, x, u, dt), u), rtol=1e-7)


def test_camera_rig():
    rig = CameraRig()
    assert rig.shape == (480, 640)
    assert rig.r_max == 320
    u, v = rig.pixel_to_image(0, 0)
    assert (u, v) == (-319.5, -239.5)
    row, col = rig.image_to_pixel(-319.5, -239.5)
    assert (row, col) == (0, 0)
    assert rig.rays.shape == (480, 640, 3)
    compare(rig.rays[240, 320], [0.5 / 385, 0.5 / 385, 1.0])
    with raises(ValueError, match='rotation'):
        CameraRig(R_bc=np.diag([1.0, 1.0, -1.0]))
    with raises(ValueError):
        CameraRig(focal=0)
    with raises(ValueError):
        CameraRig(depth_range=(3.0, 1.0))
