import logging
import time

import numpy as np

from .exceptions import NonFiniteInputError
from .plant import BodyVel4, DynParams, rk4_step_jacobians, _derivative
from .plant import rk4 as _rk4
from .qp import MAX_ITERATIONS, SOLVED, qp_solve
from .utils import as_matrix, as_vector, is_spd, wrap_angle

logger = logging.getLogger(__name__)

INF = np.inf
DEFAULT_X_MIN = np.array([-INF, -INF, 0.0, -np.pi, -2.0, -2.0, -2.0, -1.5])
DEFAULT_X_MAX = np.array([INF, INF, 4.5, np.pi, 2.0, 2.0, 2.0, 1.5])
DEFAULT_U_MAX = np.array([2.0, 2.0, 2.0, 1.5])
# yaw is kept in (-pi, pi] by wrapping, so its bounds never enter the QP
_ANGLE = 3


class NmpcProblem:
    """Data of the velocity-tracking optimal control problem.

    Attributes
    ----------
    horizon : int
        Number of shooting nodes N (states x_1..x_N, controls u_1..u_N-1).
    dt : float
        Sampling time of the RK4 discretization.
    Q, R : (4, 4) arrays
        Velocity tracking and input weights.
    x_min, x_max, u_min, u_max : arrays
        Box bounds; infinite entries are unbounded.
    dyn : DynParams
        Internal prediction model.
    input_reference : {'feedforward', 'zero'}
        Inputs are penalised relative to C(nu_c) nu_c ('feedforward') or zero.
    iterations, tol : int, float
        SQP iterations per solve (1 is the real-time iteration) and the
        convergence tolerance used when iterating further.
    """
    def __init__(self, *, horizon=10, dt=0.05, Q=None, R=None, x_min=None, x_max=None, u_min=None, u_max=None,
                 dyn=None, input_reference='feedforward', iterations=1, tol=1e-6):
        if horizon < 2:
            raise ValueError(f'horizon must be at least 2, got {horizon}')
        if not dt > 0:
            raise ValueError(f'dt must be positive, got {dt}')
        if input_reference not in ('feedforward', 'zero'):
            raise ValueError(f"input_reference must be 'feedforward' or 'zero', got {input_reference!r}")
        if iterations < 1:
            raise ValueError(f'iterations must be at least 1, got {iterations}')
        self.horizon = int(horizon)
        self.dt = float(dt)
        self.Q = np.eye(4) if Q is None else as_matrix(Q, (4, 4), 'Q')
        self.R = 1.4 * np.eye(4) if R is None else as_matrix(R, (4, 4), 'R')
        for name, weight in (('Q', self.Q), ('R', self.R)):
            if not is_spd(weight):
                raise ValueError(f'{name} must be symmetric positive definite')
        self.x_min = DEFAULT_X_MIN.copy() if x_min is None else as_vector(x_min, 8, 'x_min')
        self.x_max = DEFAULT_X_MAX.copy() if x_max is None else as_vector(x_max, 8, 'x_max')
        self.u_max = DEFAULT_U_MAX.copy() if u_max is None else as_vector(u_max, 4, 'u_max')
        self.u_min = -self.u_max if u_min is None else as_vector(u_min, 4, 'u_min')
        finite = np.isfinite(self.x_min) & np.isfinite(self.x_max)
        if np.any(self.x_min[finite] >= self.x_max[finite]) or np.any(self.u_min >= self.u_max):
            raise ValueError('Lower bounds must be below upper bounds')
        self.dyn = DynParams.default() if dyn is None else dyn
        self.input_reference = input_reference
        self.iterations = int(iterations)
        self.tol = float(tol)
        self.C_v = np.hstack([np.zeros((4, 4)), np.eye(4)])

    def __repr__(self):
        return f'NmpcProblem(horizon={self.horizon}, dt={self.dt}, iterations={self.iterations})'

    def input_references(self, nu_c):
        if self.input_reference == 'zero':
            return np.zeros_like(nu_c)
        return np.array([self.dyn.feedforward(nu) for nu in nu_c])


class OcpSolution:
    def __init__(self, states, controls, *, status='guess', iterations=0, kkt=np.inf, cost=np.nan, history=(),
                 active=(), mu_x_lower=None, mu_x_upper=None, solve_time=0.0):
        self.states = np.asarray(states, dtype=float)
        self.controls = np.asarray(controls, dtype=float)
        self.status = status
        self.iterations = iterations
        self.kkt = kkt
        self.cost = cost
        self.history = tuple(history)
        self.active = tuple(active)
        shape = self.states.shape
        self.mu_x_lower = np.zeros(shape) if mu_x_lower is None else mu_x_lower
        self.mu_x_upper = np.zeros(shape) if mu_x_upper is None else mu_x_upper
        self.solve_time = solve_time

    def __repr__(self):
        return (
            f'OcpSolution(status={self.status!r}, iterations={self.iterations}, kkt={self.kkt:.3g}, '
            f'cost={self.cost:.6g})'
        )

    @property
    def success(self):
        return self.status == SOLVED

    @property
    def u_first(self):
        return BodyVel4(self.controls[0])


class CondensedQp:
    """Gauss-Newton QP in the control increments, with the affine state maps x_k = x_bar_k + c_k + S_k du"""
    def __init__(self, H, g, lb, ub, G, h, offsets, sensitivities, rows, constant):
        self.H = H
        self.g = g
        self.lb = lb
        self.ub = ub
        self.G = G
        self.h = h
        self.offsets = offsets
        self.sensitivities = sensitivities
        self.rows = rows
        self.constant = constant

    def objective(self, du):
        return 0.5 * du @ self.H @ du + self.g @ du + self.constant


def stage_cost(x, nu_c, u, Q, R, *, u_ref=None):
    """Squared weighted tracking cost ||nu_c - C_v x||_Q^2 plus ||u - u_ref||_R^2 (skipped when u is None)"""
    error = np.asarray(nu_c, dtype=float) - np.asarray(x, dtype=float)[4:]
    cost = error @ np.asarray(Q, dtype=float) @ error
    if u is not None:
        effort = np.asarray(u, dtype=float)
        if u_ref is not None:
            effort = effort - np.asarray(u_ref, dtype=float)
        cost += effort @ np.asarray(R, dtype=float) @ effort
    return float(cost)


def trajectory_cost(problem, states, controls, nu_c):
    """Objective of the control problem; the terminal stage carries the tracking term only"""
    nu_c = _command_trajectory(nu_c, problem.horizon)
    u_ref = problem.input_references(nu_c)
    cost = sum(
        stage_cost(states[k], nu_c[k], controls[k], problem.Q, problem.R, u_ref=u_ref[k])
        for k in range(problem.horizon - 1)
    )
    return cost + stage_cost(states[-1], nu_c[-1], None, problem.Q, problem.R)


def rollout(problem, x0, controls):
    """States x_1..x_N obtained by integrating the model from x0 under ``controls``"""
    states = [np.asarray(x0, dtype=float)]
    for u in np.asarray(controls, dtype=float):
        states.append(_step(states[-1], u, problem))
    return np.array(states)


def condense(problem, x0, states, controls, nu_c):
    """Linearize the shooting constraints along (states, controls) and eliminate the states"""
    N = problem.horizon
    nu_c = _command_trajectory(nu_c, N)
    u_ref = problem.input_references(nu_c)
    n_u = 4 * (N - 1)
    first = np.asarray(x0, dtype=float) - states[0]
    first[_ANGLE] = wrap_angle(first[_ANGLE])
    offsets = [first]
    sensitivities = [np.zeros((8, n_u))]
    for k in range(N - 1):
        x_next, A, B = rk4_step_jacobians(states[k], controls[k], problem.dt, problem.dyn)
        defect = x_next - states[k + 1]
        defect[_ANGLE] = wrap_angle(defect[_ANGLE])
        offsets.append(A @ offsets[k] + defect)
        S = A @ sensitivities[k]
        S[:, 4 * k:4 * k + 4] += B
        sensitivities.append(S)

    Q, R = problem.Q, problem.R
    H = np.zeros((n_u, n_u))
    g = np.zeros(n_u)
    constant = 0.0
    for k in range(N):
        V = sensitivities[k][4:]
        residual = nu_c[k] - states[k][4:] - offsets[k][4:]
        H += 2 * V.T @ Q @ V
        g -= 2 * V.T @ Q @ residual
        constant += residual @ Q @ residual
    effort = (controls - u_ref[:N - 1]).ravel()
    R_bar = np.kron(np.eye(N - 1), R)
    H += 2 * R_bar
    g += 2 * R_bar @ effort
    constant += effort @ R_bar @ effort

    lb = np.tile(problem.u_min, N - 1) - controls.ravel()
    ub = np.tile(problem.u_max, N - 1) - controls.ravel()
    G, h, rows = [], [], []
    for k in range(1, N):
        predicted = states[k] + offsets[k]
        for j in range(8):
            if j == _ANGLE:
                continue
            if np.isfinite(problem.x_max[j]):
                G.append(sensitivities[k][j])
                h.append(problem.x_max[j] - predicted[j])
                rows.append((k, j, 1))
            if np.isfinite(problem.x_min[j]):
                G.append(-sensitivities[k][j])
                h.append(predicted[j] - problem.x_min[j])
                rows.append((k, j, -1))
    G = np.array(G).reshape(-1, n_u)
    h = np.array(h)
    return CondensedQp(H, g, lb, ub, G, h, offsets, sensitivities, rows, constant)


def solve_rti(problem, x0, nu_c_traj, warm=None, *, iterations=None, tol=None):
    """SQP on the multiple-shooting problem with x_1 fixed to the measured state.

    One Gauss-Newton iteration per call is the real-time iteration; pass
    ``iterations`` to iterate until the step and the shooting defects fall
    below ``tol``.
    """
    start = time.perf_counter()
    iterations = problem.iterations if iterations is None else int(iterations)
    tol = problem.tol if tol is None else float(tol)
    N = problem.horizon
    x0 = as_vector(x0, 8, 'x0').copy()
    nu_c = _command_trajectory(nu_c_traj, N)
    if not (np.all(np.isfinite(x0)) and np.all(np.isfinite(nu_c))):
        raise NonFiniteInputError(f'Non-finite NMPC input: x0={x0}, nu_c={nu_c}')
    x0 = _clamp_initial_state(problem, x0)

    if warm is None:
        states = np.tile(x0, (N, 1))
        controls = np.zeros((N - 1, 4))
    else:
        states = np.array(warm.states, dtype=float)
        controls = np.clip(np.array(warm.controls, dtype=float), problem.u_min, problem.u_max)
        if states.shape != (N, 8) or controls.shape != (N - 1, 4):
            raise ValueError(f'Warm start does not match horizon {N}')
    states[0] = x0

    history = []
    status, kkt, result = SOLVED, np.inf, None
    iteration = 0
    for iteration in range(1, iterations + 1):
        qp = condense(problem, x0, states, controls, nu_c)
        result = qp_solve(qp.H, qp.g, G=qp.G, h=qp.h, lb=qp.lb, ub=qp.ub, x0=np.zeros_like(qp.g))
        if not result.success:
            status = result.status
            logger.debug('NMPC QP returned %s at iteration %d', status, iteration)
            break
        du = result.x
        step = 0.0
        controls = controls + du.reshape(N - 1, 4)
        for k in range(N):
            delta = qp.offsets[k] + qp.sensitivities[k] @ du
            states[k] = states[k] + delta
            states[k][_ANGLE] = wrap_angle(states[k][_ANGLE])
            step = max(step, np.max(np.abs(delta)))
        states[0] = x0
        step = max(step, np.max(np.abs(du), initial=0.0))
        kkt = max(step, _max_defect(problem, states, controls))
        history.append(trajectory_cost(problem, rollout(problem, x0, controls), controls, nu_c))
        if kkt < tol:
            break
    if status == SOLVED and iterations > 1 and not kkt < tol:
        logger.debug('NMPC stopped after %d iterations with KKT residual %.3g', iteration, kkt)
        status = MAX_ITERATIONS

    mu_lower = np.zeros((N, 8))
    mu_upper = np.zeros((N, 8))
    active = ()
    if result is not None and result.success:
        for (k, j, sign), mu in zip(qp.rows, result.mu):
            (mu_upper if sign > 0 else mu_lower)[k, j] = mu
        active = tuple(qp.rows[i] for i in result.active if i < len(qp.rows))
    cost = history[-1] if history else np.nan
    return OcpSolution(
        states, controls, status=status, iterations=iteration, kkt=kkt, cost=cost, history=history,
        active=active, mu_x_lower=mu_lower, mu_x_upper=mu_upper, solve_time=time.perf_counter() - start,
    )


def shift_warm_start(prev):
    states = np.vstack([prev.states[1:], prev.states[-1:]])
    controls = np.vstack([prev.controls[1:], prev.controls[-1:]])
    return OcpSolution(states, controls, status='guess')


class NmpcSolver:
    """Single-owner solver keeping the shifted previous solution as warm start"""
    def __init__(self, problem):
        self.problem = problem
        self.warm = None

    def reset(self):
        self.warm = None

    def solve(self, x0, nu_c):
        solution = solve_rti(self.problem, x0, nu_c, self.warm)
        if solution.success:
            self.warm = shift_warm_start(solution)
        elif self.warm is not None:
            self.warm = shift_warm_start(self.warm)
        return solution


def _step(x, u, problem):
    x_next = _rk4(lambda x, u: _derivative(x, u, problem.dyn), x, u, problem.dt)
    x_next[_ANGLE] = wrap_angle(x_next[_ANGLE])
    return x_next


def _max_defect(problem, states, controls):
    worst = 0.0
    for k in range(problem.horizon - 1):
        defect = _step(states[k], controls[k], problem) - states[k + 1]
        defect[_ANGLE] = wrap_angle(defect[_ANGLE])
        worst = max(worst, np.max(np.abs(defect)))
    return worst


def _command_trajectory(nu_c, horizon):
    """Per-stage commands (N, 4); a shorter sequence is held at its last entry"""
    nu_c = np.atleast_2d(np.asarray(nu_c, dtype=float))
    if nu_c.shape[1] != 4 or nu_c.shape[0] < 1:
        raise ValueError(f'nu_c must be a 4-vector or a sequence of 4-vectors, got shape {nu_c.shape}')
    if nu_c.shape[0] < horizon:
        nu_c = np.vstack([nu_c, np.repeat(nu_c[-1:], horizon - nu_c.shape[0], axis=0)])
    return nu_c[:horizon]


def _clamp_initial_state(problem, x0):
    clamped = np.clip(x0, problem.x_min, problem.x_max)
    clamped[_ANGLE] = x0[_ANGLE]
    if np.any(clamped != x0):
        changed = np.flatnonzero(clamped != x0)
        logger.warning(
            'Initial state outside bounds, clamped components %s from %s to %s',
            changed.tolist(), x0[changed].tolist(), clamped[changed].tolist(),
        )
    return clamped
