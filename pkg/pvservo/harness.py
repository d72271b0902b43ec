import logging
import time

import numpy as np
from dask import compute
from dask.delayed import delayed

from .controller import hold_command, visual_servo
from .exceptions import FeatureLossError, NonFiniteInputError, RankDeficientError
from .features import twist_transform
from .nmpc import NmpcSolver
from .perception import extract_edge_lines, identify_line_model, kalman_step, midline_features
from .plant import State8, camera_pose_world, rk4_step
from .qp import INFEASIBLE, MAX_ITERATIONS, SOLVED
from .scene import render_edge_mask
from .utils import body_twist

logger = logging.getLogger(__name__)

STATE_FIELDS = State8._fields
COLUMNS = (
    ('time',)
    + STATE_FIELDS
    + tuple(f'meas_{name}' for name in STATE_FIELDS)
    + ('r1', 'theta1', 'r2', 'theta2', 'valid1', 'valid2', 'd_l1l2')
    + ('xi_r', 'xi_theta', 'err_r', 'err_theta', 'v_xd', 'err_v_x')
    + ('nu_c_x', 'nu_c_y', 'nu_c_z', 'nu_c_omega_z')
    + ('nu_ref_x', 'nu_ref_y', 'nu_ref_z', 'nu_ref_omega_z')
    + ('omega_x_res', 'omega_y_res')
    + ('feature_valid', 'missed', 'nmpc_status', 'nmpc_kkt', 'nmpc_iterations', 'nmpc_cost')
)
TIMING_COLUMNS = ('perception', 'servo', 'nmpc', 'total')

# solver status codes in the nmpc_status column
STATUS_CODES = {'skipped': -1, SOLVED: 0, INFEASIBLE: 1, MAX_ITERATIONS: 2, 'error': 3}


class RunLog:
    """Per-cycle record of a closed-loop run.

    ``data`` holds one row per control cycle in the order of ``COLUMNS``;
    stage timings (seconds) are kept apart in ``timings`` since they are not
    reproducible.
    """
    columns = COLUMNS

    def __init__(self, name='run', *, mode='vs-nmpc', seed=0, data=None, timings=None, failed=False):
        self.name = name
        self.mode = mode
        self.seed = seed
        self._rows = [] if data is None else [np.asarray(row, dtype=float) for row in data]
        self._timings = [] if timings is None else [np.asarray(row, dtype=float) for row in timings]
        self.failed = failed

    def __repr__(self):
        return f'RunLog(name={self.name!r}, mode={self.mode!r}, cycles={len(self)}, failed={self.failed})'

    def __len__(self):
        return len(self._rows)

    def append(self, record, timing=(np.nan,) * len(TIMING_COLUMNS)):
        """Add one cycle; ``record`` maps every column name to its value"""
        if self._rows and record['time'] <= self._rows[-1][0]:
            raise ValueError(f'Timestamps must increase, got {record["time"]} after {self._rows[-1][0]}')
        self._rows.append(np.array([record[name] for name in COLUMNS], dtype=float))
        self._timings.append(np.asarray(timing, dtype=float))

    @property
    def data(self):
        if not self._rows:
            return np.zeros((0, len(COLUMNS)))
        return np.vstack(self._rows)

    @property
    def timings(self):
        if not self._timings:
            return np.zeros((0, len(TIMING_COLUMNS)))
        return np.vstack(self._timings)

    def column(self, name):
        try:
            index = COLUMNS.index(name)
        except ValueError:
            raise KeyError(f'Unknown column {name!r}') from None
        return self.data[:, index]

    @property
    def time(self):
        return self.column('time')

    @property
    def dropout_events(self):
        """Number of transitions into feature loss after the first valid frame"""
        valid = self.column('feature_valid') > 0
        if not valid.any():
            return int(len(valid) > 0)
        valid = valid[np.argmax(valid):]
        return int(np.count_nonzero(valid[:-1] & ~valid[1:]))

    def isequal(self, other):
        if type(other) is not type(self):
            raise TypeError(f'Expected RunLog, got {type(other).__name__}')
        return self.data.shape == other.data.shape and np.array_equal(self.data, other.data, equal_nan=True)

    def summary(self, *, settle=2.0):
        """Run statistics: final and steady-state errors, altitude, dropouts and stage timings in ms"""
        data = self.data
        if not len(data):
            return {'name': self.name, 'mode': self.mode, 'seed': self.seed, 'cycles': 0, 'failed': self.failed}
        t = self.time
        tail = t >= t[-1] - settle
        err_r = np.abs(self.column('err_r')[tail])
        err_theta = np.abs(self.column('err_theta')[tail])
        mean_r = float(np.nanmean(err_r))
        mean_theta = float(np.nanmean(err_theta))
        timings = self.timings * 1e3
        summary = {
            'name': self.name,
            'mode': self.mode,
            'seed': self.seed,
            'cycles': len(self),
            'failed': self.failed,
            'final_err_r': float(self.column('err_r')[-1]),
            'final_err_theta': float(self.column('err_theta')[-1]),
            'final_err_v_x': float(self.column('err_v_x')[-1]),
            'steady_err_r': mean_r,
            'steady_err_theta': mean_theta,
            'within_simulation_bounds': bool(mean_r < 0.18 and mean_theta < 0.05),
            'within_field_bounds': bool(mean_r < 0.3 and mean_theta < 0.08),
            'max_z': float(self.column('z').max()),
            'dropout_events': self.dropout_events,
            'lost_cycles': int(np.count_nonzero(self.column('feature_valid') == 0)),
            'convergence_time': convergence_time(self),
        }
        for i, stage in enumerate(TIMING_COLUMNS):
            summary[f'{stage}_ms_mean'] = float(np.nanmean(timings[:, i]))
            summary[f'{stage}_ms_max'] = float(np.nanmax(timings[:, i]))
        return summary


def inject_noise(x, params, rng):
    """Measured state: x plus Gaussian pose and velocity noise given as mean and standard deviation"""
    x = np.asarray(x, dtype=float)
    if params is None or not params.enabled:
        return State8(x)
    noise = np.concatenate([
        rng.normal(params.pose_mean, params.pose_std, 4),
        rng.normal(params.velocity_mean, params.velocity_std, 4),
    ])
    return State8(x + noise)


def run_scenario(config, *, line_model=None):
    """Run the closed perception / visual-servoing / NMPC loop of one scenario"""
    scene = config.scene.build()
    rig = config.rig.build()
    model_dyn = config.dynamics.build()
    plant_dyn = config.dynamics.build_plant()
    gains = config.gains.build()
    perception = config.perception
    if line_model is None:
        line_model = identify_line_model(
            scene, rig, period=config.control_period, duration=perception.identification_duration,
        )
    A, B = line_model[:2]
    est = perception.build(A, B)
    use_nmpc = config.mode == 'vs-nmpc'
    solver = NmpcSolver(config.nmpc.build(model_dyn)) if use_nmpc else None
    if use_nmpc:
        # the null-space height task only asks for climbs the NMPC bounds admit
        problem = solver.problem
        gains = gains.limited(
            eta_z_max=problem.x_max[2],
            v_z_range=(max(problem.u_min[2], problem.x_min[6]), min(problem.u_max[2], problem.x_max[6])),
        )
    transform = twist_transform(rig)
    rng = np.random.default_rng(config.seed)
    period = config.control_period
    substep = period / config.plant_substeps
    cycles = int(round(config.duration / period))

    logger.info(
        'Starting scenario %r (mode %s, seed %d, %.1f s)', config.name, config.mode, config.seed, config.duration,
    )
    log = RunLog(config.name, mode=config.mode, seed=config.seed)
    x = config.start_state(scene)
    prev_twist = None
    last_nu_c = None
    since_valid = 0
    applied = np.zeros(4)
    was_valid = True
    for k in range(cycles):
        start = time.perf_counter()
        measured = inject_noise(x, config.noise, rng)
        meas = np.asarray(measured)

        mask, depth = render_edge_mask(scene, camera_pose_world(x.pose, rig), rig)
        obs = extract_edge_lines(
            mask, depth, rig, min_pixels=perception.min_pixels, min_component=perception.min_component,
            depth_window=perception.depth_window,
        )
        if prev_twist is None:
            prev_twist = transform.to_camera(body_twist(meas[4:]))
        est = kalman_step(est, obs, prev_twist)
        prev_twist = transform.to_camera(body_twist(meas[4:]))
        try:
            z1, z2, _ = midline_features(est, rig, depth=depth, eta_zd=gains.eta_zd, c_p=perception.c_p)
        except FeatureLossError as exc:
            z1 = z2 = None
            if was_valid:
                logger.warning('Feature loss at t=%.2f s: %s', k * period, exc)
        t_perception = time.perf_counter()

        servo = None
        if z1 is not None:
            try:
                servo = visual_servo(z1, z2, rig, gains, meas[2])
            except RankDeficientError as exc:
                logger.warning('Visual servoing skipped at t=%.2f s: %s', k * period, exc)
        feature_valid = servo is not None
        if feature_valid:
            nu_c = np.asarray(servo.nu_c4)
            last_nu_c = nu_c
            since_valid = 0
        else:
            since_valid += 1
            if use_nmpc and last_nu_c is not None and since_valid <= perception.dropout_horizon:
                nu_c = last_nu_c
            else:
                nu_c = np.asarray(hold_command(gains, meas[2]))
            if not use_nmpc and est.initialized and est.lost and not log.failed:
                log.failed = True
                logger.warning('Visual servoing lost the array at t=%.2f s; run marked failed', k * period)
        was_valid = feature_valid
        t_servo = time.perf_counter()

        status, kkt, iterations, cost = 'skipped', np.nan, 0, np.nan
        if use_nmpc:
            try:
                solution = solver.solve(meas, nu_c)
            except NonFiniteInputError as exc:
                logger.warning('NMPC rejected its input at t=%.2f s: %s', k * period, exc)
                status = 'error'
            else:
                status, kkt, iterations, cost = solution.status, solution.kkt, solution.iterations, solution.cost
                logger.debug('t=%.2f s NMPC %s, kkt %.3g', k * period, status, kkt)
                if solution.success:
                    applied = np.asarray(solution.u_first)
            if status != SOLVED:
                logger.warning('NMPC returned %s at t=%.2f s; reusing the previous command', status, k * period)
                problem = solver.problem
                applied = np.clip(applied, problem.u_min, problem.u_max)
        else:
            applied = nu_c
        t_nmpc = time.perf_counter()

        xi = servo.xi.to_values() if feature_valid else np.full(2, np.nan)
        xi_err = servo.xi_err if feature_valid else np.full(2, np.nan)
        nu_d = servo.nu_d if feature_valid else np.full(6, np.nan)
        residual = servo.residual if feature_valid else np.full(2, np.nan)
        measurement = obs.measurement()
        record = {'time': k * period}
        record.update(zip(STATE_FIELDS, np.asarray(x)))
        record.update(zip((f'meas_{name}' for name in STATE_FIELDS), meas))
        record.update(zip(('r1', 'theta1', 'r2', 'theta2'), measurement))
        record.update(
            valid1=float(obs.valid_left), valid2=float(obs.valid_right), d_l1l2=obs.d_l1l2,
            xi_r=xi[0], xi_theta=xi[1], err_r=xi_err[0], err_theta=xi_err[1],
            v_xd=nu_d[0], err_v_x=nu_d[0] - meas[4],
            omega_x_res=residual[0], omega_y_res=residual[1],
            feature_valid=float(feature_valid), missed=est.missed,
            nmpc_status=STATUS_CODES[status], nmpc_kkt=kkt, nmpc_iterations=iterations, nmpc_cost=cost,
        )
        record.update(zip(('nu_c_x', 'nu_c_y', 'nu_c_z', 'nu_c_omega_z'), nu_c))
        record.update(zip(('nu_ref_x', 'nu_ref_y', 'nu_ref_z', 'nu_ref_omega_z'), applied))

        for _ in range(config.plant_substeps):
            x = rk4_step(x, applied, substep, plant_dyn)
        end = time.perf_counter()
        log.append(record, (t_perception - start, t_servo - t_perception, t_nmpc - t_servo, end - start))

    logger.info(
        'Finished scenario %r: %d cycles, %d dropout events, max z %.3f m%s', config.name, len(log),
        log.dropout_events, log.column('z').max() if len(log) else np.nan, ' (failed)' if log.failed else '',
    )
    return log


def run_batch(config, *, scheduler='threads'):
    """Run every member of a batch configuration in parallel; returns the logs in member order"""
    members = config.expand()
    scene = members[0].scene.build()
    rig = members[0].rig.build()
    line_model = identify_line_model(
        scene, rig, period=config.control_period, duration=config.perception.identification_duration,
    )
    logger.info('Starting batch %r with %d runs', config.name, len(members))
    tasks = [delayed(run_scenario)(member, line_model=line_model) for member in members]
    logs = list(compute(*tasks, scheduler=scheduler))
    logger.info('Finished batch %r', config.name)
    return logs


def batch_statistics(logs, column):
    """Per-cycle mean of absolute values and the spread around it across runs.

    mean_k = (1/n) sum |x_ik| and std_k = sqrt(1/(n-1) sum (x_ik - mean_k)^2),
    over the cycles common to all runs.
    """
    if len(logs) < 2:
        raise ValueError(f'batch_statistics needs at least 2 runs, got {len(logs)}')
    length = min(len(log) for log in logs)
    values = np.array([log.column(column)[:length] for log in logs])
    mean = np.mean(np.abs(values), axis=0)
    std = np.sqrt(np.sum((values - mean) ** 2, axis=0) / (len(logs) - 1))
    return logs[0].time[:length], mean, std


def convergence_time(log, fraction=0.05):
    """First time after which the feature error norm stays below ``fraction`` of its initial value"""
    if not len(log):
        return np.inf
    error = np.hypot(log.column('err_r'), log.column('err_theta'))
    t = log.time
    finite = np.isfinite(error)
    if not finite.any():
        return np.inf
    initial = error[np.argmax(finite)]
    if initial == 0:
        return float(t[0])
    above = ~finite | (error > fraction * initial)
    above[:np.argmax(finite)] = True
    if above[-1]:
        return np.inf
    if not above.any():
        return float(t[0])
    return float(t[np.flatnonzero(above)[-1] + 1])


def window_means(t, values, window=5.0):
    """Mean of ``values`` over consecutive windows of ``window`` seconds, ignoring NaN"""
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    if not window > 0:
        raise ValueError(f'window must be positive, got {window}')
    if not len(t):
        return np.zeros(0)
    index = np.floor((t - t[0]) / window + 1e-9).astype(int)
    means = []
    for i in range(index[-1] + 1):
        chunk = values[index == i]
        chunk = chunk[np.isfinite(chunk)]
        means.append(chunk.mean() if len(chunk) else np.nan)
    return np.array(means)
