from . import exceptions, utils  # noqa
from .plant import Pose4, BodyVel4, State8, DynParams, CameraRig, rk4_step, state_derivative  # noqa
from .features import PointFeature, LineFeature, line_from_points, compact_jacobian  # noqa
from .scene import PvScene, render_edge_mask, project_edge_lines  # noqa
from .perception import EdgeObservation, LineEstimator, extract_edge_lines, kalman_step, dmd_fit  # noqa
from .controller import VsGains, visual_servo  # noqa
from .nmpc import NmpcProblem, NmpcSolver, OcpSolution, solve_rti, shift_warm_start  # noqa
from .config import ScenarioConfig, load_config, dump_config  # noqa
from .presets import experiment_presets  # noqa
from .harness import RunLog, run_scenario, run_batch, batch_statistics  # noqa
from .export import export_log, read_log  # noqa
