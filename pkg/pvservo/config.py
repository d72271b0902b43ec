"""Scenario configuration.

Every model forbids unknown keys and carries the nominal tuning as defaults,
so an empty JSON object ``{}`` is a complete scenario.  ``build`` methods turn
a model into the domain object it describes.
"""
import json
import logging
from pathlib import Path
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .controller import VsGains
from .nmpc import NmpcProblem
from .perception import LineEstimator
from .plant import DEFAULT_PI, CameraRig, DynParams, State8
from .scene import PvScene

logger = logging.getLogger(__name__)


class _Model(BaseModel):
    model_config = ConfigDict(extra='forbid')


class SceneConfig(_Model):
    origin: Tuple[float, float] = (0.0, 0.0)
    direction: Tuple[float, float] = (1.0, 0.0)
    panel_size: Tuple[float, float] = (2.0, 1.0)
    panel_count: int = Field(80, ge=1)
    rows: int = Field(1, ge=1)
    edge_thickness: float = Field(0.05, gt=0)
    ground_offset: float = Field(1.0, ge=0)

    def build(self):
        return PvScene(
            self.origin, self.direction, panel_size=self.panel_size, panel_count=self.panel_count, rows=self.rows,
            edge_thickness=self.edge_thickness, ground_offset=self.ground_offset,
        )


class RigConfig(_Model):
    t_bc: Tuple[float, float, float] = (0.1, 0.0, -0.05)
    R_bc: Optional[Tuple[Tuple[float, float, float], Tuple[float, float, float], Tuple[float, float, float]]] = None
    focal: float = Field(385.0, gt=0)
    image_width: int = Field(640, gt=0)
    image_height: int = Field(480, gt=0)
    depth_range: Tuple[float, float] = (0.2, 4.6)

    @field_validator('depth_range')
    @classmethod
    def _check_depth_range(cls, value):
        near, far = value
        if not 0 <= near < far:
            raise ValueError(f'depth_range must satisfy 0 <= near < far, got {value}')
        return value

    def build(self):
        return CameraRig(
            self.t_bc, self.R_bc, focal=self.focal, image_width=self.image_width, image_height=self.image_height,
            depth_range=self.depth_range,
        )


class DynamicsConfig(_Model):
    """Prediction model coefficients and the plant's relative deviation from them"""
    pi: Tuple[float, ...] = tuple(DEFAULT_PI.tolist())
    mismatch: float = Field(0.0, gt=-1)

    @field_validator('pi')
    @classmethod
    def _check_length(cls, value):
        if len(value) != 18:
            raise ValueError(f'pi must have 18 coefficients, got {len(value)}')
        return value

    def build(self):
        return DynParams(self.pi)

    def build_plant(self):
        model = self.build()
        return model.perturbed(self.mismatch) if self.mismatch else model


class GainsConfig(_Model):
    K: Tuple[float, float] = (150.0, 0.5)
    W: Tuple[float, float, float, float, float, float] = (1.0, 1.0, 1.0, 50.0, 50.0, 1.0)
    k1: float = Field(10.0, gt=0)
    k2: float = Field(10.0, gt=0)
    v_x_max: float = Field(1.0, ge=0)
    eta_zd: float = 3.0
    xi_d: Tuple[float, float] = (0.0, 0.0)

    def build(self):
        return VsGains(
            self.K, self.W, k1=self.k1, k2=self.k2, v_x_max=self.v_x_max, eta_zd=self.eta_zd, xi_d=self.xi_d,
        )


class NmpcConfig(_Model):
    """NMPC tuning; ``null`` state bounds are unbounded"""
    horizon: int = Field(10, ge=2)
    dt: float = Field(0.05, gt=0)
    Q: Tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    R: Tuple[float, float, float, float] = (1.4, 1.4, 1.4, 1.4)
    x_min: Tuple[Optional[float], ...] = (None, None, 0.0, -np.pi, -2.0, -2.0, -2.0, -1.5)
    x_max: Tuple[Optional[float], ...] = (None, None, 4.5, np.pi, 2.0, 2.0, 2.0, 1.5)
    u_max: Tuple[float, float, float, float] = (2.0, 2.0, 2.0, 1.5)
    input_reference: Literal['feedforward', 'zero'] = 'feedforward'
    iterations: int = Field(1, ge=1)
    tol: float = Field(1e-6, gt=0)

    @field_validator('Q', 'R', 'u_max')
    @classmethod
    def _check_positive(cls, value):
        if min(value) <= 0:
            raise ValueError(f'entries must be positive, got {value}')
        return value

    @field_validator('x_min', 'x_max')
    @classmethod
    def _check_bounds(cls, value):
        if len(value) != 8:
            raise ValueError(f'state bounds need 8 entries, got {len(value)}')
        return value

    def build(self, dyn=None):
        x_min = np.array([-np.inf if b is None else b for b in self.x_min])
        x_max = np.array([np.inf if b is None else b for b in self.x_max])
        return NmpcProblem(
            horizon=self.horizon, dt=self.dt, Q=np.diag(self.Q), R=np.diag(self.R), x_min=x_min, x_max=x_max,
            u_max=self.u_max, dyn=dyn, input_reference=self.input_reference, iterations=self.iterations,
            tol=self.tol,
        )


class PerceptionConfig(_Model):
    process_noise: Tuple[float, float, float, float] = (1.0, 1e-3, 1.0, 1e-3)
    measurement_noise: Tuple[float, float, float, float] = (4.0, 1e-4, 4.0, 1e-4)
    initial_covariance: float = Field(10.0, gt=0)
    dropout_horizon: int = Field(15, ge=0)
    min_pixels: int = Field(50, ge=2)
    min_component: int = Field(20, ge=1)
    c_p: float = Field(0.75, gt=0)
    depth_window: Optional[Tuple[float, float]] = None
    identification_duration: float = Field(60.0, gt=0)

    def build(self, A, B):
        return LineEstimator(
            A, B, process_noise=np.diag(self.process_noise), measurement_noise=np.diag(self.measurement_noise),
            initial_covariance=self.initial_covariance * np.eye(4), dropout_horizon=self.dropout_horizon,
        )


class NoiseConfig(_Model):
    """Gaussian sensor noise given as (mean, standard deviation) per component"""
    enabled: bool = True
    pose_mean: float = -0.005
    pose_std: float = Field(0.005, ge=0)
    velocity_mean: float = -0.001
    velocity_std: float = Field(0.001, ge=0)


class BatchMember(_Model):
    lateral_offset: float
    seed: int


class ScenarioConfig(_Model):
    name: str = 'custom'
    mode: Literal['vs', 'vs-nmpc'] = 'vs-nmpc'
    scene: SceneConfig = SceneConfig()
    rig: RigConfig = RigConfig()
    dynamics: DynamicsConfig = DynamicsConfig()
    gains: GainsConfig = GainsConfig()
    nmpc: NmpcConfig = NmpcConfig()
    perception: PerceptionConfig = PerceptionConfig()
    noise: NoiseConfig = NoiseConfig()
    initial_state: Tuple[float, float, float, float, float, float, float, float] = (
        10.0, 0.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0,
    )
    lateral_offset: float = 0.0
    duration: float = Field(40.0, gt=0)
    control_period: float = Field(0.05, gt=0)
    plant_substeps: int = Field(5, ge=1)
    seed: int = 0
    batch: List[BatchMember] = []

    @model_validator(mode='after')
    def _check_periods(self):
        if self.control_period < self.nmpc.dt - 1e-12:
            raise ValueError(
                f'control_period ({self.control_period}) must not be shorter than the NMPC dt ({self.nmpc.dt})'
            )
        return self

    def start_state(self, scene=None):
        """Initial State8 with ``lateral_offset`` applied to the left of the array"""
        scene = self.scene.build() if scene is None else scene
        x = np.array(self.initial_state, dtype=float)
        x[:2] += self.lateral_offset * scene.normal
        return State8(x)

    def expand(self):
        if not self.batch:
            return [self]
        return [
            self.model_copy(update={
                'name': f'{self.name}-{i}', 'lateral_offset': member.lateral_offset, 'seed': member.seed,
                'batch': [],
            })
            for i, member in enumerate(self.batch)
        ]


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f'Cannot read configuration {path}: {exc}') from exc
    return ScenarioConfig.model_validate_json(text)


def dump_config(config, path=None):
    """Serialize a configuration to JSON, writing it to ``path`` when given"""
    text = config.model_dump_json(indent=2)
    if path is not None:
        path = Path(path)
        try:
            path.write_text(text + '\n')
        except OSError as exc:
            raise OSError(f'Cannot write configuration {path}: {exc}') from exc
        logger.info('Wrote configuration to %s', path)
    return text


def config_schema():
    return json.dumps(ScenarioConfig.model_json_schema(), indent=2)
