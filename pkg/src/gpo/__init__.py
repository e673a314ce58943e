"""Continuous-time IMU preintegration with Gaussian-process pseudo-measurements.

Fit a local GP trajectory to raw gyro/accelerometer data over a window
(:func:`preintegrate`), then query rotation, velocity and position
increments, their bias Jacobians and covariance at any time inside it
(:func:`query`).
"""
from .baseline import discrete_preintegrate, oracle_integrate
from .errors import (
    ConvergenceError,
    DepthError,
    EmptyWindowError,
    GpoError,
    InvalidInputError,
    OracleSelfCheckError,
    SingularSystemError,
    WindowMismatchError,
)
from .gp_prior import GpHyper
from .lie import exp_so3, log_so3, right_jacobian, right_jacobian_inv
from .preopt import PreintTrajectory, preintegrate
from .query import QueryResult, bias_correct, query, query_many
from .sim import CorruptionSpec, MotionPattern, SamplingSpec, simulate
from .types import BiasState, NoiseModel, Stream

__version__ = "0.1.0"
