"""Comparators: zero-order-hold discrete preintegration and the RK4 oracle."""
from dataclasses import dataclass

import numpy as np

from . import _integrate
from .errors import InvalidInputError, OracleSelfCheckError
from .preopt import _in_window, _window, run_integrator
from .types import BiasState, NoiseModel

__all__ = ["DiscreteResult", "OracleConfig", "OracleResult", "discrete_preintegrate", "discrete_at",
           "oracle_integrate"]

SELF_CHECK_TOL = 1e-10


@dataclass(frozen=True)
class DiscreteResult:
    rotation: np.ndarray
    velocity: np.ndarray
    position: np.ndarray
    jac: np.ndarray
    cov: np.ndarray


def discrete_at(gyro, accel, window, times, bias=None, noise=None):
    """ZOH preintegration recorded at each of ``times`` (stacked arrays)."""
    t0, t1 = _window(window)
    bias = bias or BiasState()
    gyro = _in_window(gyro, t0, t1, "gyro")
    accel = _in_window(accel, t0, t1, "accel")
    times = np.asarray(times, dtype=float)
    if np.any(times < t0) or np.any(times > t1) or np.any(np.diff(times) < 0):
        raise InvalidInputError("record times must be sorted and inside the window")
    return DiscreteResult(*run_integrator(gyro, accel, t0, t1, bias, times, _integrate.ZOH, noise))


def discrete_preintegrate(gyro, accel, window, bias=None, noise=None):
    """Classical forward-Euler/ZOH preintegration over the window.

    Steps over the union of gyro and accel timestamps, holding the most
    recent sample of each stream. Returns the endpoint increments, the five
    bias Jacobian blocks and the propagated covariance of ``(theta, v, r)``.
    """
    t0, t1 = _window(window)
    res = discrete_at(gyro, accel, (t0, t1), [t1], bias, noise)
    return DiscreteResult(res.rotation[0], res.velocity[0], res.position[0], res.jac[0], res.cov[0])


@dataclass(frozen=True)
class OracleConfig:
    step: float = 1e-4
    integrator: str = "RK4"
    self_check: bool = True

    def __post_init__(self):
        if not self.step > 0:
            raise InvalidInputError("oracle step must be positive")
        if self.integrator != "RK4":
            raise InvalidInputError("only the RK4 oracle is available")

    def check_spacing(self, rate):
        """Step must be at most a tenth of the coarsest sample spacing."""
        if self.step > 0.1 / rate:
            raise InvalidInputError(f"oracle step {self.step} too coarse for {rate} Hz sampling")


@dataclass(frozen=True)
class OracleResult:
    times: np.ndarray
    rotation: np.ndarray
    velocity: np.ndarray
    position: np.ndarray
    rate: np.ndarray
    accel: np.ndarray


def oracle_integrate(pattern, window, times, config=None):
    """Ground-truth increments at ``times`` by fixed-step RK4 on the analytic signals.

    With ``config.self_check`` the run is repeated at half the step and an
    OracleSelfCheckError is raised if any output moves by more than 1e-10.
    """
    config = config or OracleConfig()
    t0, t1 = _window(window)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < t0) or np.any(times > t1):
        raise InvalidInputError("oracle query times must lie inside the window")
    order = np.argsort(times, kind="stable")
    sorted_t = np.ascontiguousarray(times[order])
    params = pattern.params
    rot, vel, pos = _integrate.rk4(params, t0, sorted_t, config.step)
    if config.self_check:
        rot2, vel2, pos2 = _integrate.rk4(params, t0, sorted_t, 0.5 * config.step)
        diff = max(np.abs(rot2 - rot).max(initial=0.0), np.abs(vel2 - vel).max(initial=0.0),
                   np.abs(pos2 - pos).max(initial=0.0))
        if diff > SELF_CHECK_TOL:
            raise OracleSelfCheckError(
                f"oracle step halving changed outputs by {diff:.3e} (> {SELF_CHECK_TOL:g}); "
                f"signals too rough for step {config.step}")
    inv = np.empty_like(order)
    inv[order] = np.arange(order.size)
    w, a = pattern.sample(times)
    return OracleResult(times, rot[inv], vel[inv], pos[inv], w, a)
