"""Two-step pre-optimisation of the local GP pseudo-measurement trajectory.

Step 1 fits rotation knots ``(C_k, w_k)`` by Gauss-Newton against gyro
samples under a WNOA prior on the lifted rotation. Step 2 fits translation
knots ``(r_k, v_k, a_k)`` by one linear solve against accelerometer samples
rotated with the (now fixed) interpolated rotation, under a WNOJ prior.
Both normal equations are block tridiagonal, so the solve is O(K).
"""
import math
from dataclasses import dataclass, field

import numpy as np

from . import _integrate, _rotation, _translation, blocktri
from .errors import ConvergenceError, EmptyWindowError, InvalidInputError
from .gp_prior import GpHyper, Order, prior_information
from .types import BiasState, NoiseModel, Stream

__all__ = [
    "PreintTrajectory",
    "RotationFit",
    "default_knot_count",
    "knot_grid",
    "init_knots",
    "solve_rotation",
    "solve_translation",
    "accumulate_proc_jacobians",
    "sensitivities_from_proc",
    "proc_from_sensitivities",
    "preintegrate",
]

JACOBIAN_MODES = ("fit", "discrete")

KNOTS_PER_SECOND = 20
MIN_KNOTS = 2
MAX_KNOTS = 64
MAX_ITERATIONS = 50
STEP_TOL = 1e-10


def default_knot_count(duration):
    """``ceil(20 * duration)`` clamped to [2, 64]."""
    return int(min(max(math.ceil(duration * KNOTS_PER_SECOND - 1e-9), MIN_KNOTS), MAX_KNOTS))


def knot_grid(t0, t1, n_intervals):
    """Uniform knot times with both ends exact."""
    if n_intervals < 1:
        raise InvalidInputError("need at least one knot interval")
    times = t0 + (t1 - t0) * np.arange(n_intervals + 1) / n_intervals
    times[0] = t0
    times[-1] = t1
    return times


def _window(window):
    t0, t1 = (float(x) for x in window)
    if not (np.isfinite(t0) and np.isfinite(t1) and t1 > t0):
        raise InvalidInputError(f"invalid window {window!r}")
    return t0, t1


def _in_window(stream, t0, t1, name):
    sub = stream.window(t0, t1)
    if len(sub) == 0:
        raise EmptyWindowError(f"no {name} samples inside [{t0}, {t1}]")
    return sub


def _grid(t0, t1, *time_arrays):
    pts = np.concatenate([np.array([t0, t1])] + [np.asarray(a, dtype=float) for a in time_arrays])
    pts = pts[(pts >= t0) & (pts <= t1)]
    return np.unique(pts)


def run_integrator(gyro, accel, t0, t1, bias, record_times, scheme, noise=None):
    """Integrate raw samples over the union of timestamps; record at ``record_times``."""
    noise = noise or NoiseModel.from_std()
    record_times = np.asarray(record_times, dtype=float)
    grid = _grid(t0, t1, gyro.t, accel.t, record_times)
    record_idx = np.searchsorted(grid, record_times)
    return _integrate.integrate(
        grid, record_idx, gyro.t, gyro.values, accel.t, accel.values,
        np.ascontiguousarray(bias.gyro), np.ascontiguousarray(bias.accel), scheme,
        np.ascontiguousarray(noise.gyro_cov), np.ascontiguousarray(noise.accel_cov),
        gyro.nominal_dt or (t1 - t0), accel.nominal_dt or (t1 - t0),
    )


def _nearest(stream, times):
    idx = np.clip(np.searchsorted(stream.t, times), 1, max(len(stream) - 1, 1))
    if len(stream) == 1:
        return np.repeat(stream.values[:1], len(times), axis=0)
    left = stream.t[idx - 1]
    right = stream.t[idx]
    pick = np.where(np.abs(times - left) <= np.abs(right - times), idx - 1, idx)
    return stream.values[pick]


def init_knots(gyro, accel, window, n_intervals, bias=None):
    """Seed knots by zero-order-hold integration up to each knot time.

    Returns ``(rot, rate, trans)`` with shapes ``(K+1, 3, 3)``, ``(K+1, 3)``
    and ``(K+1, 9)``; rates and accelerations come from the nearest sample.
    """
    t0, t1 = _window(window)
    bias = bias or BiasState()
    gyro = _in_window(gyro, t0, t1, "gyro")
    accel = _in_window(accel, t0, t1, "accel")
    times = knot_grid(t0, t1, n_intervals)
    rot, vel, pos, _, _ = run_integrator(gyro, accel, t0, t1, bias, times, _integrate.ZOH)
    rate = _nearest(gyro, times) - bias.gyro
    acc_body = _nearest(accel, times) - bias.accel
    trans = np.empty((times.size, 9))
    trans[:, 0:3] = pos
    trans[:, 3:6] = vel
    trans[:, 6:9] = np.einsum("kij,kj->ki", rot, acc_body)
    return rot, rate, trans


@dataclass(frozen=True)
class RotationFit:
    rot: np.ndarray
    rate: np.ndarray
    cov: np.ndarray
    iterations: int
    cost_trace: tuple
    sens: np.ndarray = None


def solve_rotation(rot, rate, knot_times, gyro, bias=None, hyper=None, noise=None,
                   max_iterations=MAX_ITERATIONS, tol=STEP_TOL):
    """Gauss-Newton fit of the rotation knots with backtracking line search.

    ``C_0`` is held at its seed (identity for a fresh window); ``w_0`` is free.
    Stops when the largest update component drops below ``tol``, or when no
    backtracked step decreases the objective. Raises ConvergenceError after
    ``max_iterations``.
    """
    bias = bias or BiasState()
    hyper = hyper or GpHyper()
    noise = noise or NoiseModel.from_std()
    knot_times = np.ascontiguousarray(knot_times, dtype=float)
    nk = knot_times.size - 1
    gyro = _in_window(gyro, knot_times[0], knot_times[-1], "gyro")
    idx, lam, psi, _ = _rotation.sample_coeffs(gyro.t, knot_times, 2)
    rates = np.ascontiguousarray(gyro.values - bias.gyro)
    w_meas = np.linalg.inv(noise.gyro_cov)
    w_prior = np.stack([prior_information(knot_times[k + 1] - knot_times[k], hyper.qc, Order.WNOA)
                        for k in range(nk)])
    rot = np.ascontiguousarray(rot, dtype=float).copy()
    rate = np.ascontiguousarray(rate, dtype=float).copy()

    def linearise(r, w):
        return _rotation.assemble(r, w, knot_times, rates, idx, lam, psi, w_meas, w_prior)

    diag, upper, grad, cost = linearise(rot, rate)
    trace = [float(cost)]
    iterations = 0
    converged = False
    for _ in range(max_iterations):
        step = blocktri.solve_system(diag, upper, -grad)
        if np.max(np.abs(step)) < tol:
            converged = True
            break
        alpha = 1.0
        while alpha > 1e-8:
            new_rot, new_rate = _rotation.retract(rot, rate, step, alpha)
            new_cost = _rotation.cost(new_rot, new_rate, knot_times, rates, idx, lam, psi, w_meas, w_prior)
            if new_cost <= cost:
                break
            alpha *= 0.5
        else:
            # numerical floor: no descent left along the Gauss-Newton direction
            converged = True
            break
        rot, rate = new_rot, new_rate
        iterations += 1
        diag, upper, grad, cost = linearise(rot, rate)
        trace.append(float(cost))
        if np.max(np.abs(alpha * step)) < tol:
            converged = True
            break
    if not converged:
        raise ConvergenceError(
            f"rotation fit did not converge in {max_iterations} iterations "
            f"(residual norm {math.sqrt(trace[-1]):.3e})",
            iterations=max_iterations, residual_norm=math.sqrt(trace[-1]), trace=trace)
    # differentiating the optimality conditions: H dx/dbg = -sum_j d_rate_j^T W
    rhs = _rotation.bias_rhs(rot, rate, idx, lam, psi, w_meas, nk + 1)
    sens, cov = blocktri.solve_system(diag, upper, -rhs, want_cov=True)
    sens[0, 0:3, :] = 0.0
    cov[0, 0:3, :] = 0.0
    cov[0, :, 0:3] = 0.0
    return RotationFit(rot, rate, cov, iterations, tuple(trace), sens)


def solve_translation(rot, rate, knot_times, accel, bias=None, hyper=None, noise=None, rot_sens=None):
    """Linear least-squares fit of ``(r, v, a)`` knots given fixed rotation knots.

    Returns ``(trans, cov, sens)`` with shapes ``(K+1, 9)``, ``(K+1, 9, 9)``
    and ``(K+1, 9, 6)``. ``sens`` holds the exact derivatives of the knots
    with respect to ``(bg, ba)``; it needs the rotation knot sensitivities
    ``rot_sens`` and is None without them.
    """
    bias = bias or BiasState()
    hyper = hyper or GpHyper()
    noise = noise or NoiseModel.from_std()
    knot_times = np.ascontiguousarray(knot_times, dtype=float)
    nk = knot_times.size - 1
    accel = _in_window(accel, knot_times[0], knot_times[-1], "accel")
    idx2, lam2, psi2, _ = _rotation.sample_coeffs(accel.t, knot_times, 2)
    rot = np.ascontiguousarray(rot)
    rate = np.ascontiguousarray(rate)
    if rot_sens is None:
        rot_at, _ = _rotation.interp_many(rot, rate, idx2, lam2, psi2)
    else:
        rot_at, rot_jac = _rotation.rotation_sensitivity(rot, rate, idx2, lam2, psi2,
                                                         np.ascontiguousarray(rot_sens))
    specific = accel.values - bias.accel
    accel_frame = np.einsum("jab,jb->ja", rot_at, specific)
    idx, _, _, frac = _rotation.sample_coeffs(accel.t, knot_times, 3)
    w_meas = np.linalg.inv(noise.accel_cov)
    w_prior = np.stack([prior_information(knot_times[k + 1] - knot_times[k], hyper.qr, Order.WNOJ)
                        for k in range(nk)])
    diag, upper, rhs = _translation.assemble(knot_times, np.ascontiguousarray(accel_frame), idx, frac,
                                             w_meas, w_prior)
    if rot_sens is None:
        trans, cov = blocktri.solve_system(diag, upper, rhs, want_cov=True)
        sens = None
    else:
        # the right-hand side is linear in accel_frame, whose bias derivatives are
        # -C (f - ba)^ dtheta/dbg and -C
        d_frame = np.empty((accel_frame.shape[0], 3, 6))
        skew_f = np.zeros((specific.shape[0], 3, 3))
        skew_f[:, 0, 1], skew_f[:, 0, 2] = -specific[:, 2], specific[:, 1]
        skew_f[:, 1, 0], skew_f[:, 1, 2] = specific[:, 2], -specific[:, 0]
        skew_f[:, 2, 0], skew_f[:, 2, 1] = -specific[:, 1], specific[:, 0]
        d_frame[:, :, 0:3] = -np.einsum("jab,jbc,jcd->jad", rot_at, skew_f, rot_jac)
        d_frame[:, :, 3:6] = -rot_at
        rhs_all = np.empty((nk + 1, 9, 7))
        rhs_all[:, :, 0] = rhs
        for c in range(6):
            rhs_all[:, :, c + 1] = _translation.rhs_only(
                nk + 1, np.ascontiguousarray(d_frame[:, :, c]), idx, frac, w_meas)
        rhs_all[0, 0:6, :] = 0.0
        x, cov = blocktri.solve_system(diag, upper, rhs_all, want_cov=True)
        trans = np.ascontiguousarray(x[:, :, 0])
        sens = np.ascontiguousarray(x[:, :, 1:])
        sens[0, 0:6, :] = 0.0
    trans[0, 0:6] = 0.0
    cov[0, 0:6, :] = 0.0
    cov[0, :, 0:6] = 0.0
    return trans, cov, sens


def accumulate_proc_jacobians(gyro, accel, knot_times, bias=None, noise=None):
    """Bias Jacobians of the accumulated increments at every knot time.

    Uses the midpoint discrete recursion over the union of sample and knot
    timestamps. Returns ``(jac, cov)``: ``jac`` has shape ``(K+1, 5, 3, 3)``
    ordered ``dC/dbg, dv/dbg, dv/dba, dr/dbg, dr/dba``; ``cov`` is the
    discretely propagated covariance of ``(theta, v, r)``.
    """
    bias = bias or BiasState()
    t0, t1 = float(knot_times[0]), float(knot_times[-1])
    gyro = _in_window(gyro, t0, t1, "gyro")
    accel = _in_window(accel, t0, t1, "accel")
    _, _, _, jac, cov = run_integrator(gyro, accel, t0, t1, bias, knot_times, _integrate.MIDPOINT, noise)
    return jac, cov


def sensitivities_from_proc(rot, trans, proc_jac):
    """Knot bias sensitivities implied by discretely accumulated Jacobians.

    Returns ``(rot_sens (K+1,6,3), trans_sens (K+1,9,6))``: rates follow
    ``dw/dbg = -I`` and accelerations ``a = C (f - ba)`` follow
    ``da/dbg = -C (C^T a)^ J_C``, ``da/dba = -C``.
    """
    n = proc_jac.shape[0]
    rot_sens = np.zeros((n, 6, 3))
    rot_sens[:, 0:3] = proc_jac[:, 0]
    rot_sens[:, 3:6] = -np.eye(3)
    trans_sens = np.zeros((n, 9, 6))
    trans_sens[:, 0:3, 0:3] = proc_jac[:, 3]
    trans_sens[:, 0:3, 3:6] = proc_jac[:, 4]
    trans_sens[:, 3:6, 0:3] = proc_jac[:, 1]
    trans_sens[:, 3:6, 3:6] = proc_jac[:, 2]
    for k in range(n):
        c = rot[k]
        f = c.T @ trans[k, 6:9]
        f_hat = np.array([[0.0, -f[2], f[1]], [f[2], 0.0, -f[0]], [-f[1], f[0], 0.0]])
        trans_sens[k, 6:9, 0:3] = -c @ f_hat @ proc_jac[k, 0]
        trans_sens[k, 6:9, 3:6] = -c
    return rot_sens, trans_sens


def proc_from_sensitivities(rot_sens, trans_sens):
    """The five ``(K+1, 3, 3)`` increment blocks ``dC/dbg, dv/dbg, dv/dba, dr/dbg, dr/dba``."""
    return np.ascontiguousarray(np.stack([
        rot_sens[:, 0:3], trans_sens[:, 3:6, 0:3], trans_sens[:, 3:6, 3:6],
        trans_sens[:, 0:3, 0:3], trans_sens[:, 0:3, 3:6],
    ], axis=1))


def _frozen(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PreintTrajectory:
    """Fitted pseudo-measurement trajectory over ``[t_start, t_end]``.

    Knot arrays: ``rot (K+1,3,3)``, ``rate (K+1,3)``, ``trans (K+1,9)`` laid
    out ``(r, v, a)``, ``proc_jac (K+1,5,3,3)``, ``rot_cov (K+1,6,6)`` over
    ``(theta, w)``, ``trans_cov (K+1,9,9)``, ``disc_cov (K+1,9,9)`` over
    ``(theta, v, r)``. ``rot_sens (K+1,6,3)`` and ``trans_sens (K+1,9,6)`` are
    the bias sensitivities of every knot state; ``proc_jac`` is their
    increment view. Arrays are read-only.
    """

    t_start: float
    t_end: float
    knot_times: np.ndarray
    rot: np.ndarray
    rate: np.ndarray
    trans: np.ndarray
    proc_jac: np.ndarray
    rot_cov: np.ndarray
    trans_cov: np.ndarray
    disc_cov: np.ndarray
    rot_sens: np.ndarray
    trans_sens: np.ndarray
    bias_lin: BiasState
    hyper: GpHyper
    noise: NoiseModel
    iterations: int = 0
    cost_trace: tuple = field(default=())
    jacobians: str = "fit"

    def __post_init__(self):
        for name in ("knot_times", "rot", "rate", "trans", "proc_jac", "rot_cov", "trans_cov", "disc_cov",
                     "rot_sens", "trans_sens"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def n_intervals(self):
        return self.knot_times.size - 1

    @property
    def interval(self):
        return (self.t_end - self.t_start) / self.n_intervals

    @property
    def position(self):
        return self.trans[:, 0:3]

    @property
    def velocity(self):
        return self.trans[:, 3:6]

    @property
    def accel(self):
        return self.trans[:, 6:9]


def preintegrate(gyro, accel, window, n_intervals=None, bias=None, hyper=None, noise=None,
                 jacobians="fit"):
    """Fit a :class:`PreintTrajectory` to raw gyro/accel streams over ``window``.

    ``n_intervals`` defaults to :func:`default_knot_count` of the window length.
    ``jacobians`` selects the knot bias Jacobians: ``"fit"`` differentiates
    the fitted knots exactly; ``"discrete"`` uses the midpoint discrete
    recursion accumulated at the knot times.
    """
    if jacobians not in JACOBIAN_MODES:
        raise InvalidInputError(f"jacobians must be one of {JACOBIAN_MODES}, got {jacobians!r}")
    t0, t1 = _window(window)
    if not isinstance(gyro, Stream) or not isinstance(accel, Stream):
        raise InvalidInputError("gyro and accel must be Stream instances")
    bias = bias or BiasState()
    hyper = hyper or GpHyper()
    noise = noise or NoiseModel.from_std()
    if n_intervals is None:
        n_intervals = default_knot_count(t1 - t0)
    n_intervals = int(n_intervals)
    if n_intervals < 1:
        raise InvalidInputError("n_intervals must be >= 1")
    gyro = _in_window(gyro, t0, t1, "gyro")
    accel = _in_window(accel, t0, t1, "accel")
    times = knot_grid(t0, t1, n_intervals)
    rot, rate, _ = init_knots(gyro, accel, (t0, t1), n_intervals, bias)
    fit = solve_rotation(rot, rate, times, gyro, bias, hyper, noise)
    exact = jacobians == "fit"
    trans, trans_cov, trans_sens = solve_translation(fit.rot, fit.rate, times, accel, bias, hyper, noise,
                                                     rot_sens=fit.sens if exact else None)
    jac, disc_cov = accumulate_proc_jacobians(gyro, accel, times, bias, noise)
    if exact:
        rot_sens = fit.sens
        jac = proc_from_sensitivities(rot_sens, trans_sens)
    else:
        rot_sens, trans_sens = sensitivities_from_proc(fit.rot, trans, jac)
    return PreintTrajectory(
        t_start=t0, t_end=t1, knot_times=times, rot=fit.rot, rate=fit.rate, trans=trans,
        proc_jac=jac, rot_cov=fit.cov, trans_cov=trans_cov, disc_cov=disc_cov,
        rot_sens=rot_sens, trans_sens=trans_sens, bias_lin=bias, hyper=hyper, noise=noise,
        iterations=fit.iterations, cost_trace=fit.cost_trace, jacobians=jacobians,
    )
