"""Constant-time evaluation of a fitted :class:`PreintTrajectory` at any time
inside its window.

Bias Jacobians chain the interpolation sensitivities with the stored bias
sensitivities of the two neighbouring knot states.

The covariance is ordered ``(theta, v, r)``: knot marginals mapped through
the interpolation, plus the GP conditional covariance. Correlations between
neighbouring knots and between rotation and translation are dropped.
"""
from dataclasses import dataclass, replace

import numpy as np

from . import _so3
from ._jit import kernel
from ._rotation import interp
from .errors import InvalidInputError
from .gp_prior import scalar_coeffs, scalar_conditional_cov
from .lie import exp_so3
from .types import BiasState

__all__ = ["QueryResult", "query", "query_many", "query_bias_jacobian", "bias_correct"]


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class QueryResult:
    """Pseudo-measurements at ``t``.

    ``jac_bias`` stacks ``dC/dbg, dv/dbg, dv/dba, dr/dbg, dr/dba``; ``cov`` is
    9x9 over ``(theta, v, r)``.
    """

    t: float
    rotation: np.ndarray
    velocity: np.ndarray
    position: np.ndarray
    rate: np.ndarray
    accel: np.ndarray
    jac_bias: np.ndarray
    cov: np.ndarray
    bias_lin: BiasState

    def __post_init__(self):
        for name in ("rotation", "velocity", "position", "rate", "accel", "jac_bias", "cov"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))


@kernel
def locate(knot_times, tau):
    """Interval index by arithmetic on the uniform grid, nudged by one for rounding."""
    nk = knot_times.shape[0] - 1
    t0 = knot_times[0]
    h = (knot_times[nk] - t0) / nk
    k = int((tau - t0) / h)
    if k > nk - 1:
        k = nk - 1
    if k < 0:
        k = 0
    if tau < knot_times[k] and k > 0:
        k -= 1
    elif tau >= knot_times[k + 1] and k < nk - 1:
        k += 1
    return k


@kernel
def _knot_cov(rot_cov, trans_cov):
    out = np.zeros((9, 9))
    out[0:3, 0:3] = rot_cov[0:3, 0:3]
    # translation knots are laid out (r, v, a); output is (theta, v, r)
    out[3:6, 3:6] = trans_cov[3:6, 3:6]
    out[3:6, 6:9] = trans_cov[3:6, 0:3]
    out[6:9, 3:6] = trans_cov[0:3, 3:6]
    out[6:9, 6:9] = trans_cov[0:3, 0:3]
    return out


@kernel
def evaluate(knot_times, rot, rate, trans, proc_jac, rot_sens, trans_sens, rot_cov, trans_cov, qc, qr, tau):
    """Returns ``(C, v, r, w, a, jac (5,3,3), cov (9,9))`` at ``tau``."""
    k = locate(knot_times, tau)
    j = -1
    if tau == knot_times[k]:
        j = k
    elif tau == knot_times[k + 1]:
        j = k + 1
    if j >= 0:
        cov = _knot_cov(rot_cov[j], trans_cov[j])
        return (rot[j].copy(), trans[j, 3:6].copy(), trans[j, 0:3].copy(), rate[j].copy(),
                trans[j, 6:9].copy(), proc_jac[j].copy(), cov)

    dt = knot_times[k + 1] - knot_times[k]
    s = tau - knot_times[k]
    lam2, psi2 = scalar_coeffs(s, dt, 2)
    c_t, w_t, phi_t, _, d_rot, d_rate = interp(rot[k], rate[k], rot[k + 1], rate[k + 1], lam2, psi2)
    lam3, psi3 = scalar_coeffs(s, dt, 3)

    p = np.zeros((3, 3))
    for i in range(3):
        for m in range(3):
            p[i] += lam3[i, m] * trans[k, 3 * m:3 * m + 3] + psi3[i, m] * trans[k + 1, 3 * m:3 * m + 3]

    # rotation sensitivities to the knot states, then to the biases
    jac = np.zeros((5, 3, 3))
    ident = np.eye(3)
    a0 = np.ascontiguousarray(d_rot[:, 0:6])
    a1 = np.ascontiguousarray(d_rot[:, 6:12])
    jac[0] = a0 @ rot_sens[k] + a1 @ rot_sens[k + 1]
    # blocks 1, 2 from the velocity row; 3, 4 from the position row
    for state in range(2):
        g = np.zeros((3, 6))
        for m in range(3):
            g += lam3[state, m] * trans_sens[k, 3 * m:3 * m + 3] + psi3[state, m] * trans_sens[k + 1, 3 * m:3 * m + 3]
        jac[3 - 2 * state] = g[:, 0:3]
        jac[4 - 2 * state] = g[:, 3:6]

    cov = np.zeros((9, 9))
    jr = _so3.right_jacobian(phi_t)
    cond2 = scalar_conditional_cov(s, dt, 2)
    cov[0:3, 0:3] = (a0 @ rot_cov[k] @ a0.T.copy() + a1 @ rot_cov[k + 1] @ a1.T.copy()
                     + cond2[0, 0] * (jr @ qc @ jr.T))
    big_l = np.kron(lam3, ident)
    big_p = np.kron(psi3, ident)
    pt = big_l @ trans_cov[k] @ big_l.T + big_p @ trans_cov[k + 1] @ big_p.T
    pt += np.kron(scalar_conditional_cov(s, dt, 3), qr)
    cov[3:6, 3:6] = pt[3:6, 3:6]
    cov[3:6, 6:9] = pt[3:6, 0:3]
    cov[6:9, 3:6] = pt[0:3, 3:6]
    cov[6:9, 6:9] = pt[0:3, 0:3]
    cov = 0.5 * (cov + cov.T)
    return c_t, p[1].copy(), p[0].copy(), w_t, p[2].copy(), jac, cov


def _check_tau(traj, tau):
    tau = float(tau)
    if not traj.t_start <= tau <= traj.t_end:
        raise InvalidInputError(f"query time {tau} outside window [{traj.t_start}, {traj.t_end}]")
    return tau


def _evaluate(traj, tau):
    return evaluate(traj.knot_times, traj.rot, traj.rate, traj.trans, traj.proc_jac, traj.rot_sens,
                    traj.trans_sens, traj.rot_cov, traj.trans_cov, traj.hyper.qc, traj.hyper.qr, tau)


def query(traj, tau):
    """Pseudo-measurements, bias Jacobians and covariance at ``tau``.

    Times equal to a knot time return the stored knot values unchanged.
    """
    tau = _check_tau(traj, tau)
    c, v, r, w, a, jac, cov = _evaluate(traj, tau)
    return QueryResult(tau, c, v, r, w, a, jac, cov, traj.bias_lin)


def query_many(traj, taus):
    return [query(traj, tau) for tau in np.asarray(taus, dtype=float).reshape(-1)]


def query_bias_jacobian(traj, tau):
    """The five 3x3 bias Jacobian blocks at ``tau`` (see :class:`QueryResult`)."""
    return query(traj, tau).jac_bias


def bias_correct(q, delta_gyro, delta_accel):
    """First-order update of ``q`` for a bias change ``(delta_gyro, delta_accel)``.

    ``C <- C exp(dC/dbg dbg)``; velocity and position shift linearly.
    """
    dbg = np.asarray(delta_gyro, dtype=float).reshape(3)
    dba = np.asarray(delta_accel, dtype=float).reshape(3)
    j = q.jac_bias
    return replace(
        q,
        rotation=q.rotation @ exp_so3(j[0] @ dbg),
        velocity=q.velocity + j[1] @ dbg + j[2] @ dba,
        position=q.position + j[3] @ dbg + j[4] @ dba,
        bias_lin=q.bias_lin + BiasState(dbg, dba),
    )
