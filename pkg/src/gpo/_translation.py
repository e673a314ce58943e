"""Translation-step kernel: linear WNOJ least squares over ``(r, v, a)`` knots."""
import numpy as np

from ._jit import kernel
from .gp_prior import scalar_transition


@kernel
def assemble(knot_times, accel_frame, idx, frac, w_meas, w_prior):
    """Normal equations for the translation knots.

    ``accel_frame[j]`` is ``C(t_j) (a_j - b_a)``; the knot acceleration is
    linearly interpolated at each sample. ``r_0`` and ``v_0`` are eliminated.
    Returns ``(diag, upper, rhs)`` with ``H x = rhs``.
    """
    nk = knot_times.shape[0] - 1
    diag = np.zeros((nk + 1, 9, 9))
    upper = np.zeros((nk, 9, 9))
    rhs = np.zeros((nk + 1, 9))
    for k in range(nk):
        dt = knot_times[k + 1] - knot_times[k]
        phi = np.kron(scalar_transition(dt, 3), np.eye(3))
        w = w_prior[k]
        # residual Phi p_k - p_k+1
        diag[k] += phi.T @ w @ phi
        upper[k] -= phi.T @ w
        diag[k + 1] += w
    for j in range(accel_frame.shape[0]):
        k = idx[j]
        s = frac[j]
        diag[k, 6:9, 6:9] += (1.0 - s) * (1.0 - s) * w_meas
        upper[k, 6:9, 6:9] += (1.0 - s) * s * w_meas
        diag[k + 1, 6:9, 6:9] += s * s * w_meas
    for i in range(6):
        for j in range(9):
            diag[0, i, j] = 0.0
            diag[0, j, i] = 0.0
            upper[0, i, j] = 0.0
        diag[0, i, i] = 1.0
    return diag, upper, rhs_only(nk + 1, accel_frame, idx, frac, w_meas)


@kernel
def rhs_only(n_knots, accel_frame, idx, frac, w_meas):
    """Right-hand side of the translation normal equations; linear in ``accel_frame``."""
    rhs = np.zeros((n_knots, 9))
    for j in range(accel_frame.shape[0]):
        k = idx[j]
        s = frac[j]
        wc = w_meas @ accel_frame[j]
        rhs[k, 6:9] += (1.0 - s) * wc
        rhs[k + 1, 6:9] += s * wc
    return rhs


@kernel
def cost(knots, knot_times, accel_frame, idx, frac, w_meas, w_prior):
    nk = knot_times.shape[0] - 1
    total = 0.0
    for k in range(nk):
        dt = knot_times[k + 1] - knot_times[k]
        phi = np.kron(scalar_transition(dt, 3), np.eye(3))
        e = phi @ knots[k] - knots[k + 1]
        total += e @ (w_prior[k] @ e)
    for j in range(accel_frame.shape[0]):
        k = idx[j]
        s = frac[j]
        e3 = accel_frame[j] - ((1.0 - s) * knots[k, 6:9] + s * knots[k + 1, 6:9])
        total += e3 @ (w_meas @ e3)
    return total
