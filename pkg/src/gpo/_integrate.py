"""Sample-driven discrete integrators and the RK4 oracle kernel.

Output ordering for the per-record Jacobian stack ``jac`` (shape ``(M, 5, 3, 3)``):
``dC/dbg, dv/dbg, dv/dba, dr/dbg, dr/dba``. Rotation Jacobians act as right
perturbations: ``C(b + db) ~= C(b) exp(dC/dbg db_g)``.
"""
import math

import numpy as np

from . import _so3
from ._jit import kernel

ZOH = 0
MIDPOINT = 1

JAC_C_G, JAC_V_G, JAC_V_A, JAC_R_G, JAC_R_A = 0, 1, 2, 3, 4


@kernel
def _hold(ts, vals, t):
    # most recent sample at or before t; first sample before the stream starts
    i = np.searchsorted(ts, t, side="right") - 1
    if i < 0:
        i = 0
    return vals[i]


@kernel
def _lerp(ts, vals, t):
    n = ts.shape[0]
    if n == 1 or t <= ts[0]:
        return vals[0].copy()
    if t >= ts[n - 1]:
        return vals[n - 1].copy()
    i = np.searchsorted(ts, t, side="right") - 1
    w = (t - ts[i]) / (ts[i + 1] - ts[i])
    return (1.0 - w) * vals[i] + w * vals[i + 1]


@kernel
def integrate(grid, record_idx, gyro_t, gyro_v, accel_t, accel_v, bg, ba,
              scheme, q_gyro, q_accel, gyro_dt, accel_dt):
    """Integrate bias-corrected samples over ``grid`` and record at ``record_idx``.

    ``scheme`` is ZOH (forward step with held samples) or MIDPOINT (samples
    linearly interpolated at the step midpoint, half-step rotation for the
    velocity/position increments). Covariance uses per-sample noise
    covariances ``q_*`` sampled every ``*_dt`` seconds.
    """
    m = record_idx.shape[0]
    rec_c = np.empty((m, 3, 3))
    rec_v = np.empty((m, 3))
    rec_r = np.empty((m, 3))
    rec_jac = np.empty((m, 5, 3, 3))
    rec_cov = np.empty((m, 9, 9))

    dc = np.eye(3)
    dv = np.zeros(3)
    dr = np.zeros(3)
    jc = np.zeros((3, 3))
    jvg = np.zeros((3, 3))
    jva = np.zeros((3, 3))
    jrg = np.zeros((3, 3))
    jra = np.zeros((3, 3))
    cov = np.zeros((9, 9))
    eye = np.eye(3)

    r_ptr = 0
    for step in range(grid.shape[0]):
        while r_ptr < m and record_idx[r_ptr] == step:
            rec_c[r_ptr] = dc
            rec_v[r_ptr] = dv
            rec_r[r_ptr] = dr
            rec_jac[r_ptr, 0] = jc
            rec_jac[r_ptr, 1] = jvg
            rec_jac[r_ptr, 2] = jva
            rec_jac[r_ptr, 3] = jrg
            rec_jac[r_ptr, 4] = jra
            rec_cov[r_ptr] = cov
            r_ptr += 1
        if step == grid.shape[0] - 1:
            break
        ta = grid[step]
        dt = grid[step + 1] - ta
        if scheme == ZOH:
            w = _hold(gyro_t, gyro_v, ta) - bg
            a = _hold(accel_t, accel_v, ta) - ba
        else:
            tm = ta + 0.5 * dt
            w = _lerp(gyro_t, gyro_v, tm) - bg
            a = _lerp(accel_t, accel_v, tm) - ba
        step_rot = _so3.exp(w * dt)
        jr_step = _so3.right_jacobian(w * dt)
        if scheme == ZOH:
            r_mid = dc
            j_mid = jc
        else:
            half = _so3.exp(0.5 * w * dt)
            r_mid = dc @ half
            j_mid = half.T @ jc - _so3.right_jacobian(0.5 * w * dt) * (0.5 * dt)
        ra = r_mid @ a
        ra_skew = r_mid @ _so3.skew(a)

        # covariance of (theta, v, r); ZOH linearisation for both schemes
        amat = np.zeros((9, 9))
        amat[0:3, 0:3] = step_rot.T
        amat[3:6, 0:3] = -dc @ _so3.skew(a) * dt
        amat[3:6, 3:6] = eye
        amat[6:9, 0:3] = -0.5 * dc @ _so3.skew(a) * dt * dt
        amat[6:9, 3:6] = eye * dt
        amat[6:9, 6:9] = eye
        bg_mat = np.zeros((9, 3))
        bg_mat[0:3] = jr_step * dt
        ba_mat = np.zeros((9, 3))
        ba_mat[3:6] = dc * dt
        ba_mat[6:9] = 0.5 * dc * dt * dt
        cov = amat @ cov @ amat.T
        cov += (gyro_dt / dt) * (bg_mat @ q_gyro @ bg_mat.T)
        cov += (accel_dt / dt) * (ba_mat @ q_accel @ ba_mat.T)

        dr = dr + dv * dt + 0.5 * ra * dt * dt
        jrg = jrg + jvg * dt - 0.5 * ra_skew @ j_mid * dt * dt
        jra = jra + jva * dt - 0.5 * r_mid * dt * dt
        dv = dv + ra * dt
        jvg = jvg - ra_skew @ j_mid * dt
        jva = jva - r_mid * dt
        jc = step_rot.T @ jc - jr_step * dt
        dc = dc @ step_rot
    return rec_c, rec_v, rec_r, rec_jac, rec_cov


@kernel
def signal(params, t):
    """Evaluate a sinusoidal pattern; ``params[channel, (amp, freq, phase, offset), axis]``."""
    out = np.empty((2, 3))
    for ch in range(2):
        for ax in range(3):
            out[ch, ax] = params[ch, 3, ax] + params[ch, 0, ax] * math.sin(
                2.0 * math.pi * params[ch, 1, ax] * t + params[ch, 2, ax])
    return out


@kernel
def _deriv(params, t, c, v):
    sig = signal(params, t)
    dc = c @ _so3.skew(sig[0])
    dv = c @ sig[1]
    return dc, dv, v


@kernel
def _rk4_step(params, t, h, c, v, r):
    k1c, k1v, k1r = _deriv(params, t, c, v)
    k2c, k2v, k2r = _deriv(params, t + 0.5 * h, c + 0.5 * h * k1c, v + 0.5 * h * k1v)
    k3c, k3v, k3r = _deriv(params, t + 0.5 * h, c + 0.5 * h * k2c, v + 0.5 * h * k2v)
    k4c, k4v, k4r = _deriv(params, t + h, c + h * k3c, v + h * k3v)
    c2 = c + (h / 6.0) * (k1c + 2.0 * k2c + 2.0 * k3c + k4c)
    v2 = v + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    r2 = r + (h / 6.0) * (k1r + 2.0 * k2r + 2.0 * k3r + k4r)
    return c2, v2, r2


@kernel
def rk4(params, t0, times, h):
    """Classical RK4 on ``C' = C w^, v' = C a, r' = v`` from identity at ``t0``.

    ``times`` must be sorted and ``>= t0``; steps are shortened to land on
    each requested time exactly.
    """
    m = times.shape[0]
    out_c = np.empty((m, 3, 3))
    out_v = np.empty((m, 3))
    out_r = np.empty((m, 3))
    c = np.eye(3)
    v = np.zeros(3)
    r = np.zeros(3)
    t = t0
    for i in range(m):
        target = times[i]
        n_steps = int(math.ceil((target - t) / h - 1e-9))
        if n_steps > 0:
            hs = (target - t) / n_steps
            for _ in range(n_steps):
                c, v, r = _rk4_step(params, t, hs, c, v, r)
                t += hs
        t = target
        out_c[i] = c
        out_v[i] = v
        out_r[i] = r
    return out_c, out_v, out_r
