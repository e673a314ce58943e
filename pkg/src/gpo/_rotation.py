"""Rotation-step kernels: lifted WNOA interpolation and normal equations.

Within knot interval k the rotation is ``C(t) = C_k exp(phi(t))`` and the
local state ``(phi, phi')`` is interpolated between ``(0, w_k)`` and
``(log(C_k^T C_k+1), Jr^-1(.) w_k+1)``. Body rate is ``Jr(phi) phi'``.

Sensitivities are returned with respect to the 12 interval variables
``[dtheta_k, dw_k, dtheta_k+1, dw_k+1]`` (right perturbations on rotations).
"""
import numpy as np

from . import _so3
from ._jit import kernel
from .gp_prior import scalar_coeffs


@kernel
def interval_index(times, knot_times):
    """Interval of each sample: t_k <= t < t_k+1, last knot goes to the last interval."""
    nk = knot_times.shape[0] - 1
    idx = np.searchsorted(knot_times, times, side="right") - 1
    for i in range(idx.shape[0]):
        if idx[i] < 0:
            idx[i] = 0
        elif idx[i] > nk - 1:
            idx[i] = nk - 1
    return idx


@kernel
def sample_coeffs(times, knot_times, n):
    idx = interval_index(times, knot_times)
    m = times.shape[0]
    lam = np.empty((m, n, n))
    psi = np.empty((m, n, n))
    frac = np.empty(m)
    for i in range(m):
        k = idx[i]
        dt = knot_times[k + 1] - knot_times[k]
        s = times[i] - knot_times[k]
        lam_i, psi_i = scalar_coeffs(s, dt, n)
        lam[i] = lam_i
        psi[i] = psi_i
        frac[i] = min(max(s / dt, 0.0), 1.0)
    return idx, lam, psi, frac


@kernel
def interp(ck, wk, ck1, wk1, lam, psi):
    """Interpolated rotation, body rate and their 3x12 sensitivities.

    Returns ``(C, w, phi_t, dphi_t, d_rot, d_rate)`` where ``d_rot`` maps the
    interval variables to a right perturbation of ``C``.
    """
    phi = _so3.log(ck.T @ ck1)
    jri = _so3.right_jacobian_inv(phi)
    u = jri @ wk1
    phi_t = lam[0, 1] * wk + psi[0, 0] * phi + psi[0, 1] * u
    dphi_t = lam[1, 1] * wk + psi[1, 0] * phi + psi[1, 1] * u
    e_t = _so3.exp(phi_t)
    c_t = ck @ e_t
    jr_t = _so3.right_jacobian(phi_t)
    w_t = jr_t @ dphi_t

    dphi = np.zeros((3, 12))
    dphi[:, 0:3] = -_so3.left_jacobian_inv(phi)
    dphi[:, 6:9] = jri
    du = _so3.d_right_jacobian_inv(phi, wk1) @ dphi
    du[:, 9:12] += jri
    dp = psi[0, 0] * dphi + psi[0, 1] * du
    dv = psi[1, 0] * dphi + psi[1, 1] * du
    for i in range(3):
        dp[i, 3 + i] += lam[0, 1]
        dv[i, 3 + i] += lam[1, 1]
    d_rot = jr_t @ dp
    d_rot[:, 0:3] += e_t.T
    d_rate = _so3.d_right_jacobian(phi_t, dphi_t) @ dp + jr_t @ dv
    return c_t, w_t, phi_t, dphi_t, d_rot, d_rate


@kernel
def prior_residual(ck, wk, ck1, wk1, dt):
    """WNOA prior error ``Phi gamma_k - gamma_k+1`` and its 6x12 Jacobian."""
    phi = _so3.log(ck.T @ ck1)
    jri = _so3.right_jacobian_inv(phi)
    u = jri @ wk1
    e = np.empty(6)
    e[0:3] = dt * wk - phi
    e[3:6] = wk - u
    dphi = np.zeros((3, 12))
    dphi[:, 0:3] = -_so3.left_jacobian_inv(phi)
    dphi[:, 6:9] = jri
    du = _so3.d_right_jacobian_inv(phi, wk1) @ dphi
    du[:, 9:12] += jri
    jac = np.zeros((6, 12))
    jac[0:3] = -dphi
    jac[3:6] = -du
    for i in range(3):
        jac[i, 3 + i] += dt
        jac[3 + i, 3 + i] += 1.0
    return e, jac


@kernel
def cost(knot_c, knot_w, knot_times, rates, idx, lam, psi, w_meas, w_prior):
    total = 0.0
    nk = knot_times.shape[0] - 1
    for k in range(nk):
        e, _ = prior_residual(knot_c[k], knot_w[k], knot_c[k + 1], knot_w[k + 1],
                              knot_times[k + 1] - knot_times[k])
        total += e @ (w_prior[k] @ e)
    for i in range(rates.shape[0]):
        k = idx[i]
        _, w_t, _, _, _, _ = interp(knot_c[k], knot_w[k], knot_c[k + 1], knot_w[k + 1], lam[i], psi[i])
        e3 = rates[i] - w_t
        total += e3 @ (w_meas @ e3)
    return total


@kernel
def assemble(knot_c, knot_w, knot_times, rates, idx, lam, psi, w_meas, w_prior):
    """Gauss-Newton normal equations ``H dx = -g`` in block-tridiagonal form.

    ``rates`` are bias-corrected gyro samples. The rotation of knot 0 is pinned
    by replacing its rows/columns with identity.
    """
    nk = knot_times.shape[0] - 1
    diag = np.zeros((nk + 1, 6, 6))
    upper = np.zeros((nk, 6, 6))
    grad = np.zeros((nk + 1, 6))
    total = 0.0
    for k in range(nk):
        e, jac = prior_residual(knot_c[k], knot_w[k], knot_c[k + 1], knot_w[k + 1],
                                knot_times[k + 1] - knot_times[k])
        wj = w_prior[k] @ jac
        h = jac.T @ wj
        g = wj.T @ e
        total += e @ (w_prior[k] @ e)
        diag[k] += h[0:6, 0:6]
        upper[k] += h[0:6, 6:12]
        diag[k + 1] += h[6:12, 6:12]
        grad[k] += g[0:6]
        grad[k + 1] += g[6:12]
    for i in range(rates.shape[0]):
        k = idx[i]
        _, w_t, _, _, _, d_rate = interp(knot_c[k], knot_w[k], knot_c[k + 1], knot_w[k + 1], lam[i], psi[i])
        e3 = rates[i] - w_t
        jac = -d_rate
        wj = w_meas @ jac
        h = jac.T @ wj
        g = wj.T @ e3
        total += e3 @ (w_meas @ e3)
        diag[k] += h[0:6, 0:6]
        upper[k] += h[0:6, 6:12]
        diag[k + 1] += h[6:12, 6:12]
        grad[k] += g[0:6]
        grad[k + 1] += g[6:12]
    pin_rotation(diag, upper, grad)
    return diag, upper, grad, total


@kernel
def pin_rotation(diag, upper, grad):
    for i in range(3):
        for j in range(6):
            diag[0, i, j] = 0.0
            diag[0, j, i] = 0.0
            upper[0, i, j] = 0.0
        diag[0, i, i] = 1.0
        grad[0, i] = 0.0


@kernel
def retract(knot_c, knot_w, step, alpha):
    nb = knot_c.shape[0]
    new_c = np.empty_like(knot_c)
    new_w = np.empty_like(knot_w)
    for k in range(nb):
        new_c[k] = knot_c[k] @ _so3.exp(alpha * step[k, 0:3])
        new_w[k] = knot_w[k] + alpha * step[k, 3:6]
    return new_c, new_w


@kernel
def interp_many(knot_c, knot_w, idx, lam, psi):
    """Rotations and rates at many samples (no sensitivities needed by caller)."""
    m = idx.shape[0]
    out_c = np.empty((m, 3, 3))
    out_w = np.empty((m, 3))
    for i in range(m):
        k = idx[i]
        c_t, w_t, _, _, _, _ = interp(knot_c[k], knot_w[k], knot_c[k + 1], knot_w[k + 1], lam[i], psi[i])
        out_c[i] = c_t
        out_w[i] = w_t
    return out_c, out_w


@kernel
def bias_rhs(knot_c, knot_w, idx, lam, psi, w_meas, n_knots):
    """``sum_j d_rate_j^T W`` per knot block, ``(K+1, 6, 3)``.

    With the optimum's normal equations ``H dx/dbg = -bias_rhs``; the pinned
    rotation rows of knot 0 are zero.
    """
    out = np.zeros((n_knots, 6, 3))
    for i in range(idx.shape[0]):
        k = idx[i]
        _, _, _, _, _, d_rate = interp(knot_c[k], knot_w[k], knot_c[k + 1], knot_w[k + 1], lam[i], psi[i])
        g = d_rate.T @ w_meas
        out[k] += g[0:6]
        out[k + 1] += g[6:12]
    out[0, 0:3, :] = 0.0
    return out


@kernel
def rotation_sensitivity(knot_c, knot_w, idx, lam, psi, sens):
    """Rotations at samples and their gyro-bias sensitivities ``(M, 3, 3)``,
    given knot sensitivities ``sens`` of shape ``(K+1, 6, 3)``."""
    m = idx.shape[0]
    out_c = np.empty((m, 3, 3))
    out_j = np.empty((m, 3, 3))
    for i in range(m):
        k = idx[i]
        c_t, _, _, _, d_rot, _ = interp(knot_c[k], knot_w[k], knot_c[k + 1], knot_w[k + 1], lam[i], psi[i])
        out_c[i] = c_t
        out_j[i] = (np.ascontiguousarray(d_rot[:, 0:6]) @ sens[k]
                    + np.ascontiguousarray(d_rot[:, 6:12]) @ sens[k + 1])
    return out_c, out_j
