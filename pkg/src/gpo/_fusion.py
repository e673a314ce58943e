"""Residual kernels of the sliding-window estimator.

Anchor perturbations are ordered ``(dtheta, dr, dv)`` with a right
perturbation on the rotation; bias perturbations ``(dbg, dba)``.
Bias-corrected increments use ``dC' = dC exp(J_Cg dbg)``.
"""
import numpy as np

from . import _so3
from ._jit import kernel


@kernel
def pinhole(p, intr):
    """Pixel of camera-frame point ``p`` and its 2x3 Jacobian."""
    fx, fy, cx, cy = intr[0], intr[1], intr[2], intr[3]
    iz = 1.0 / p[2]
    pix = np.empty(2)
    pix[0] = fx * p[0] * iz + cx
    pix[1] = fy * p[1] * iz + cy
    d = np.zeros((2, 3))
    d[0, 0] = fx * iz
    d[0, 2] = -fx * p[0] * iz * iz
    d[1, 1] = fy * iz
    d[1, 2] = -fy * p[1] * iz * iz
    return pix, d


@kernel
def project_one(c, r, v, dt, dc, dr, jac, dbg, dba, landmark, intr, gravity):
    """Predicted pixel at an interior time, its depth and the Jacobians of the
    pixel w.r.t. the anchor (2x9) and the bias (2x6)."""
    phi = jac[0] @ dbg
    dc_c = dc @ _so3.exp(phi)
    dr_c = dr + jac[3] @ dbg + jac[4] @ dba
    r_t = r + v * dt + 0.5 * dt * dt * gravity + c @ dr_c
    w = c.T @ (landmark - r_t)
    p = dc_c.T @ w
    pix, d_pix = pinhole(p, intr)
    c_t_t = dc_c.T @ c.T
    dp = np.zeros((3, 9))
    dp[:, 0:3] = dc_c.T @ _so3.skew(w + dr_c)
    dp[:, 3:6] = -c_t_t
    dp[:, 6:9] = -dt * c_t_t
    db = np.zeros((3, 6))
    db[:, 0:3] = _so3.skew(p) @ _so3.right_jacobian(phi) @ jac[0] - dc_c.T @ jac[3]
    db[:, 3:6] = -dc_c.T @ jac[4]
    return pix, p[2], d_pix @ dp, d_pix @ db


@kernel
def project_batch(anchor_idx, anchor_c, anchor_r, anchor_v, dt, dc, dr, jac, bias_lin, bias,
                  landmarks, intr, gravity):
    """Vectorised :func:`project_one`; returns ``(pix, depth, j_anchor, j_bias)``."""
    n = anchor_idx.shape[0]
    pix = np.empty((n, 2))
    depth = np.empty(n)
    j_anchor = np.empty((n, 2, 9))
    j_bias = np.empty((n, 2, 6))
    for i in range(n):
        a = anchor_idx[i]
        dbg = bias[0:3] - bias_lin[i, 0:3]
        dba = bias[3:6] - bias_lin[i, 3:6]
        pix_i, z, ja, jb = project_one(anchor_c[a], anchor_r[a], anchor_v[a], dt[i], dc[i], dr[i], jac[i],
                                       dbg, dba, landmarks[i], intr, gravity)
        pix[i] = pix_i
        depth[i] = z
        j_anchor[i] = ja
        j_bias[i] = jb
    return pix, depth, j_anchor, j_bias


@kernel
def preint_factor(ci, ri, vi, cj, rj, vj, dt, dc, dv, dr, jac, dbg, dba, gravity):
    """Pseudo-measurement residual ``(e_theta, e_v, e_r)`` between two anchors
    with Jacobians w.r.t. anchor i (9x9), anchor j (9x9) and the bias (9x6)."""
    phi = jac[0] @ dbg
    dc_c = dc @ _so3.exp(phi)
    dv_c = dv + jac[1] @ dbg + jac[2] @ dba
    dr_c = dr + jac[3] @ dbg + jac[4] @ dba
    rel = dc_c.T @ ci.T @ cj
    e_c = _so3.log(rel)
    jri = _so3.right_jacobian_inv(e_c)
    dv_w = vj - vi - gravity * dt
    dr_w = rj - ri - vi * dt - 0.5 * dt * dt * gravity
    e = np.empty(9)
    e[0:3] = e_c
    e[3:6] = ci.T @ dv_w - dv_c
    e[6:9] = ci.T @ dr_w - dr_c
    j_i = np.zeros((9, 9))
    j_j = np.zeros((9, 9))
    j_b = np.zeros((9, 6))
    j_i[0:3, 0:3] = -jri @ cj.T @ ci
    j_j[0:3, 0:3] = jri
    j_b[0:3, 0:3] = -jri @ rel.T @ _so3.right_jacobian(phi) @ jac[0]
    j_i[3:6, 0:3] = _so3.skew(ci.T @ dv_w)
    j_i[3:6, 6:9] = -ci.T
    j_j[3:6, 6:9] = ci.T
    j_b[3:6, 0:3] = -jac[1]
    j_b[3:6, 3:6] = -jac[2]
    j_i[6:9, 0:3] = _so3.skew(ci.T @ dr_w)
    j_i[6:9, 3:6] = -ci.T
    j_i[6:9, 6:9] = -dt * ci.T
    j_j[6:9, 3:6] = ci.T
    j_b[6:9, 0:3] = -jac[3]
    j_b[6:9, 3:6] = -jac[4]
    return e, j_i, j_j, j_b
