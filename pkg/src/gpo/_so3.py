"""Unchecked SO(3) kernels shared by the solvers.

All functions take and return float64 arrays and never validate input; the
checked public surface lives in :mod:`gpo.lie`.

Right-Jacobian convention: ``exp(phi + d) ~= exp(phi) exp(Jr(phi) d)``.
"""
import math

import numpy as np

from ._jit import kernel

SMALL_ANGLE = 1e-6
# derivative coefficients cancel badly well above SMALL_ANGLE
SERIES_ANGLE = 0.05
NEAR_PI = 1e-3


@kernel
def skew(v):
    m = np.zeros((3, 3))
    m[0, 1] = -v[2]
    m[0, 2] = v[1]
    m[1, 0] = v[2]
    m[1, 2] = -v[0]
    m[2, 0] = -v[1]
    m[2, 1] = v[0]
    return m


@kernel
def vee(m):
    out = np.empty(3)
    out[0] = m[2, 1]
    out[1] = m[0, 2]
    out[2] = m[1, 0]
    return out


@kernel
def norm3(v):
    return math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])


@kernel
def exp(phi):
    theta = norm3(phi)
    k = skew(phi)
    if theta < SMALL_ANGLE:
        return np.eye(3) + k + 0.5 * (k @ k)
    a = math.sin(theta) / theta
    # 1 - cos written as 2 sin^2(theta/2) to avoid cancellation
    h = math.sin(0.5 * theta) / theta
    return np.eye(3) + a * k + 2.0 * h * h * (k @ k)


@kernel
def log(c):
    w = 0.5 * vee(c - c.T)
    s = norm3(w)
    cos_t = 0.5 * (c[0, 0] + c[1, 1] + c[2, 2] - 1.0)
    theta = math.atan2(s, cos_t)
    if theta < SMALL_ANGLE:
        return w * (1.0 + theta * theta / 6.0)
    if math.pi - theta > NEAR_PI:
        return w * (theta / s)
    # near pi: axis from the symmetric part, largest diagonal element first
    sym = 0.5 * (c + c.T) - cos_t * np.eye(3)
    sym = sym / (1.0 - cos_t)
    i = 0
    if sym[1, 1] > sym[i, i]:
        i = 1
    if sym[2, 2] > sym[i, i]:
        i = 2
    axis = sym[:, i] / math.sqrt(max(sym[i, i], 1e-300))
    axis = axis / norm3(axis)
    proj = axis[0] * w[0] + axis[1] * w[1] + axis[2] * w[2]
    if proj < 0.0:
        axis = -axis
    return theta * axis


@kernel
def _jr_coeffs(theta):
    # Jr = I - alpha K + beta K^2, K = skew(phi)
    t2 = theta * theta
    if theta < SERIES_ANGLE:
        t4 = t2 * t2
        alpha = 0.5 - t2 / 24.0 + t4 / 720.0 - t4 * t2 / 40320.0
        beta = 1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0 - t4 * t2 / 362880.0
        return alpha, beta
    h = math.sin(0.5 * theta) / theta
    alpha = 2.0 * h * h
    beta = (theta - math.sin(theta)) / (t2 * theta)
    return alpha, beta


@kernel
def _jrinv_coeff(theta):
    # Jr^-1 = I + K/2 + gamma K^2
    t2 = theta * theta
    if theta < SERIES_ANGLE:
        t4 = t2 * t2
        return 1.0 / 12.0 + t2 / 720.0 + t4 / 30240.0 + t4 * t2 / 1209600.0
    half = 0.5 * theta
    return 1.0 / t2 - math.cos(half) / (math.sin(half) * 2.0 * theta)


@kernel
def right_jacobian(phi):
    theta = norm3(phi)
    alpha, beta = _jr_coeffs(theta)
    k = skew(phi)
    return np.eye(3) - alpha * k + beta * (k @ k)


@kernel
def right_jacobian_inv(phi):
    theta = norm3(phi)
    gamma = _jrinv_coeff(theta)
    k = skew(phi)
    return np.eye(3) + 0.5 * k + gamma * (k @ k)


@kernel
def left_jacobian_inv(phi):
    return right_jacobian_inv(-phi)


@kernel
def _jr_coeff_derivs(theta):
    # (d alpha/d theta) / theta, (d beta/d theta) / theta
    t2 = theta * theta
    if theta < SERIES_ANGLE:
        t4 = t2 * t2
        da = -1.0 / 12.0 + t2 / 180.0 - t4 / 6720.0 + t4 * t2 / 453600.0
        db = -1.0 / 60.0 + t2 / 1260.0 - t4 / 60480.0 + t4 * t2 / 4989600.0
        return da, db
    s = math.sin(theta)
    c = math.cos(theta)
    da = (theta * s + 2.0 * c - 2.0) / (t2 * t2)
    db = (-theta * c - 2.0 * theta + 3.0 * s) / (t2 * t2 * theta)
    return da, db


@kernel
def _jrinv_coeff_deriv(theta):
    # (d gamma/d theta) / theta
    t2 = theta * theta
    if theta < SERIES_ANGLE:
        t4 = t2 * t2
        return 1.0 / 360.0 + t2 / 7560.0 + t4 / 201600.0 + t4 * t2 / 5987520.0
    half = 0.5 * theta
    sh = math.sin(half)
    cot = math.cos(half) / sh
    dg = -2.0 / (t2 * theta) + cot / (2.0 * t2) + 1.0 / (4.0 * theta * sh * sh)
    return dg / theta


@kernel
def _dk2w(phi, w):
    # d/dphi of phi x (phi x w) = phi (phi.w) - w |phi|^2
    pw = phi[0] * w[0] + phi[1] * w[1] + phi[2] * w[2]
    return np.outer(phi, w) + pw * np.eye(3) - 2.0 * np.outer(w, phi)


@kernel
def d_right_jacobian(phi, w):
    """d(Jr(phi) w)/dphi."""
    theta = norm3(phi)
    alpha, beta = _jr_coeffs(theta)
    da, db = _jr_coeff_derivs(theta)
    k = skew(phi)
    kw = k @ w
    kkw = k @ kw
    out = -np.outer(kw, phi) * da + alpha * skew(w)
    out += beta * _dk2w(phi, w) + np.outer(kkw, phi) * db
    return out


@kernel
def d_right_jacobian_inv(phi, w):
    """d(Jr^-1(phi) w)/dphi."""
    theta = norm3(phi)
    gamma = _jrinv_coeff(theta)
    dg = _jrinv_coeff_deriv(theta)
    k = skew(phi)
    kkw = k @ (k @ w)
    out = -0.5 * skew(w) + gamma * _dk2w(phi, w) + np.outer(kkw, phi) * dg
    return out


@kernel
def angle_between(a, b):
    """Geodesic angle of a^T b in radians."""
    return norm3(log(a.T @ b))
