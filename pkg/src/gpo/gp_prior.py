"""Closed-form blocks of the white-noise-on-acceleration (WNOA) and
white-noise-on-jerk (WNOJ) Gaussian-process priors.

State layouts, each block 3-dimensional:

* WNOA: ``(x, x')``, used for the lifted rotation ``(phi, phi')``.
* WNOJ: ``(x, x', x'')``, used for translation ``(r, v, a)``.

For a power spectral density ``psd`` every matrix is ``M (x) psd`` (or
``M (x) I`` for the transition), with ``M`` the scalar 2x2 / 3x3 integrator
matrix. The interpolation coefficients therefore do not depend on ``psd``; the
kernels at the bottom of this module use that to stay scalar.
"""
import enum
from dataclasses import dataclass

import numpy as np

from ._jit import kernel
from .errors import InvalidInputError, SingularSystemError

__all__ = [
    "Order",
    "transition",
    "process_cov",
    "prior_information",
    "interp_coeffs",
    "conditional_cov",
    "GpHyper",
]

COND_LIMIT = 1e12


class Order(enum.IntEnum):
    WNOA = 2
    WNOJ = 3


def _order(order):
    if isinstance(order, str):
        try:
            return Order[order.upper()]
        except KeyError:
            raise InvalidInputError(f"unknown prior order {order!r}") from None
    return Order(order)


def _check_dt(dt):
    dt = float(dt)
    if not np.isfinite(dt) or dt < 0.0:
        raise InvalidInputError(f"time step must be finite and >= 0, got {dt}")
    return dt


def _check_psd(psd):
    psd = np.asarray(psd, dtype=float)
    if psd.ndim == 0:
        psd = float(psd) * np.eye(3)
    if psd.shape != (3, 3):
        raise InvalidInputError(f"psd must be 3x3, got {psd.shape}")
    if not np.allclose(psd, psd.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(psd).max())):
        raise InvalidInputError("psd must be symmetric")
    if np.min(np.linalg.eigvalsh(psd)) < 0.0:
        raise InvalidInputError("psd must be positive semi-definite")
    return psd


@kernel
def scalar_transition(dt, n):
    m = np.eye(n)
    m[0, 1] = dt
    if n == 3:
        m[1, 2] = dt
        m[0, 2] = 0.5 * dt * dt
    return m


@kernel
def scalar_process_cov(dt, n):
    if n == 2:
        m = np.empty((2, 2))
        m[0, 0] = dt**3 / 3.0
        m[0, 1] = m[1, 0] = dt**2 / 2.0
        m[1, 1] = dt
        return m
    m = np.empty((3, 3))
    m[0, 0] = dt**5 / 20.0
    m[0, 1] = m[1, 0] = dt**4 / 8.0
    m[0, 2] = m[2, 0] = dt**3 / 6.0
    m[1, 1] = dt**3 / 3.0
    m[1, 2] = m[2, 1] = dt**2 / 2.0
    m[2, 2] = dt
    return m


@kernel
def scalar_process_cov_inv(dt, n):
    if n == 2:
        m = np.empty((2, 2))
        m[0, 0] = 12.0 / dt**3
        m[0, 1] = m[1, 0] = -6.0 / dt**2
        m[1, 1] = 4.0 / dt
        return m
    m = np.empty((3, 3))
    m[0, 0] = 720.0 / dt**5
    m[0, 1] = m[1, 0] = -360.0 / dt**4
    m[0, 2] = m[2, 0] = 60.0 / dt**3
    m[1, 1] = 192.0 / dt**3
    m[1, 2] = m[2, 1] = -36.0 / dt**2
    m[2, 2] = 9.0 / dt
    return m


@kernel
def scalar_coeffs(s, dt, n):
    """Scalar (Lambda, Psi) at offset ``s`` into an interval of length ``dt``.

    Endpoints are returned exactly: ``s == 0`` -> (I, 0), ``s == dt`` -> (0, I).
    """
    if s <= 0.0:
        return np.eye(n), np.zeros((n, n))
    if s >= dt:
        return np.zeros((n, n)), np.eye(n)
    q_s = scalar_process_cov(s, n)
    phi_rest = scalar_transition(dt - s, n)
    psi = q_s @ phi_rest.T @ scalar_process_cov_inv(dt, n)
    lam = scalar_transition(s, n) - psi @ scalar_transition(dt, n)
    return lam, psi


@kernel
def scalar_conditional_cov(s, dt, n):
    """Scalar covariance of the state at ``s`` given both interval endpoints."""
    if s <= 0.0 or s >= dt:
        return np.zeros((n, n))
    q_s = scalar_process_cov(s, n)
    phi_rest = scalar_transition(dt - s, n)
    psi = q_s @ phi_rest.T @ scalar_process_cov_inv(dt, n)
    out = q_s - psi @ phi_rest @ q_s
    return 0.5 * (out + out.T)


def transition(dt, order):
    """State transition ``Phi(t + dt, t)``."""
    dt = _check_dt(dt)
    order = _order(order)
    return np.kron(scalar_transition(dt, int(order)), np.eye(3))


def process_cov(dt, psd, order):
    """Accumulated process covariance ``Q(dt)`` driven by white noise of ``psd``."""
    dt = _check_dt(dt)
    order = _order(order)
    return np.kron(scalar_process_cov(dt, int(order)), _check_psd(psd))


def prior_information(dt, psd, order):
    """Inverse of ``Q(dt)``; this weights the prior residual of one knot interval.

    Raises SingularSystemError when ``Q(dt)`` is numerically singular
    (``dt == 0``, a rank-deficient ``psd`` or condition number above 1e12).
    """
    q = process_cov(dt, psd, order)
    _check_condition(q)
    order = _order(order)
    return np.kron(scalar_process_cov_inv(dt, int(order)), np.linalg.inv(_check_psd(psd)))


def _check_condition(q):
    # Jacobi-scaled: the raw condition number of Q grows like dt^-4 (WNOJ)
    # even though the problem is equally well posed at every time scale
    d = np.diag(q)
    if np.any(d <= 0.0):
        raise SingularSystemError("prior covariance has a zero diagonal (dt == 0 or degenerate psd)")
    scaled = q / np.sqrt(np.outer(d, d))
    try:
        np.linalg.cholesky(scaled)
    except np.linalg.LinAlgError:
        raise SingularSystemError("prior covariance is not positive definite") from None
    cond = np.linalg.cond(scaled)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularSystemError(f"prior covariance condition number {cond:.3g} exceeds {COND_LIMIT:g}")


def interp_coeffs(tau, t_k, t_k1, psd, order):
    """Interpolation coefficients ``(Lambda, Psi)`` with
    ``x(tau) = Lambda x(t_k) + Psi x(t_k1)``.

    Evaluated with full matrices; ``Q(t_k1)^-1`` goes through a Cholesky
    factorisation and an ill-conditioned ``Q`` is rejected rather than
    regularised.
    """
    tau, t_k, t_k1 = float(tau), float(t_k), float(t_k1)
    if not t_k1 > t_k:
        raise InvalidInputError("interval end must be after its start")
    if not t_k <= tau <= t_k1:
        raise InvalidInputError(f"tau={tau} outside [{t_k}, {t_k1}]")
    order = _order(order)
    psd = _check_psd(psd)
    n = 3 * int(order)
    dt = t_k1 - t_k
    q_end = process_cov(dt, psd, order)
    _check_condition(q_end)
    if tau == t_k:
        return np.eye(n), np.zeros((n, n))
    if tau == t_k1:
        return np.zeros((n, n)), np.eye(n)
    q_tau = process_cov(tau - t_k, psd, order)
    phi_rest = transition(t_k1 - tau, order)
    chol = np.linalg.cholesky(q_end)
    # Psi = Q(tau) Phi^T Q_end^-1  <=>  Q_end Psi^T = Phi Q(tau)
    rhs = phi_rest @ q_tau
    psi_t = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
    psi = psi_t.T
    lam = transition(tau - t_k, order) - psi @ transition(dt, order)
    return lam, psi


def conditional_cov(tau, t_k, t_k1, psd, order):
    """Covariance of the GP state at ``tau`` conditioned on both endpoints."""
    order = _order(order)
    psd = _check_psd(psd)
    lam, psi = interp_coeffs(tau, t_k, t_k1, psd, order)
    q_tau = process_cov(tau - t_k, psd, order)
    phi_rest = transition(t_k1 - tau, order)
    out = q_tau - psi @ phi_rest @ q_tau
    return 0.5 * (out + out.T)


@dataclass(frozen=True)
class GpHyper:
    """Power spectral densities of the rotation (``qc``) and translation
    (``qr``) priors: symmetric PSD 3x3 with positive diagonal; scalars mean
    isotropic."""

    qc: np.ndarray = 100.0
    qr: np.ndarray = 100.0

    def __post_init__(self):
        for name in ("qc", "qr"):
            m = np.array(_check_psd(getattr(self, name)), copy=True)
            if np.any(np.diag(m) <= 0.0):
                raise InvalidInputError("psd diagonals must be strictly positive")
            m.setflags(write=False)
            object.__setattr__(self, name, m)

    def __eq__(self, other):
        return (isinstance(other, GpHyper) and np.array_equal(self.qc, other.qc)
                and np.array_equal(self.qr, other.qr))

    def __hash__(self):
        return hash((self.qc.tobytes(), self.qr.tobytes()))
