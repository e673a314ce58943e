"""Block-tridiagonal Cholesky factorisation, solve and selected inversion.

A symmetric block-tridiagonal matrix is stored as ``diag`` with shape
``(N, n, n)`` and ``upper`` with shape ``(N-1, n, n)``, where ``upper[k]`` is
the block at position ``(k, k+1)``. Factorisation, solve and recovery of the
diagonal blocks of the inverse all cost O(N n^3).
"""
import math

import numpy as np

from ._jit import kernel
from .errors import SingularSystemError

__all__ = ["factor", "solve", "diag_of_inverse", "solve_system", "to_dense"]


@kernel
def _chol(a):
    n = a.shape[0]
    lo = np.zeros((n, n))
    scale = 0.0
    for i in range(n):
        scale = max(scale, abs(a[i, i]))
    tiny = 1e-14 * max(scale, 1e-300)
    for j in range(n):
        s = a[j, j]
        for k in range(j):
            s -= lo[j, k] * lo[j, k]
        if not s > tiny:
            return lo, False
        d = math.sqrt(s)
        lo[j, j] = d
        for i in range(j + 1, n):
            t = a[i, j]
            for k in range(j):
                t -= lo[i, k] * lo[j, k]
            lo[i, j] = t / d
    return lo, True


@kernel
def _lower_solve(lo, b):
    # lo x = b, b is (n, m)
    n = lo.shape[0]
    x = b.copy()
    for col in range(x.shape[1]):
        for i in range(n):
            s = x[i, col]
            for k in range(i):
                s -= lo[i, k] * x[k, col]
            x[i, col] = s / lo[i, i]
    return x


@kernel
def _upper_solve(lo, b):
    # lo^T x = b
    n = lo.shape[0]
    x = b.copy()
    for col in range(x.shape[1]):
        for i in range(n - 1, -1, -1):
            s = x[i, col]
            for k in range(i + 1, n):
                s -= lo[k, i] * x[k, col]
            x[i, col] = s / lo[i, i]
    return x


@kernel
def factor(diag, upper):
    """Return ``(L_diag, L_sub, ok_index)``; ``ok_index == -1`` on success,
    otherwise the block row where a pivot failed."""
    nb = diag.shape[0]
    n = diag.shape[1]
    l_diag = np.zeros((nb, n, n))
    l_sub = np.zeros((max(nb - 1, 0), n, n))
    lo, ok = _chol(diag[0])
    if not ok:
        return l_diag, l_sub, 0
    l_diag[0] = lo
    for k in range(nb - 1):
        # M_k L_k^T = upper_k^T
        m_t = _lower_solve(l_diag[k], upper[k].copy())
        m = m_t.T.copy()
        l_sub[k] = m
        lo, ok = _chol(diag[k + 1] - m @ m.T)
        if not ok:
            return l_diag, l_sub, k + 1
        l_diag[k + 1] = lo
    return l_diag, l_sub, -1


@kernel
def solve(l_diag, l_sub, rhs):
    """Solve ``H x = rhs`` given the block factor; ``rhs`` has shape (N, n)."""
    nb = l_diag.shape[0]
    n = l_diag.shape[1]
    y = np.zeros((nb, n))
    y[0] = _lower_solve(l_diag[0], rhs[0].reshape(n, 1).copy())[:, 0]
    for k in range(1, nb):
        b = rhs[k] - l_sub[k - 1] @ y[k - 1]
        y[k] = _lower_solve(l_diag[k], b.reshape(n, 1).copy())[:, 0]
    x = np.zeros((nb, n))
    x[nb - 1] = _upper_solve(l_diag[nb - 1], y[nb - 1].reshape(n, 1).copy())[:, 0]
    for k in range(nb - 2, -1, -1):
        b = y[k] - l_sub[k].T @ x[k + 1]
        x[k] = _upper_solve(l_diag[k], b.reshape(n, 1).copy())[:, 0]
    return x


@kernel
def diag_of_inverse(l_diag, l_sub):
    """Diagonal blocks of ``H^-1`` by backward selected inversion."""
    nb = l_diag.shape[0]
    n = l_diag.shape[1]
    eye = np.eye(n)
    out = np.zeros((nb, n, n))
    linv = _lower_solve(l_diag[nb - 1], eye)
    out[nb - 1] = linv.T @ linv
    for k in range(nb - 2, -1, -1):
        linv = _lower_solve(l_diag[k], eye)
        # Sigma_{k+1,k} = -Sigma_{k+1,k+1} M_k L_k^-1
        s_off = -(out[k + 1] @ l_sub[k]) @ linv
        s_kk = linv.T @ (linv - l_sub[k].T @ s_off)
        out[k] = 0.5 * (s_kk + s_kk.T)
    return out


def solve_system(diag, upper, rhs, want_cov=False):
    """Factor and solve; raises SingularSystemError on a failed pivot.

    ``rhs`` is ``(N, n)`` or ``(N, n, m)`` for several right-hand sides.
    """
    diag = np.ascontiguousarray(diag, dtype=float)
    upper = np.ascontiguousarray(upper, dtype=float)
    rhs = np.ascontiguousarray(rhs, dtype=float)
    l_diag, l_sub, bad = factor(diag, upper)
    if bad >= 0:
        raise SingularSystemError(f"normal equations not positive definite at block {bad}")
    if rhs.ndim == 3:
        x = np.stack([solve(l_diag, l_sub, np.ascontiguousarray(rhs[:, :, c]))
                      for c in range(rhs.shape[2])], axis=-1)
    else:
        x = solve(l_diag, l_sub, rhs)
    if want_cov:
        return x, diag_of_inverse(l_diag, l_sub)
    return x


def to_dense(diag, upper):
    nb, n, _ = diag.shape
    h = np.zeros((nb * n, nb * n))
    for k in range(nb):
        h[k * n:(k + 1) * n, k * n:(k + 1) * n] = diag[k]
    for k in range(nb - 1):
        h[k * n:(k + 1) * n, (k + 1) * n:(k + 2) * n] = upper[k]
        h[(k + 1) * n:(k + 2) * n, k * n:(k + 1) * n] = upper[k].T
    return h
