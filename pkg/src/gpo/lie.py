"""SO(3) exponential/logarithm maps, right Jacobians and the skew operator.

Conventions
-----------
* Rotations are 3x3 orthonormal matrices; perturbations act on the right,
  ``C exp(dtheta^)``.
* ``log_so3`` returns the canonical axis-angle with ``|phi| <= pi``. Near
  ``pi`` the axis is taken from the symmetric part of ``C`` (largest diagonal
  column) and its sign from whatever antisymmetric residue ``C - C^T`` still
  carries; with none left the sign is positive along that column. Both signs
  describe the same rotation, so ``exp_so3(log_so3(C)) == C`` either way.
"""
import numpy as np

from . import _so3
from .errors import InvalidInputError

__all__ = [
    "skew",
    "exp_so3",
    "log_so3",
    "right_jacobian",
    "right_jacobian_inv",
    "left_jacobian_inv",
    "d_right_jacobian",
    "d_right_jacobian_inv",
    "is_rotation",
    "rotation_angle",
]

_ORTHO_TOL = 1e-6


def _vec3(v, name="vector"):
    arr = np.asarray(v, dtype=float)
    if arr.shape != (3,):
        raise InvalidInputError(f"{name} must have shape (3,), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} must be finite")
    return np.ascontiguousarray(arr)


def _rot(c):
    arr = np.ascontiguousarray(np.asarray(c, dtype=float))
    if arr.shape != (3, 3):
        raise InvalidInputError(f"rotation must have shape (3, 3), got {arr.shape}")
    if not is_rotation(arr, _ORTHO_TOL):
        raise InvalidInputError("matrix is not a proper rotation")
    return arr


def is_rotation(c, tol=1e-12):
    c = np.asarray(c, dtype=float)
    if c.shape != (3, 3) or not np.all(np.isfinite(c)):
        return False
    return bool(
        np.max(np.abs(c @ c.T - np.eye(3))) <= tol
        and abs(np.linalg.det(c) - 1.0) <= tol
    )


def skew(v):
    """Skew-symmetric matrix with ``skew(v) @ w == cross(v, w)``."""
    return _so3.skew(_vec3(v))


def exp_so3(phi):
    """Rodrigues exponential; 2nd-order series below 1e-6 rad."""
    return _so3.exp(_vec3(phi, "phi"))


def log_so3(c):
    """Canonical logarithm, ``|phi| <= pi`` (see module docstring for sign at pi)."""
    return _so3.log(_rot(c))


def right_jacobian(phi):
    return _so3.right_jacobian(_vec3(phi, "phi"))


def right_jacobian_inv(phi):
    phi = _vec3(phi, "phi")
    if np.linalg.norm(phi) >= 2.0 * np.pi:
        raise InvalidInputError("right_jacobian_inv requires |phi| < 2 pi")
    return _so3.right_jacobian_inv(phi)


def left_jacobian_inv(phi):
    return right_jacobian_inv(-np.asarray(phi, dtype=float))


def d_right_jacobian(phi, w):
    """Jacobian of ``right_jacobian(phi) @ w`` with respect to ``phi``."""
    return _so3.d_right_jacobian(_vec3(phi, "phi"), _vec3(w, "w"))


def d_right_jacobian_inv(phi, w):
    """Jacobian of ``right_jacobian_inv(phi) @ w`` with respect to ``phi``."""
    return _so3.d_right_jacobian_inv(_vec3(phi, "phi"), _vec3(w, "w"))


def rotation_angle(a, b):
    """Geodesic angle (rad) between two rotations."""
    return float(_so3.angle_between(_rot(a), _rot(b)))
