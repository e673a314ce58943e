"""Closed-form increments for constant body rate and constant body acceleration."""
import numpy as np
from scipy.spatial.transform import Rotation


def _skew(v):
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def constant_motion(omega, accel, t):
    """``(dC, dv, dr)`` after ``t`` seconds of constant ``omega`` and ``accel``."""
    omega = np.asarray(omega, dtype=float)
    accel = np.asarray(accel, dtype=float)
    rot = Rotation.from_rotvec(omega * t).as_matrix()
    th = np.linalg.norm(omega)
    k = _skew(omega)
    if th < 1e-12:
        return rot, accel * t, 0.5 * accel * t * t
    # integrals of exp(s k) over [0, t] and of that integral over [0, t]
    m1 = t * np.eye(3) + (1 - np.cos(th * t)) / th ** 2 * k + (th * t - np.sin(th * t)) / th ** 3 * (k @ k)
    m2 = (0.5 * t * t * np.eye(3) + (t / th ** 2 - np.sin(th * t) / th ** 3) * k
          + (t * t / (2 * th ** 2) + (np.cos(th * t) - 1) / th ** 4) * (k @ k))
    return rot, m1 @ accel, m2 @ accel
