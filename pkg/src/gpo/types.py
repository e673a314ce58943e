"""Value types shared across modules."""
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

__all__ = ["Stream", "BiasState", "NoiseModel", "DEFAULT_STD", "MIN_STD"]

# per-sample noise std used when none is given (gyro rad/s, accel m/s^2)
DEFAULT_STD = 1e-5
# measurement weights are capped at 1/MIN_STD^2
MIN_STD = 1e-6


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Stream:
    """Timestamped 3-axis samples (gyro rad/s or accel m/s^2).

    Timestamps are strictly increasing; distinct streams need not share them.
    """

    t: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(-1)
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape != (t.shape[0], 3):
            raise InvalidInputError(f"values must have shape ({t.shape[0]}, 3), got {v.shape}")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise InvalidInputError("stream contains non-finite entries")
        if t.size > 1 and np.any(np.diff(t) <= 0.0):
            raise InvalidInputError("stream timestamps must be strictly increasing")
        object.__setattr__(self, "t", _frozen(t))
        object.__setattr__(self, "values", _frozen(v))

    def __len__(self):
        return self.t.shape[0]

    def window(self, t0, t1):
        """Samples with ``t0 <= t <= t1``."""
        mask = (self.t >= t0) & (self.t <= t1)
        return Stream(self.t[mask], self.values[mask])

    @property
    def nominal_dt(self):
        if len(self) < 2:
            return 0.0
        return float(np.median(np.diff(self.t)))

    @classmethod
    def empty(cls):
        return cls(np.zeros(0), np.zeros((0, 3)))


@dataclass(frozen=True)
class BiasState:
    gyro: np.ndarray = field(default_factory=lambda: np.zeros(3))
    accel: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("gyro", "accel"):
            v = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if v.shape != (3,) or not np.all(np.isfinite(v)):
                raise InvalidInputError(f"bias {name} must be a finite 3-vector")
            object.__setattr__(self, name, _frozen(v))

    def as_vector(self):
        return np.concatenate([self.gyro, self.accel])

    @classmethod
    def from_vector(cls, vec):
        vec = np.asarray(vec, dtype=float)
        return cls(vec[:3], vec[3:6])

    def __add__(self, other):
        return BiasState(self.gyro + other.gyro, self.accel + other.accel)

    def __sub__(self, other):
        return BiasState(self.gyro - other.gyro, self.accel - other.accel)

    def __eq__(self, other):
        return (isinstance(other, BiasState) and np.array_equal(self.gyro, other.gyro)
                and np.array_equal(self.accel, other.accel))

    def __hash__(self):
        return hash((self.gyro.tobytes(), self.accel.tobytes()))


@dataclass(frozen=True)
class NoiseModel:
    """Per-sample measurement covariances ``Q_g`` (rad/s)^2 and ``Q_a`` (m/s^2)^2."""

    gyro_cov: np.ndarray
    accel_cov: np.ndarray

    def __post_init__(self):
        for name in ("gyro_cov", "accel_cov"):
            m = np.asarray(getattr(self, name), dtype=float)
            if m.ndim == 0:
                m = float(m) * np.eye(3)
            if m.shape != (3, 3) or not np.allclose(m, m.T):
                raise InvalidInputError(f"{name} must be a symmetric 3x3 matrix")
            if np.min(np.linalg.eigvalsh(m)) <= 0.0:
                raise InvalidInputError(f"{name} must be positive definite")
            object.__setattr__(self, name, _frozen(m))

    @classmethod
    def from_std(cls, gyro_std=DEFAULT_STD, accel_std=DEFAULT_STD):
        g = max(float(gyro_std), MIN_STD)
        a = max(float(accel_std), MIN_STD)
        return cls(g * g * np.eye(3), a * a * np.eye(3))

    def __eq__(self, other):
        return (isinstance(other, NoiseModel) and np.array_equal(self.gyro_cov, other.gyro_cov)
                and np.array_equal(self.accel_cov, other.accel_cov))

    def __hash__(self):
        return hash((self.gyro_cov.tobytes(), self.accel_cov.tobytes()))
