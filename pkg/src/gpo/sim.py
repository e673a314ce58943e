"""Analytic sinusoidal motion patterns and synthetic IMU streams.

Signals are body angular velocity and body kinematic acceleration, each
``offset + amp * sin(2 pi freq t + phase)`` per axis. Generated accelerometer
samples exclude gravity unless a gravity vector is passed to :func:`simulate`.
"""
import csv
from dataclasses import dataclass, field

import numpy as np

from ._integrate import signal
from .errors import InvalidInputError
from .types import BiasState, Stream

__all__ = [
    "MotionPattern",
    "SamplingSpec",
    "CorruptionSpec",
    "SimResult",
    "Truth",
    "PRESETS",
    "simulate",
    "noise_sweep",
    "write_stream_csv",
    "read_stream_csv",
]

# name: (omega amplitude rad/s, accel amplitude m/s^2, max frequency Hz)
PRESETS = {
    "slow": (0.5, 0.5, 0.5),
    "fast": (4.0, 8.0, 2.0),
}


def _vec(x):
    v = np.broadcast_to(np.asarray(x, dtype=float), (3,)).copy()
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("pattern parameters must be finite")
    v.setflags(write=False)
    return v


@dataclass(frozen=True)
class MotionPattern:
    omega_amp: np.ndarray = 0.0
    omega_freq: np.ndarray = 0.0
    omega_phase: np.ndarray = 0.0
    omega_offset: np.ndarray = 0.0
    accel_amp: np.ndarray = 0.0
    accel_freq: np.ndarray = 0.0
    accel_phase: np.ndarray = 0.0
    accel_offset: np.ndarray = 0.0

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            object.__setattr__(self, name, _vec(getattr(self, name)))
        if np.any(self.omega_freq < 0) or np.any(self.accel_freq < 0):
            raise InvalidInputError("frequencies must be non-negative")

    @property
    def params(self):
        """``(2, 4, 3)`` array consumed by the kernels."""
        return np.ascontiguousarray(np.array([
            [self.omega_amp, self.omega_freq, self.omega_phase, self.omega_offset],
            [self.accel_amp, self.accel_freq, self.accel_phase, self.accel_offset],
        ]))

    @property
    def max_frequency(self):
        return float(max(self.omega_freq.max(), self.accel_freq.max()))

    def sample(self, times):
        """Exact ``(omega, accel)`` at ``times``, each ``(N, 3)``."""
        times = np.asarray(times, dtype=float)
        p = self.params
        phase = 2.0 * np.pi * p[:, 1, None, :] * times[None, :, None] + p[:, 2, None, :]
        sig = p[:, 3, None, :] + p[:, 0, None, :] * np.sin(phase)
        return sig[0], sig[1]

    def at(self, t):
        return signal(self.params, float(t))

    @classmethod
    def constant(cls, omega=0.0, accel=0.0):
        return cls(omega_offset=omega, accel_offset=accel)

    @classmethod
    def preset(cls, name, seed=0):
        """Randomised member of a preset family.

        Amplitudes are fixed by the preset; per-axis frequencies are drawn in
        ``[fmax/2, fmax]`` and phases in ``[0, 2 pi)``.
        """
        try:
            w_amp, a_amp, fmax = PRESETS[name]
        except KeyError:
            raise InvalidInputError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
        rng = np.random.default_rng(seed)
        return cls(
            omega_amp=w_amp,
            omega_freq=rng.uniform(0.5 * fmax, fmax, 3),
            omega_phase=rng.uniform(0.0, 2.0 * np.pi, 3),
            accel_amp=a_amp,
            accel_freq=rng.uniform(0.5 * fmax, fmax, 3),
            accel_phase=rng.uniform(0.0, 2.0 * np.pi, 3),
        )


@dataclass(frozen=True)
class SamplingSpec:
    gyro_rate: float = 100.0
    accel_rate: float = 100.0
    jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (self.gyro_rate > 0 and self.accel_rate > 0):
            raise InvalidInputError("sample rates must be positive")
        if not 0.0 <= self.jitter < 0.5 / max(self.gyro_rate, self.accel_rate):
            raise InvalidInputError("jitter must be below half the sample period")


@dataclass(frozen=True)
class CorruptionSpec:
    """White measurement noise and a constant bias.

    ``mirrored`` negates the seeded noise draws, giving the antithetic twin
    of the same spec.
    """

    gyro_std: float = 0.0
    accel_std: float = 0.0
    bias: BiasState = field(default_factory=BiasState)
    seed: int = 0
    mirrored: bool = False

    def __post_init__(self):
        if not (self.gyro_std >= 0 and self.accel_std >= 0):
            raise InvalidInputError("noise std must be non-negative")

    def scaled(self, level):
        return CorruptionSpec(level, level, self.bias, self.seed, self.mirrored)


@dataclass(frozen=True)
class Truth:
    """Ground-truth handle; evaluates the RK4 oracle lazily."""

    pattern: MotionPattern
    window: tuple
    initial_rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def at(self, times, config=None):
        from .baseline import oracle_integrate

        return oracle_integrate(self.pattern, self.window, times, config)

    def endpoint(self, config=None):
        return self.at([self.window[1]], config)


@dataclass(frozen=True)
class SimResult:
    gyro: Stream
    accel: Stream
    truth: Truth


def _sample_times(t0, t1, rate, jitter, rng):
    n = int(np.floor((t1 - t0) * rate + 1e-9))
    base = t0 + np.arange(n + 1) / rate
    if jitter > 0.0:
        base = base + rng.uniform(-jitter, jitter, base.size)
    return np.clip(base, t0, t1)


def simulate(pattern, window, sampling=None, corruption=None, gravity=None, initial_rotation=None):
    """Sample noisy, biased gyro and accelerometer streams from ``pattern``.

    ``gravity`` (world frame, e.g. ``[0, 0, -9.81]``) adds ``-C(t)^T g`` to the
    accelerometer, with ``C(t) = initial_rotation @ dC(t)``. Deterministic for
    fixed seeds: timestamps draw from ``sampling.seed``, noise from
    ``corruption.seed``.
    """
    sampling = sampling or SamplingSpec()
    corruption = corruption or CorruptionSpec()
    t0, t1 = (float(x) for x in window)
    if not t1 > t0:
        raise InvalidInputError("window end must be after its start")
    fmax = pattern.max_frequency
    if fmax > min(sampling.gyro_rate, sampling.accel_rate) / 5.0:
        raise InvalidInputError("pattern is not band-limited to rate/5")
    rng_t = np.random.default_rng(sampling.seed)
    tg = _sample_times(t0, t1, sampling.gyro_rate, sampling.jitter, rng_t)
    ta = _sample_times(t0, t1, sampling.accel_rate, sampling.jitter, rng_t)
    wg, _ = pattern.sample(tg)
    _, aa = pattern.sample(ta)
    if gravity is not None:
        from .baseline import oracle_integrate

        c0 = np.eye(3) if initial_rotation is None else np.asarray(initial_rotation, dtype=float)
        rot = oracle_integrate(pattern, (t0, t1), ta).rotation
        g_body = np.einsum("nji,j->ni", c0 @ rot, np.asarray(gravity, dtype=float))
        aa = aa - g_body
    rng_n = np.random.default_rng(corruption.seed)
    sign = -1.0 if corruption.mirrored else 1.0
    noise_g = sign * rng_n.standard_normal(wg.shape)
    noise_a = sign * rng_n.standard_normal(aa.shape)
    wg = wg + corruption.bias.gyro + corruption.gyro_std * noise_g
    aa = aa + corruption.bias.accel + corruption.accel_std * noise_a
    c0 = np.eye(3) if initial_rotation is None else np.asarray(initial_rotation, dtype=float)
    return SimResult(Stream(tg, wg), Stream(ta, aa), Truth(pattern, (t0, t1), c0))


def noise_sweep(pattern, levels, window=(0.0, 0.5), sampling=None, trials=100, seed=0, antithetic=False):
    """One batch of ``trials`` simulations per noise level.

    ``pattern`` is a MotionPattern (shared by all trials) or a preset name
    (each trial draws its own member). Trial ``i`` uses seed ``seed + i`` at
    every level, so levels differ only in noise magnitude (common random
    numbers); seeds differ across trials within a batch. With ``antithetic``
    each trial contributes its mirrored twin right after it, doubling the
    batch; the batch mean then has no first-order noise term.
    """
    levels = [float(x) for x in levels]
    if any(b < a for a, b in zip(levels, levels[1:])):
        raise InvalidInputError("levels must be sorted ascending")
    sampling = sampling or SamplingSpec()
    batches = []
    for level in levels:
        batch = []
        for i in range(trials):
            s = seed + i
            pat = MotionPattern.preset(pattern, s) if isinstance(pattern, str) else pattern
            samp = SamplingSpec(sampling.gyro_rate, sampling.accel_rate, sampling.jitter, s)
            batch.append(simulate(pat, window, samp, CorruptionSpec(level, level, BiasState(), s)))
            if antithetic:
                batch.append(simulate(pat, window, samp, CorruptionSpec(level, level, BiasState(), s, True)))
        batches.append(batch)
    return batches


_COLUMNS = {"gyro": ("t", "wx", "wy", "wz"), "accel": ("t", "ax", "ay", "az")}


def write_stream_csv(path, stream, kind, comments=()):
    """Write ``t,wx,wy,wz`` (gyro) or ``t,ax,ay,az`` (accel) with a header row."""
    if kind not in _COLUMNS:
        raise InvalidInputError(f"kind must be 'gyro' or 'accel', got {kind!r}")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(_COLUMNS[kind])
        for t, v in zip(stream.t, stream.values):
            writer.writerow([repr(float(t))] + [repr(float(x)) for x in v])


def read_stream_csv(path):
    """Read a stream CSV written by :func:`write_stream_csv` (``#`` lines ignored).

    Returns ``(kind, Stream)``.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.lstrip().startswith("#")) if r]
    if not rows:
        raise InvalidInputError(f"{path}: empty stream file")
    header = tuple(c.strip() for c in rows[0])
    for kind, cols in _COLUMNS.items():
        if header == cols:
            break
    else:
        raise InvalidInputError(f"{path}: unrecognised header {header}")
    data = np.array(rows[1:], dtype=float).reshape(-1, 4)
    return kind, Stream(data[:, 0], data[:, 1:])
