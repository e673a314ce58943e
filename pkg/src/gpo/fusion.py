"""Desk-scale sliding-window fusion of pseudo-measurement trajectories with
landmark projections observed at arbitrary (asynchronous) timestamps.

Each anchor interval ``[t_n, t_n+1]`` gets its own fitted pseudo-measurement
trajectory. The estimator keeps the ``window`` most recent anchor states and
a shared bias; the oldest anchor in the window is held fixed and no prior is
kept for dropped states. Projections are predicted by querying the
trajectory at the observation time and composing with the anchor state, so
their Jacobians reach the anchor and the bias through the chain rule.
"""
import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from . import _fusion
from .errors import DepthError, InvalidInputError, SingularSystemError, WindowMismatchError
from .gp_prior import GpHyper
from .lie import exp_so3, is_rotation
from .preopt import default_knot_count, knot_grid, preintegrate
from .query import bias_correct, query
from .sim import CorruptionSpec, MotionPattern, SamplingSpec, simulate
from .baseline import oracle_integrate
from .types import BiasState, NoiseModel

__all__ = [
    "GRAVITY",
    "Intrinsics",
    "NavState",
    "ProjectionObs",
    "Scene",
    "FusionConfig",
    "FusionResult",
    "FusionScenario",
    "compose",
    "projection_residual",
    "preint_residual",
    "run_sliding_window",
    "dead_reckon",
    "make_scenario",
    "ate",
    "write_trajectory_csv",
    "write_scene_csv",
    "read_scene_csv",
]

GRAVITY = np.array([0.0, 0.0, -9.81])
GRAVITY.setflags(write=False)
# pixel std assigned to noiseless observations
MIN_PIXEL_STD = 1e-6


def _frozen(a, shape=None):
    a = np.array(a, dtype=float, copy=True)
    if shape is not None:
        a = a.reshape(shape)
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("non-finite state entry")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Intrinsics:
    fx: float = 300.0
    fy: float = 300.0
    cx: float = 320.0
    cy: float = 240.0
    width: int = 640
    height: int = 480

    def as_array(self):
        return np.array([self.fx, self.fy, self.cx, self.cy])

    def contains(self, pix):
        return 0.0 <= pix[0] <= self.width and 0.0 <= pix[1] <= self.height


@dataclass(frozen=True)
class NavState:
    """Body-to-world rotation, world position and velocity at time ``t``."""

    rotation: np.ndarray
    position: np.ndarray
    velocity: np.ndarray
    bias: BiasState = field(default_factory=BiasState)
    t: float = 0.0

    def __post_init__(self):
        c = _frozen(self.rotation, (3, 3))
        if not is_rotation(c, tol=1e-6):
            raise InvalidInputError("NavState rotation is not a valid rotation matrix")
        object.__setattr__(self, "rotation", c)
        object.__setattr__(self, "position", _frozen(self.position, (3,)))
        object.__setattr__(self, "velocity", _frozen(self.velocity, (3,)))

    def retract(self, delta):
        """Apply a ``(dtheta, dr, dv)`` perturbation."""
        delta = np.asarray(delta, dtype=float)
        return NavState(self.rotation @ exp_so3(delta[0:3]), self.position + delta[3:6],
                        self.velocity + delta[6:9], self.bias, self.t)


@dataclass(frozen=True)
class ProjectionObs:
    t: float
    landmark: int
    pixel: np.ndarray
    intrinsics: Intrinsics = field(default_factory=Intrinsics)
    std: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "pixel", _frozen(self.pixel, (2,)))
        if not self.std > 0:
            raise InvalidInputError("pixel noise std must be positive")


@dataclass(frozen=True)
class Scene:
    landmarks: np.ndarray
    intrinsics: Intrinsics
    observations: tuple

    def __post_init__(self):
        object.__setattr__(self, "landmarks", _frozen(self.landmarks).reshape(-1, 3))
        obs = tuple(sorted(self.observations, key=lambda o: o.t))
        for o in obs:
            if not 0 <= o.landmark < self.landmarks.shape[0]:
                raise InvalidInputError(f"observation refers to unknown landmark {o.landmark}")
        object.__setattr__(self, "observations", obs)


def compose(x, q, gravity=GRAVITY, dt=None):
    """State at ``q.t`` from anchor ``x`` and increments ``q`` of the window starting at ``x.t``."""
    if dt is None:
        dt = q.t - x.t
    elif abs(x.t + dt - q.t) > 1e-9:
        raise WindowMismatchError(f"increment at t={q.t} does not belong to a window starting at {x.t}")
    g = np.asarray(gravity, dtype=float)
    c = x.rotation
    return NavState(
        c @ q.rotation,
        x.position + x.velocity * dt + 0.5 * dt * dt * g + c @ q.position,
        x.velocity + g * dt + c @ q.velocity,
        x.bias,
        q.t,
    )


def _bias_vec(bias):
    return np.ascontiguousarray(bias.as_vector())


def projection_residual(anchor, q, obs, landmark, bias=None, gravity=GRAVITY):
    """Predicted minus observed pixel for ``obs`` and its Jacobians.

    ``q`` is the query at ``obs.t`` of the window anchored at ``anchor``; the
    increments are first-order corrected from ``q.bias_lin`` to ``bias``
    (default ``anchor.bias``). Returns ``(e, J_anchor (2x9), J_bias (2x6))``
    with anchor perturbations ordered ``(dtheta, dr, dv)``.
    """
    bias = anchor.bias if bias is None else bias
    delta = bias - q.bias_lin
    pix, depth, j_a, j_b = _fusion.project_one(
        anchor.rotation, anchor.position, anchor.velocity, q.t - anchor.t, q.rotation, q.position,
        q.jac_bias, np.ascontiguousarray(delta.gyro), np.ascontiguousarray(delta.accel),
        np.asarray(landmark, dtype=float), obs.intrinsics.as_array(), np.asarray(gravity, dtype=float))
    if not depth > 0.0:
        raise DepthError(f"landmark {obs.landmark} behind the camera at t={obs.t} (depth {depth:.3g})")
    return pix - obs.pixel, j_a, j_b


def preint_residual(xi, xj, q, bias=None, gravity=GRAVITY):
    """Pseudo-measurement residual ``(theta, v, r)`` between consecutive anchors.

    ``q`` is the query at ``xj.t`` of the window anchored at ``xi``. Returns
    ``(e, J_i, J_j, J_bias)``.
    """
    bias = xi.bias if bias is None else bias
    delta = bias - q.bias_lin
    if abs(q.t - xj.t) > 1e-9:
        raise WindowMismatchError("pseudo-measurement does not end at the second anchor")
    return _fusion.preint_factor(
        xi.rotation, xi.position, xi.velocity, xj.rotation, xj.position, xj.velocity, xj.t - xi.t,
        q.rotation, q.velocity, q.position, q.jac_bias, np.ascontiguousarray(delta.gyro),
        np.ascontiguousarray(delta.accel), np.asarray(gravity, dtype=float))


@dataclass(frozen=True)
class FusionConfig:
    """Estimator settings.

    ``pseudo_weight`` picks the pseudo-measurement covariance: ``"gpo"`` uses
    the fitted trajectory's covariance at the window end, ``"discrete"`` the
    discretely propagated noise covariance. ``cov_floor`` is added to its
    diagonal. The bias has a zero-mean prior with ``bias_prior_std``
    (gyro, accel).
    """

    window: int = 5
    n_intervals: int = None
    pseudo_weight: str = "gpo"
    cov_floor: float = 1e-12
    bias_prior_std: tuple = (0.05, 0.5)
    gravity: tuple = (0.0, 0.0, -9.81)
    max_iterations: int = 20
    tol: float = 1e-10
    use_projections: bool = True
    hyper: GpHyper = field(default_factory=GpHyper)
    noise: NoiseModel = None

    def __post_init__(self):
        if self.window < 2:
            raise InvalidInputError("window must hold at least two anchors")
        if self.pseudo_weight not in ("gpo", "discrete"):
            raise InvalidInputError("pseudo_weight must be 'gpo' or 'discrete'")
        if min(self.bias_prior_std) <= 0:
            raise InvalidInputError("bias prior std must be positive")


@dataclass(frozen=True)
class FusionResult:
    """Final anchor estimates, the bias estimate after each solve, and the
    objective trace of every solve."""

    states: tuple
    bias_history: np.ndarray
    traces: tuple
    iterations: tuple

    @property
    def times(self):
        return np.array([s.t for s in self.states])

    @property
    def positions(self):
        return np.array([s.position for s in self.states])

    @property
    def bias(self):
        return self.states[-1].bias

    def objective_nonincreasing(self):
        return all(all(b <= a for a, b in zip(tr, tr[1:])) for tr in self.traces)


class _Window:
    """Per-interval data fixed at the time the interval is pre-integrated."""

    def __init__(self, traj, q_end, info_sqrt, obs_rows):
        self.traj = traj
        self.q_end = q_end
        self.info_sqrt = info_sqrt
        self.obs = obs_rows


def _obs_rows(traj, observations, landmarks, t0, t1, last):
    rows = [o for o in observations if t0 <= o.t < t1 or (last and o.t == t1)]
    if not rows:
        return None
    qs = [query(traj, o.t) for o in rows]
    return {
        "dt": np.array([o.t - t0 for o in rows]),
        "dc": np.ascontiguousarray(np.stack([q.rotation for q in qs])),
        "dr": np.ascontiguousarray(np.stack([q.position for q in qs])),
        "jac": np.ascontiguousarray(np.stack([q.jac_bias for q in qs])),
        "bias_lin": np.ascontiguousarray(np.stack([q.bias_lin.as_vector() for q in qs])),
        "landmark": np.ascontiguousarray(landmarks[[o.landmark for o in rows]]),
        "pixel": np.stack([o.pixel for o in rows]),
        "std": np.array([o.std for o in rows]),
        "intr": rows[0].intrinsics.as_array(),
    }


def _info_sqrt(cov, floor):
    cov = 0.5 * (cov + cov.T) + floor * np.eye(cov.shape[0])
    try:
        low = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise SingularSystemError("pseudo-measurement covariance is not positive definite") from None
    return np.linalg.inv(low)


def _evaluate(states, bias, windows, first, cfg, gravity, with_jac=True):
    """Whitened residual vector and Jacobian over the free anchors + bias."""
    n_states = len(states)
    n_free = n_states - 1
    dim = 9 * n_free + 6
    b_col = 9 * n_free
    res = []
    jacs = []
    bvec = _bias_vec(bias)
    for i in range(n_states - 1):
        win = windows[first + i]
        xi, xj = states[i], states[i + 1]
        e, ji, jj, jb = preint_residual(xi, xj, win.q_end, bias, gravity)
        w = win.info_sqrt
        res.append(w @ e)
        if with_jac:
            row = np.zeros((9, dim))
            if i > 0:
                row[:, 9 * (i - 1):9 * i] = w @ ji
            row[:, 9 * i:9 * i + 9] = w @ jj
            row[:, b_col:] = w @ jb
            jacs.append(row)
    if cfg.use_projections:
        for i in range(n_states):
            if first + i >= len(windows):
                continue
            ob = windows[first + i].obs
            if ob is None:
                continue
            x = states[i]
            pix, depth, j_a, j_b = _fusion.project_batch(
                np.zeros(ob["dt"].shape[0], dtype=np.int64), x.rotation[None], x.position[None],
                x.velocity[None], ob["dt"], ob["dc"], ob["dr"], ob["jac"], ob["bias_lin"], bvec,
                ob["landmark"], ob["intr"], gravity)
            if np.any(depth <= 0.0):
                raise DepthError(f"landmark behind the camera in interval starting at t={x.t}")
            scale = 1.0 / ob["std"]
            res.append(((pix - ob["pixel"]) * scale[:, None]).reshape(-1))
            if with_jac:
                rows = np.zeros((2 * depth.shape[0], dim))
                if i > 0:
                    rows[:, 9 * (i - 1):9 * i] = (j_a * scale[:, None, None]).reshape(-1, 9)
                rows[:, b_col:] = (j_b * scale[:, None, None]).reshape(-1, 6)
                jacs.append(rows)
    sig = np.concatenate([np.full(3, cfg.bias_prior_std[0]), np.full(3, cfg.bias_prior_std[1])])
    res.append(bvec / sig)
    if with_jac:
        prior = np.zeros((6, dim))
        prior[:, b_col:] = np.diag(1.0 / sig)
        jacs.append(prior)
    r = np.concatenate(res)
    return r, (np.vstack(jacs) if with_jac else None)


def _apply(states, bias, step, alpha):
    new_states = [states[0]]
    for i in range(1, len(states)):
        new_states.append(states[i].retract(alpha * step[9 * (i - 1):9 * i]))
    new_bias = BiasState.from_vector(bias.as_vector() + alpha * step[-6:])
    return [NavState(s.rotation, s.position, s.velocity, new_bias, s.t) for s in new_states], new_bias


def _cost(states, bias, windows, first, cfg, gravity):
    try:
        r, _ = _evaluate(states, bias, windows, first, cfg, gravity, with_jac=False)
    except DepthError:
        return math.inf
    return float(r @ r)


def _gauss_newton(states, bias, windows, first, cfg, gravity):
    r, jac = _evaluate(states, bias, windows, first, cfg, gravity)
    cost = float(r @ r)
    trace = [cost]
    iterations = 0
    for _ in range(cfg.max_iterations):
        h = jac.T @ jac
        g = jac.T @ r
        try:
            step = -np.linalg.solve(h, g)
        except np.linalg.LinAlgError:
            raise SingularSystemError("sliding-window normal equations are singular") from None
        if np.max(np.abs(step)) < cfg.tol:
            break
        alpha = 1.0
        while alpha > 1e-8:
            cand_states, cand_bias = _apply(states, bias, step, alpha)
            cand_cost = _cost(cand_states, cand_bias, windows, first, cfg, gravity)
            if cand_cost <= cost:
                break
            alpha *= 0.5
        else:
            break
        states, bias = cand_states, cand_bias
        iterations += 1
        r, jac = _evaluate(states, bias, windows, first, cfg, gravity)
        cost = float(r @ r)
        trace.append(cost)
        if np.max(np.abs(alpha * step)) < cfg.tol:
            break
    return states, bias, tuple(trace), iterations


def run_sliding_window(scene, gyro, accel, anchor_times, initial_state, config=None):
    """Estimate anchor states and the shared IMU bias over ``anchor_times``.

    Each new interval is pre-integrated at the current bias estimate, the
    next anchor is predicted by composition, and Gauss-Newton (with
    backtracking, so every accepted step lowers the objective) refines the
    window. With ``config.use_projections`` false, or no observations, the
    result is dead reckoning.
    """
    cfg = config or FusionConfig()
    gravity = np.asarray(cfg.gravity, dtype=float)
    anchor_times = np.asarray(anchor_times, dtype=float)
    if anchor_times.ndim != 1 or anchor_times.size < 2 or np.any(np.diff(anchor_times) <= 0):
        raise InvalidInputError("anchor_times must be strictly increasing with at least two entries")
    if abs(initial_state.t - anchor_times[0]) > 1e-12:
        raise WindowMismatchError("initial state must sit at the first anchor time")
    observations = scene.observations if (scene is not None and cfg.use_projections) else ()
    landmarks = scene.landmarks if scene is not None else np.zeros((0, 3))
    noise = cfg.noise or NoiseModel.from_std()

    all_states = [initial_state]
    bias = initial_state.bias
    windows = []
    bias_history = []
    traces = []
    iterations = []
    n_last = anchor_times.size - 2
    for n in range(anchor_times.size - 1):
        t0, t1 = float(anchor_times[n]), float(anchor_times[n + 1])
        traj = preintegrate(gyro, accel, (t0, t1), cfg.n_intervals, bias=bias, hyper=cfg.hyper, noise=noise)
        q_end = query(traj, t1)
        cov = q_end.cov if cfg.pseudo_weight == "gpo" else traj.disc_cov[-1]
        windows.append(_Window(traj, q_end, _info_sqrt(cov, cfg.cov_floor),
                               _obs_rows(traj, observations, landmarks, t0, t1, n == n_last)))
        predicted = compose(all_states[-1], bias_correct(q_end, *(bias - traj.bias_lin).as_vector().reshape(2, 3)),
                            gravity)
        all_states.append(NavState(predicted.rotation, predicted.position, predicted.velocity, bias, t1))
        first = max(0, len(all_states) - cfg.window)
        active, bias, trace, its = _gauss_newton(all_states[first:], bias, windows, first, cfg, gravity)
        all_states[first:] = active
        bias_history.append(bias.as_vector())
        traces.append(trace)
        iterations.append(its)
    final = [NavState(s.rotation, s.position, s.velocity, s.bias, s.t) for s in all_states]
    return FusionResult(tuple(final), np.array(bias_history), tuple(traces), tuple(iterations))


def dead_reckon(gyro, accel, anchor_times, initial_state, config=None):
    """IMU-only propagation: the estimator with every projection factor removed."""
    cfg = config or FusionConfig()
    cfg = FusionConfig(**{**cfg.__dict__, "use_projections": False})
    return run_sliding_window(None, gyro, accel, anchor_times, initial_state, cfg)


def ate(estimated, truth):
    """Root-mean-square position error; the frame is pinned by the shared initial state."""
    est = np.array([s.position for s in estimated])
    ref = np.array([s.position for s in truth])
    return float(np.sqrt(np.mean(np.sum((est - ref) ** 2, axis=1))))


@dataclass(frozen=True)
class FusionScenario:
    gyro: object
    accel: object
    scene: Scene
    anchor_times: np.ndarray
    initial_state: NavState
    truth: tuple
    bias: BiasState


def _truth_states(pattern, t0, times, c0, r0, v0):
    orc = oracle_integrate(pattern, (t0, float(times[-1])), times)
    states = []
    for i, t in enumerate(times):
        dt = t - t0
        states.append(NavState(c0 @ orc.rotation[i], r0 + v0 * dt + c0 @ orc.position[i],
                               v0 + c0 @ orc.velocity[i], BiasState(), float(t)))
    return states


def make_scenario(seed=0, duration=5.0, anchor_dt=0.5, pattern="slow", gyro_bias=(0.01, 0.0, 0.0),
                  accel_bias=(0.0, 0.0, 0.0), pixel_std=1.0, gyro_std=1e-4, accel_std=1e-3, obs_rate=40.0,
                  n_landmarks=80, imu_rate=100.0, n_intervals=None, intrinsics=None, gravity=GRAVITY):
    """Synthetic fusion problem: IMU streams with gravity and bias, a landmark
    ceiling in front of the camera, and projections at random times.

    The camera frame is the body frame, looking along body +z. Observation
    times never coincide with anchor or knot times.
    """
    intr = intrinsics or Intrinsics()
    rng = np.random.default_rng(seed)
    pat = MotionPattern.preset(pattern, seed) if isinstance(pattern, str) else pattern
    t0, t1 = 0.0, float(duration)
    n_anchor = int(round(duration / anchor_dt))
    anchor_times = t0 + anchor_dt * np.arange(n_anchor + 1)
    anchor_times[-1] = t1
    c0, r0, v0 = np.eye(3), np.zeros(3), np.zeros(3)
    bias = BiasState(gyro_bias, accel_bias)
    sim = simulate(pat, (t0, t1), SamplingSpec(imu_rate, imu_rate, 0.0, seed),
                   CorruptionSpec(gyro_std, accel_std, bias, seed + 10_000), gravity=gravity, initial_rotation=c0)

    landmarks = np.column_stack([rng.uniform(-8.0, 8.0, n_landmarks), rng.uniform(-6.0, 6.0, n_landmarks),
                                 rng.uniform(3.0, 6.0, n_landmarks)])
    k = n_intervals or default_knot_count(anchor_dt)
    forbidden = np.unique(np.concatenate([knot_grid(a, b, k) for a, b in zip(anchor_times[:-1], anchor_times[1:])]))
    n_obs = int(obs_rate * duration)
    obs_t = np.sort(rng.uniform(t0, t1, n_obs))
    near = np.min(np.abs(obs_t[:, None] - forbidden[None, :]), axis=1)
    obs_t = obs_t[near > 1e-6]
    truth_obs = _truth_states(pat, t0, obs_t, c0, r0, v0)
    obs = []
    for x in truth_obs:
        p = (landmarks - x.position) @ x.rotation
        z = p[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = intr.fx * p[:, 0] / z + intr.cx
            v = intr.fy * p[:, 1] / z + intr.cy
        ok = np.flatnonzero((z > 0.5) & (u >= 0) & (u <= intr.width) & (v >= 0) & (v <= intr.height))
        if ok.size == 0:
            continue
        j = int(rng.choice(ok))
        pix = np.array([u[j], v[j]]) + pixel_std * rng.standard_normal(2)
        obs.append(ProjectionObs(x.t, j, pix, intr, max(pixel_std, MIN_PIXEL_STD)))
    truth = tuple(_truth_states(pat, t0, anchor_times, c0, r0, v0))
    return FusionScenario(sim.gyro, sim.accel, Scene(landmarks, intr, tuple(obs)), anchor_times, truth[0],
                          truth, bias)


def write_trajectory_csv(path, states, comments=()):
    """``t,qx,qy,qz,qw,x,y,z`` rows, quaternion scalar-last."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["t", "qx", "qy", "qz", "qw", "x", "y", "z"])
        for s in states:
            quat = Rotation.from_matrix(s.rotation).as_quat()
            w.writerow([repr(float(s.t))] + [repr(float(v)) for v in quat] + [repr(float(v)) for v in s.position])


def write_scene_csv(landmark_path, obs_path, scene, comments=()):
    """Landmarks as ``id,x,y,z``; observations as ``t,landmark,u,v,std``."""
    with open(landmark_path, "w", newline="", encoding="utf-8") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["id", "x", "y", "z"])
        for i, p in enumerate(scene.landmarks):
            w.writerow([i] + [repr(float(v)) for v in p])
    with open(obs_path, "w", newline="", encoding="utf-8") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["t", "landmark", "u", "v", "std"])
        for o in scene.observations:
            w.writerow([repr(float(o.t)), o.landmark, repr(float(o.pixel[0])), repr(float(o.pixel[1])),
                        repr(float(o.std))])


def _read_rows(path, header):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.lstrip().startswith("#")) if r]
    if not rows or tuple(c.strip() for c in rows[0]) != header:
        raise InvalidInputError(f"{path}: expected header {','.join(header)}")
    return rows[1:]


def read_scene_csv(landmark_path, obs_path, intrinsics=None):
    intr = intrinsics or Intrinsics()
    lm_rows = _read_rows(landmark_path, ("id", "x", "y", "z"))
    landmarks = np.array([[float(v) for v in r[1:4]] for r in sorted(lm_rows, key=lambda r: int(r[0]))])
    obs = tuple(
        ProjectionObs(float(r[0]), int(r[1]), [float(r[2]), float(r[3])], intr, float(r[4]))
        for r in _read_rows(obs_path, ("t", "landmark", "u", "v", "std"))
    )
    return Scene(landmarks.reshape(-1, 3), intr, obs)
