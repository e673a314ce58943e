import numpy as np
import pytest

from gpo._fusion import preint_factor, project_one
from gpo._jit import python_impl
from gpo.errors import DepthError, InvalidInputError, WindowMismatchError
from gpo.fusion import (GRAVITY, FusionConfig, Intrinsics, NavState, ProjectionObs, Scene, ate, compose,
                        dead_reckon, make_scenario, preint_residual, projection_residual, read_scene_csv,
                        run_sliding_window, write_scene_csv, write_trajectory_csv)
from gpo.lie import rotation_angle
from gpo.preopt import preintegrate
from gpo.query import query
from gpo.sim import MotionPattern
from gpo.types import BiasState, NoiseModel

from conftest import fd_jacobian, random_rotation, rel_err


@pytest.fixture(scope="module")
def scenario():
    return make_scenario(seed=3, duration=1.5, pattern="slow")


def _window_query(sc, n, tau=None, bias=None):
    t0, t1 = sc.anchor_times[n], sc.anchor_times[n + 1]
    traj = preintegrate(sc.gyro, sc.accel, (t0, t1), bias=bias)
    return traj, query(traj, t1 if tau is None else tau)


def test_compose_recovers_truth(scenario):
    sc = scenario
    _, q = _window_query(sc, 1, bias=sc.bias)
    x = compose(sc.truth[1], q)
    assert rotation_angle(x.rotation, sc.truth[2].rotation) < 1e-4
    assert np.linalg.norm(x.position - sc.truth[2].position) < 1e-3
    with pytest.raises(WindowMismatchError):
        compose(sc.truth[1], q, dt=0.1)


def test_observations_are_asynchronous(scenario):
    sc = scenario
    times = np.array([o.t for o in sc.scene.observations])
    assert len(times) > 20
    assert np.min(np.abs(times[:, None] - sc.anchor_times[None, :])) > 1e-6
    assert np.all(np.diff(times) >= 0)


def _random_case(rng, sc):
    n = int(rng.integers(0, len(sc.anchor_times) - 1))
    t0, t1 = sc.anchor_times[n], sc.anchor_times[n + 1]
    obs = [o for o in sc.scene.observations if t0 < o.t < t1]
    o = obs[int(rng.integers(len(obs)))]
    traj, q = _window_query(sc, n, o.t)
    anchor = NavState(sc.truth[n].rotation, sc.truth[n].position, sc.truth[n].velocity,
                      BiasState.from_vector(1e-3 * rng.standard_normal(6)), sc.truth[n].t)
    return anchor, q, o


def test_projection_jacobians(scenario):
    rng = np.random.default_rng(0)
    sc = scenario
    for _ in range(10):
        anchor, q, o = _random_case(rng, sc)
        lm = sc.scene.landmarks[o.landmark]
        _, j_a, j_b = projection_residual(anchor, q, o, lm)
        fa = fd_jacobian(lambda d: projection_residual(anchor.retract(d), q, o, lm)[0], np.zeros(9))
        fb = fd_jacobian(lambda b: projection_residual(anchor, q, o, lm, BiasState.from_vector(b))[0],
                         anchor.bias.as_vector())
        assert rel_err(j_a, fa) < 1e-6
        assert rel_err(j_b, fb) < 1e-6


def test_preintegration_factor_jacobians(scenario):
    rng = np.random.default_rng(1)
    sc = scenario
    for n in range(len(sc.anchor_times) - 1):
        _, q = _window_query(sc, n)
        xi = sc.truth[n].retract(0.01 * rng.standard_normal(9))
        xj = sc.truth[n + 1].retract(0.01 * rng.standard_normal(9))
        b0 = 1e-3 * rng.standard_normal(6)
        bias = BiasState.from_vector(b0)
        _, ji, jj, jb = preint_residual(xi, xj, q, bias)
        assert rel_err(ji, fd_jacobian(lambda d: preint_residual(xi.retract(d), xj, q, bias)[0], np.zeros(9))) < 1e-6
        assert rel_err(jj, fd_jacobian(lambda d: preint_residual(xi, xj.retract(d), q, bias)[0], np.zeros(9))) < 1e-6
        fb = fd_jacobian(lambda b: preint_residual(xi, xj, q, BiasState.from_vector(b))[0], b0)
        assert rel_err(jb, fb) < 1e-6


def test_preintegration_residual_vanishes_at_truth(scenario):
    sc = scenario
    _, q = _window_query(sc, 0, bias=sc.bias)
    e, *_ = preint_residual(sc.truth[0], sc.truth[1], q, sc.bias)
    assert np.linalg.norm(e) < 1e-3
    with pytest.raises(WindowMismatchError):
        preint_residual(sc.truth[0], sc.truth[2], q)


def test_depth_error():
    anchor = NavState(np.eye(3), np.zeros(3), np.zeros(3))
    sc = make_scenario(seed=0, duration=0.5)
    traj = preintegrate(sc.gyro, sc.accel, (0.0, 0.5))
    q = query(traj, 0.2)
    obs = ProjectionObs(0.2, 0, [320.0, 240.0])
    with pytest.raises(DepthError):
        projection_residual(anchor, q, obs, np.array([0.0, 0.0, -5.0]))


def test_exact_motion_is_a_fixed_point():
    # constant yaw rate with gravity: the pseudo-measurements are exact, so the
    # true states with noiseless pixels are a stationary point of the objective
    pat = MotionPattern.constant([0.0, 0.0, 0.3], 0.0)
    sc = make_scenario(seed=2, duration=2.0, pattern=pat, gyro_bias=(0.0, 0.0, 0.0), pixel_std=0.0,
                       gyro_std=0.0, accel_std=0.0)
    res = run_sliding_window(sc.scene, sc.gyro, sc.accel, sc.anchor_times, sc.initial_state, FusionConfig())
    assert ate(res.states, sc.truth) < 1e-9
    assert np.abs(res.bias.as_vector()).max() < 1e-9


def test_sliding_window_beats_dead_reckoning():
    sc = make_scenario(seed=1, duration=3.0)
    cfg = FusionConfig(noise=NoiseModel.from_std(1e-4, 1e-3))
    est = run_sliding_window(sc.scene, sc.gyro, sc.accel, sc.anchor_times, sc.initial_state, cfg)
    dr = dead_reckon(sc.gyro, sc.accel, sc.anchor_times, sc.initial_state, cfg)
    assert est.objective_nonincreasing()
    assert ate(est.states, sc.truth) * 5 < ate(dr.states, sc.truth)
    assert len(est.traces) == len(sc.anchor_times) - 1
    assert est.bias_history.shape == (len(sc.anchor_times) - 1, 6)
    np.testing.assert_array_equal(est.times, sc.anchor_times)


def test_discrete_pseudo_weight_runs():
    sc = make_scenario(seed=4, duration=1.5)
    res = run_sliding_window(sc.scene, sc.gyro, sc.accel, sc.anchor_times, sc.initial_state,
                             FusionConfig(pseudo_weight="discrete", noise=NoiseModel.from_std(1e-4, 1e-3)))
    assert res.objective_nonincreasing()


@pytest.mark.parametrize("kwargs", [dict(window=1), dict(pseudo_weight="cov"), dict(bias_prior_std=(0.0, 1.0))])
def test_config_validation(kwargs):
    with pytest.raises(InvalidInputError):
        FusionConfig(**kwargs)


def test_run_validation(scenario):
    sc = scenario
    with pytest.raises(InvalidInputError):
        run_sliding_window(sc.scene, sc.gyro, sc.accel, [0.0], sc.initial_state)
    late = NavState(np.eye(3), np.zeros(3), np.zeros(3), t=0.1)
    with pytest.raises(WindowMismatchError):
        run_sliding_window(sc.scene, sc.gyro, sc.accel, sc.anchor_times, late)


def test_value_type_validation():
    with pytest.raises(InvalidInputError):
        NavState(2 * np.eye(3), np.zeros(3), np.zeros(3))
    with pytest.raises(InvalidInputError):
        ProjectionObs(0.0, 0, [1.0, 2.0], std=0.0)
    with pytest.raises(InvalidInputError):
        Scene(np.zeros((2, 3)), Intrinsics(), (ProjectionObs(0.0, 5, [1.0, 2.0]),))


def test_kernels_match_python_fallback(rng):
    c, dc = random_rotation(rng), random_rotation(rng, 0.5)
    r, v, dr, dv = rng.standard_normal((4, 3))
    jac = 0.1 * rng.standard_normal((5, 3, 3))
    dbg, dba = 1e-3 * rng.standard_normal((2, 3))
    lm = c @ (dc @ np.array([0.2, -0.1, 5.0])) + r
    intr = Intrinsics().as_array()
    args = (c, r, v, 0.2, dc, dr, jac, dbg, dba, lm, intr, GRAVITY.copy())
    for a, b in zip(project_one(*args), python_impl(project_one)(*args)):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
    cj = random_rotation(rng)
    args = (c, r, v, cj, dr, dv, 0.3, dc, dv, dr, jac, dbg, dba, GRAVITY.copy())
    for a, b in zip(preint_factor(*args), python_impl(preint_factor)(*args)):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_scene_and_trajectory_csv(tmp_path, scenario):
    sc = scenario
    lm, ob = tmp_path / "lm.csv", tmp_path / "obs.csv"
    write_scene_csv(lm, ob, sc.scene, ["seed=3"])
    back = read_scene_csv(lm, ob)
    np.testing.assert_array_equal(back.landmarks, sc.scene.landmarks)
    assert [o.t for o in back.observations] == [o.t for o in sc.scene.observations]
    traj = tmp_path / "traj.csv"
    write_trajectory_csv(traj, sc.truth)
    rows = np.loadtxt(traj, delimiter=",", skiprows=1)
    assert rows.shape == (len(sc.truth), 8)
    np.testing.assert_allclose(np.linalg.norm(rows[:, 1:5], axis=1), 1.0)
    with pytest.raises(InvalidInputError):
        read_scene_csv(ob, lm)
