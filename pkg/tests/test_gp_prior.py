import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad_vec
from scipy.linalg import expm

from gpo import gp_prior
from gpo._jit import python_impl
from gpo.errors import InvalidInputError, SingularSystemError
from gpo.gp_prior import GpHyper, Order, conditional_cov, interp_coeffs, prior_information, process_cov, transition


def _generator(order):
    n = int(order)
    f = np.kron(np.eye(n, k=1), np.eye(3))
    ell = np.kron(np.eye(n)[:, -1:], np.eye(3))
    return f, ell


def _psd(rng):
    a = rng.standard_normal((3, 3))
    return a @ a.T + 0.5 * np.eye(3)


def _oracle_q(dt, psd, order):
    f, ell = _generator(order)
    return quad_vec(lambda s: expm(f * s) @ ell @ psd @ ell.T @ expm(f * s).T, 0.0, dt, epsabs=1e-14)[0]


@pytest.mark.parametrize("order", [Order.WNOA, Order.WNOJ])
@pytest.mark.parametrize("dt", [1e-3, 0.05, 0.4, 2.0])
def test_transition_is_matrix_exponential(order, dt):
    f, _ = _generator(order)
    np.testing.assert_allclose(transition(dt, order), expm(f * dt), atol=1e-14)


@pytest.mark.parametrize("order", [Order.WNOA, Order.WNOJ])
@pytest.mark.parametrize("dt", [0.01, 0.3, 1.5])
def test_process_cov_matches_quadrature(order, dt, rng):
    psd = _psd(rng)
    expected = _oracle_q(dt, psd, order)
    np.testing.assert_allclose(process_cov(dt, psd, order), expected, rtol=1e-9, atol=1e-15)


@pytest.mark.parametrize("order", ["wnoa", "wnoj"])
def test_prior_information_inverts_process_cov(order):
    dt = 0.05
    info = prior_information(dt, 100.0, order)
    np.testing.assert_allclose(info @ process_cov(dt, 100.0, order), np.eye(info.shape[0]), atol=1e-8)


def _oracle_interp(tau, t0, t1, psd, order):
    # condition x(tau) on x(t1) by chaining the two sub-intervals
    phi1 = transition(tau - t0, order)
    phi2 = transition(t1 - tau, order)
    q1 = _oracle_q(tau - t0, psd, order)
    q2 = _oracle_q(t1 - tau, psd, order)
    s = phi2 @ q1 @ phi2.T + q2
    gain = q1 @ phi2.T @ np.linalg.inv(s)
    psi = gain
    lam = phi1 - gain @ phi2 @ phi1
    cov = q1 - gain @ phi2 @ q1
    return lam, psi, cov


@pytest.mark.parametrize("order", [Order.WNOA, Order.WNOJ])
@pytest.mark.parametrize("frac", [0.1, 0.5, 0.93])
def test_interpolation_matches_gaussian_conditioning(order, frac, rng):
    psd = _psd(rng)
    t0, t1 = 0.2, 0.25
    tau = t0 + frac * (t1 - t0)
    lam, psi = interp_coeffs(tau, t0, t1, psd, order)
    lam_o, psi_o, cov_o = _oracle_interp(tau, t0, t1, psd, order)
    np.testing.assert_allclose(lam, lam_o, atol=1e-7)
    np.testing.assert_allclose(psi, psi_o, atol=1e-7)
    cov = conditional_cov(tau, t0, t1, psd, order)
    np.testing.assert_allclose(cov, cov_o, rtol=1e-5, atol=1e-14 * np.abs(cov_o).max())


@given(st.floats(0.0, 1.0), st.sampled_from([2, 3]))
def test_interpolation_independent_of_psd(frac, n):
    tau = 0.1 * frac
    a = interp_coeffs(tau, 0.0, 0.1, 1.0, n)
    b = interp_coeffs(tau, 0.0, 0.1, np.diag([1e-2, 3.0, 1e4]), n)
    np.testing.assert_allclose(a[0], b[0], atol=1e-8)
    np.testing.assert_allclose(a[1], b[1], atol=1e-8)


@pytest.mark.parametrize("n", [2, 3])
def test_endpoints_reproduce_knots(n):
    lam, psi = interp_coeffs(0.0, 0.0, 0.1, 1.0, n)
    np.testing.assert_array_equal(lam, np.eye(3 * n))
    np.testing.assert_array_equal(psi, np.zeros((3 * n, 3 * n)))
    lam, psi = interp_coeffs(0.1, 0.0, 0.1, 1.0, n)
    np.testing.assert_array_equal(psi, np.eye(3 * n))
    np.testing.assert_allclose(conditional_cov(0.1, 0.0, 0.1, 1.0, n), 0.0, atol=1e-18)


@pytest.mark.parametrize("n", [2, 3])
def test_interpolation_is_exact_for_polynomials(n):
    # the prior mean space is polynomials of degree n-1; they are reproduced exactly
    coeffs = np.array([0.3, -1.2, 2.5])[:n]

    def state(t):
        derivs = [np.polyval(np.polyder(coeffs[::-1], m), t) if m else np.polyval(coeffs[::-1], t)
                  for m in range(n)]
        return np.kron(np.array(derivs), np.ones(3))

    lam, psi = interp_coeffs(0.137, 0.1, 0.2, 1.0, n)
    np.testing.assert_allclose(lam @ state(0.1) + psi @ state(0.2), state(0.137), atol=1e-10)


@pytest.mark.parametrize("s", [0.0, 0.013, 0.05, 0.1])
@pytest.mark.parametrize("n", [2, 3])
def test_scalar_kernels_match_full_matrices(s, n):
    lam_s, psi_s = gp_prior.scalar_coeffs(s, 0.1, n)
    lam, psi = interp_coeffs(s, 0.0, 0.1, 1.0, n)
    np.testing.assert_allclose(np.kron(lam_s, np.eye(3)), lam, atol=1e-10)
    np.testing.assert_allclose(np.kron(psi_s, np.eye(3)), psi, atol=1e-10)
    np.testing.assert_allclose(np.kron(gp_prior.scalar_conditional_cov(s, 0.1, n), np.eye(3)),
                               conditional_cov(s, 0.0, 0.1, 1.0, n), atol=1e-14)
    py = python_impl(gp_prior.scalar_coeffs)(s, 0.1, n)
    np.testing.assert_allclose(py[0], lam_s, atol=1e-15)


def test_conditional_cov_is_psd(rng):
    for tau in np.linspace(0.0, 0.05, 11):
        for n in (2, 3):
            ev = np.linalg.eigvalsh(conditional_cov(tau, 0.0, 0.05, _psd(rng), n))
            assert ev.min() >= -1e-18


def test_invalid_inputs():
    with pytest.raises(InvalidInputError):
        transition(-1.0, 2)
    with pytest.raises(InvalidInputError):
        interp_coeffs(0.2, 0.0, 0.1, 1.0, 2)
    with pytest.raises(InvalidInputError):
        interp_coeffs(0.0, 0.1, 0.1, 1.0, 2)
    with pytest.raises(InvalidInputError):
        process_cov(0.1, 1.0, "wnox")
    with pytest.raises(InvalidInputError):
        GpHyper(qc=np.zeros((3, 3)))
    with pytest.raises(InvalidInputError):
        GpHyper(qr=np.array([[1.0, 2.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]))


def test_ill_conditioned_prior_rejected():
    v = np.array([1.0, 1.0, 0.0])
    nearly_singular = np.outer(v, v) + 1e-15 * np.eye(3)
    with pytest.raises(SingularSystemError):
        interp_coeffs(0.05, 0.0, 0.1, nearly_singular, 3)


@pytest.mark.parametrize("dt", [1e-9, 1e-5, 1.0, 1e3])
def test_condition_check_is_time_scale_invariant(dt):
    lam, psi = interp_coeffs(0.5 * dt, 0.0, dt, 1.0, 3)
    assert np.all(np.isfinite(lam)) and np.all(np.isfinite(psi))


def test_hyper_scalars_are_isotropic():
    h = GpHyper(2.0, 5.0)
    np.testing.assert_array_equal(h.qc, 2.0 * np.eye(3))
    assert h == GpHyper(2.0 * np.eye(3), 5.0)
    assert not h.qc.flags.writeable
