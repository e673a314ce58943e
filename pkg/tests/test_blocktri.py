import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gpo import blocktri
from gpo._jit import python_impl
from gpo.errors import SingularSystemError


def random_spd(rng, nb, n):
    """Random SPD block-tridiagonal system as a sum of banded outer products."""
    h = np.zeros((nb * n, nb * n))
    for k in range(nb - 1):
        a = rng.standard_normal((2 * n, 2 * n))
        h[k * n:(k + 2) * n, k * n:(k + 2) * n] += a @ a.T
    h += 0.1 * np.eye(nb * n)
    diag = np.stack([h[k * n:(k + 1) * n, k * n:(k + 1) * n] for k in range(nb)])
    upper = np.stack([h[k * n:(k + 1) * n, (k + 1) * n:(k + 2) * n] for k in range(nb - 1)])
    return h, diag, upper


@given(st.integers(2, 12), st.sampled_from([3, 6, 9]), st.integers(0, 10_000))
def test_solve_and_inverse_match_dense(nb, n, seed):
    rng = np.random.default_rng(seed)
    h, diag, upper = random_spd(rng, nb, n)
    np.testing.assert_array_equal(blocktri.to_dense(diag, upper), h)
    rhs = rng.standard_normal((nb, n))
    x, cov = blocktri.solve_system(diag, upper, rhs, want_cov=True)
    np.testing.assert_allclose(x.reshape(-1), np.linalg.solve(h, rhs.reshape(-1)), rtol=1e-8, atol=1e-10)
    hinv = np.linalg.inv(h)
    for k in range(nb):
        np.testing.assert_allclose(cov[k], hinv[k * n:(k + 1) * n, k * n:(k + 1) * n], rtol=1e-8, atol=1e-10)


def test_multiple_right_hand_sides(rng):
    h, diag, upper = random_spd(rng, 6, 6)
    rhs = rng.standard_normal((6, 6, 4))
    x = blocktri.solve_system(diag, upper, rhs)
    np.testing.assert_allclose(x.reshape(36, 4), np.linalg.solve(h, rhs.reshape(36, 4)), atol=1e-10)


def test_indefinite_system_raises(rng):
    _, diag, upper = random_spd(rng, 4, 3)
    diag = diag.copy()
    diag[2] = -np.eye(3)
    with pytest.raises(SingularSystemError, match="block 2"):
        blocktri.solve_system(diag, upper, np.ones((4, 3)))


def test_python_fallback_matches_compiled(rng):
    _, diag, upper = random_spd(rng, 5, 6)
    l_d, l_s, bad = blocktri.factor(diag, upper)
    p_d, p_s, p_bad = python_impl(blocktri.factor)(diag, upper)
    assert bad == p_bad == -1
    np.testing.assert_allclose(l_d, p_d, atol=1e-12)
    np.testing.assert_allclose(l_s, p_s, atol=1e-12)
    np.testing.assert_allclose(blocktri.diag_of_inverse(l_d, l_s), python_impl(blocktri.diag_of_inverse)(p_d, p_s),
                               atol=1e-12)
