"""Lag-recursion simulation and least-squares recovery."""

from __future__ import annotations

import numpy as np
import numpy.testing as npt
import pytest
from scipy import linalg as sla

from homent.dgps import preset, sample_panel
from homent.varmodel import (
    VarFit,
    VarSpec,
    companion_matrix,
    ols_var,
    simulate_var,
)

A1_4 = np.array(
    [
        [0.5, 0.0, 0.0, 0.0],
        [0.1, 0.1, 0.0, 0.0],
        [0.1, 0.1, 0.5, 0.0],
        [0.1, 0.1, 0.1, 0.5],
    ]
)
B0_4 = 10.0 * np.eye(4) + 5.0 * np.tril(np.ones((4, 4)), -1)


# ---------------------------------------------------------------------------
# specification and validation
# ---------------------------------------------------------------------------


def test_companion_matrix_single_lag_is_coefficient():
    npt.assert_array_equal(companion_matrix((A1_4,)), A1_4)


def test_companion_matrix_two_lags():
    A1 = np.array([[0.4, 0.1], [0.0, 0.3]])
    A2 = np.array([[0.1, 0.0], [0.05, 0.1]])
    C = companion_matrix((A1, A2))
    assert C.shape == (4, 4)
    npt.assert_array_equal(C[:2, :2], A1)
    npt.assert_array_equal(C[:2, 2:], A2)
    npt.assert_array_equal(C[2:, :2], np.eye(2))
    npt.assert_array_equal(C[2:, 2:], np.zeros((2, 2)))


def test_spec_properties():
    spec = VarSpec(coeffs=(A1_4,))
    assert spec.n == 4
    assert spec.lags == 1
    assert spec.spectral_radius == pytest.approx(
        np.max(np.abs(np.linalg.eigvals(A1_4)))
    )


def test_spec_rejects_nonstationary():
    with pytest.raises(ValueError, match="not stationary"):
        VarSpec(coeffs=(np.eye(2),))
    with pytest.raises(ValueError, match="not stationary"):
        VarSpec(coeffs=(1.2 * np.eye(2),))


def test_spec_rejects_bad_shapes():
    with pytest.raises(ValueError, match="at least one"):
        VarSpec(coeffs=())
    with pytest.raises(ValueError, match="must all be"):
        VarSpec(coeffs=(np.zeros((2, 2)), np.zeros((3, 3))))
    with pytest.raises(ValueError, match="intercept"):
        VarSpec(coeffs=(0.5 * np.eye(2),), intercept=np.zeros(3))


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------


def test_simulate_shapes_and_burn_in():
    spec = VarSpec(coeffs=(0.5 * np.eye(2),))
    U = np.random.default_rng(0).standard_normal((300, 2))
    Y = simulate_var(spec, U, burn_in=100)
    assert Y.shape == (200, 2)
    with pytest.raises(ValueError, match="burn_in"):
        simulate_var(spec, U[:50], burn_in=100)
    with pytest.raises(ValueError, match="nonnegative"):
        simulate_var(spec, U, burn_in=-1)
    with pytest.raises(ValueError, match="innovations must be"):
        simulate_var(spec, U[:, :1])


def test_simulate_recursion_hand_rolled():
    # Compare against an explicit scalar recursion with no burn-in.
    a = 0.6
    spec = VarSpec(coeffs=(np.array([[a]]),), intercept=np.array([0.3]))
    u = np.array([[1.0], [-0.5], [2.0]])
    Y = simulate_var(spec, u, burn_in=0)
    y0 = 0.3 + 1.0
    y1 = 0.3 + a * y0 - 0.5
    y2 = 0.3 + a * y1 + 2.0
    npt.assert_allclose(Y[:, 0], [y0, y1, y2], rtol=1e-12)


def test_simulate_burn_in_truncates_consistently():
    # Burn-in is a pure truncation of the same trajectory.
    spec = VarSpec(coeffs=(A1_4,))
    U = np.random.default_rng(1).standard_normal((500, 4))
    full = simulate_var(spec, U, burn_in=0)
    trimmed = simulate_var(spec, U, burn_in=200)
    npt.assert_array_equal(trimmed, full[200:])


def test_autocovariance_matches_lyapunov_solution():
    # Stationary second moments must satisfy G0 = A G0 A' + Sigma_u and
    # G1 = A G0; the discrete Lyapunov solver is an independent oracle.
    spec = VarSpec(coeffs=(A1_4,))
    T = 1_000_000
    eps = sample_panel([preset("mixture")] * 4, T + 200, seed=101)
    U = eps @ B0_4.T
    Y = simulate_var(spec, U, burn_in=200)
    sigma_u = B0_4 @ B0_4.T
    G0 = sla.solve_discrete_lyapunov(A1_4, sigma_u)
    G1 = A1_4 @ G0
    G0_hat = (Y.T @ Y) / T
    G1_hat = (Y[1:].T @ Y[:-1]) / (T - 1)
    assert np.linalg.norm(G0_hat - G0) / np.linalg.norm(G0) < 0.02
    assert np.linalg.norm(G1_hat - G1) / np.linalg.norm(G1) < 0.02


# ---------------------------------------------------------------------------
# least-squares recovery
# ---------------------------------------------------------------------------


def test_ols_recovers_var1_coefficients():
    spec = VarSpec(coeffs=(A1_4,))
    T = 200_000
    eps = sample_panel([preset("mixture")] * 4, T + 200, seed=55)
    U = eps @ B0_4.T
    Y = simulate_var(spec, U, burn_in=200)
    fit = ols_var(Y, lags=1)
    assert isinstance(fit, VarFit)
    assert fit.lags == 1 and fit.n == 4
    npt.assert_allclose(fit.coeffs[0], A1_4, atol=0.01)
    npt.assert_allclose(fit.intercept, 0.0, atol=0.5)
    assert fit.residuals.shape == (T - 1, 4)
    # residuals recover the innovations up to estimation error
    assert np.max(np.abs(fit.sigma_u - B0_4 @ B0_4.T)) < 2.0


def test_ols_recovers_var2_coefficients():
    A1 = np.array([[0.4, 0.1], [0.0, 0.3]])
    A2 = np.array([[0.15, 0.0], [0.05, 0.1]])
    spec = VarSpec(coeffs=(A1, A2))
    T = 200_000
    eps = sample_panel([preset("mixture")] * 2, T + 200, seed=56)
    Y = simulate_var(spec, eps, burn_in=200)
    fit = ols_var(Y, lags=2)
    npt.assert_allclose(fit.coeffs[0], A1, atol=0.01)
    npt.assert_allclose(fit.coeffs[1], A2, atol=0.01)


def test_ols_exact_on_noiseless_recursion():
    # After a single impulse the recursion y_t = A y_{t-1} holds exactly for
    # every regression row, so least squares recovers A with zero residuals.
    A1 = np.array([[0.5, 0.2], [0.1, 0.4]])
    spec = VarSpec(coeffs=(A1,))
    U = np.zeros((20, 2))
    U[0] = np.array([3.0, -2.0])
    Y = simulate_var(spec, U, burn_in=0)
    fit = ols_var(Y, lags=1, intercept=False)
    npt.assert_allclose(fit.coeffs[0], A1, atol=1e-8)
    npt.assert_allclose(fit.residuals, 0.0, atol=1e-8)


def test_ols_without_intercept_has_none():
    Y = np.random.default_rng(4).standard_normal((100, 2))
    fit = ols_var(Y, lags=1, intercept=False)
    assert fit.intercept is None


def test_ols_validation():
    Y = np.random.default_rng(5).standard_normal((30, 2))
    with pytest.raises(ValueError, match="lag order"):
        ols_var(Y, lags=0)
    with pytest.raises(ValueError, match="cannot support"):
        ols_var(Y[:5], lags=2)
    with pytest.raises(ValueError, match="2-D"):
        ols_var(Y[:, 0], lags=1)
