"""Innovation algebra tests: moment values, Jacobian, scaling identity."""

from __future__ import annotations

import numpy as np
import numpy.testing as npt
import pytest

from homent.moments import MomentSystem, full_system
from homent.svar import (
    DegenerateInnovationError,
    MomentWorkspace,
    SingularMatrixError,
    coef_position,
    innovations,
    inverse_mixing,
    moment_jacobian,
    moment_values,
    moments_after_scaling,
    sample_moments,
    scale_diagonal,
    scale_multipliers,
    unvec,
    vec,
)


def _naive_sample_moments(B, U, sys):
    """Loop-based oracle for the sample moment vector."""
    E = np.linalg.solve(B, U.T).T
    out = np.empty(sys.size)
    for k, ix in enumerate(sys):
        prod = np.ones(U.shape[0])
        for i, m in enumerate(ix.exponents):
            prod *= E[:, i] ** m
        out[k] = prod.mean() - ix.constant
    return out


def _random_panel(rng, n, T=64):
    # Mildly non-Gaussian data; any panel works for algebraic identities.
    eps = rng.standard_normal((T, n))
    eps = eps + 0.3 * (eps**2 - 1.0)
    B0 = np.eye(n) + 0.4 * rng.standard_normal((n, n))
    return eps @ B0.T


def test_innovations_identity_and_diagonal():
    rng = np.random.default_rng(0)
    U = rng.standard_normal((40, 3))
    npt.assert_allclose(innovations(np.eye(3), U), U, rtol=1e-14)
    d = np.array([2.0, 0.5, 4.0])
    npt.assert_allclose(innovations(np.diag(d), U), U / d, rtol=1e-13)


def test_innovations_roundtrip():
    rng = np.random.default_rng(1)
    eps = rng.standard_normal((200, 4))
    B = np.eye(4) + 0.3 * rng.standard_normal((4, 4))
    npt.assert_allclose(innovations(B, eps @ B.T), eps, atol=1e-10)


def test_sample_moments_single_observation():
    sys2 = full_system(2)
    U = np.array([[1.0, 2.0]])
    g = sample_moments(np.eye(2), U, sys2)
    expected = {
        (0, 2): 4.0 - 1.0,
        (1, 1): 2.0,
        (2, 0): 1.0 - 1.0,
        (1, 2): 4.0,
        (2, 1): 2.0,
        (1, 3): 8.0,
        (2, 2): 4.0 - 1.0,
        (3, 1): 2.0,
    }
    for exps, val in expected.items():
        assert g[sys2.row_of(exps)] == pytest.approx(val, abs=1e-14)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_sample_moments_match_naive_oracle(n):
    rng = np.random.default_rng(100 + n)
    U = _random_panel(rng, n, T=171)
    B = np.eye(n) + 0.2 * rng.standard_normal((n, n))
    sys = full_system(n)
    npt.assert_allclose(sample_moments(B, U, sys), _naive_sample_moments(B, U, sys),
                        rtol=1e-10, atol=1e-12)


def test_chunked_accumulation_matches_single_chunk():
    rng = np.random.default_rng(7)
    U = _random_panel(rng, 3, T=1000)
    sys = full_system(3)
    B = np.eye(3) + 0.1 * rng.standard_normal((3, 3))
    whole = MomentWorkspace(U, sys, chunk_rows=10**6).statistics(
        B, need_jacobian=True, need_outer=True, max_table_order=6)
    split = MomentWorkspace(U, sys, chunk_rows=97).statistics(
        B, need_jacobian=True, need_outer=True, max_table_order=6)
    for key in ("g", "raw", "second", "jacobian", "outer", "table"):
        npt.assert_allclose(split[key], whole[key], rtol=1e-11, atol=1e-13)


def test_repeated_evaluation_is_bit_identical():
    rng = np.random.default_rng(8)
    U = _random_panel(rng, 4, T=333)
    sys = full_system(4)
    B = np.eye(4) + 0.1 * rng.standard_normal((4, 4))
    a = MomentWorkspace(U, sys).statistics(B, need_jacobian=True)
    b = MomentWorkspace(U, sys).statistics(B, need_jacobian=True)
    assert np.array_equal(a["g"], b["g"])
    assert np.array_equal(a["jacobian"], b["jacobian"])


def test_jacobian_one_dimensional_closed_form():
    # n = 1: g(b) = mean(u^2)/b^2 - 1, so dg/db = -2 mean(u^2)/b^3.
    # With mean(u^2) = 1 exactly, the derivative at b = 1 is exactly -2.
    sys1 = MomentSystem(1, (2,))
    U = np.array([[1.0], [-1.0], [1.0], [-1.0]])
    J = moment_jacobian(np.array([[1.0]]), U, sys1)
    assert J.shape == (1, 1)
    assert J[0, 0] == pytest.approx(-2.0, abs=1e-14)
    J2 = moment_jacobian(np.array([[2.0]]), U, sys1)
    assert J2[0, 0] == pytest.approx(-2.0 / 8.0, rel=1e-13)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_jacobian_matches_central_differences(n):
    rng = np.random.default_rng(200 + n)
    U = _random_panel(rng, n, T=157)
    sys = full_system(n)
    B = np.eye(n) + 0.25 * rng.standard_normal((n, n))
    J = moment_jacobian(B, U, sys)
    h = 1e-6
    beta = vec(B)
    for c in range(beta.size):
        step = np.zeros_like(beta)
        step[c] = h
        g_plus = sample_moments(unvec(beta + step, n), U, sys)
        g_minus = sample_moments(unvec(beta - step, n), U, sys)
        fd = (g_plus - g_minus) / (2.0 * h)
        npt.assert_allclose(J[:, c], fd, rtol=1e-5, atol=1e-7)


def test_jacobian_column_layout_is_column_major():
    # Perturbing B[p, q] must only match the Jacobian column q*n + p.
    rng = np.random.default_rng(9)
    n = 3
    U = _random_panel(rng, n, T=80)
    sys = full_system(n)
    B = np.eye(n) + 0.2 * rng.standard_normal((n, n))
    J = moment_jacobian(B, U, sys)
    h = 1e-7
    p, q = 2, 0
    Bp = B.copy()
    Bp[p, q] += h
    fd = (sample_moments(Bp, U, sys) - sample_moments(B, U, sys)) / h
    npt.assert_allclose(J[:, q * n + p], fd, rtol=2e-4, atol=1e-5)


def test_scale_diagonal_and_multipliers():
    E = np.array([[2.0, 1.0], [-2.0, -1.0]])
    d = scale_diagonal(E)
    npt.assert_allclose(d, [0.5, 1.0])
    sys2 = full_system(2)
    mult = scale_multipliers(sys2, np.array([2.0, 3.0]))
    assert mult[sys2.row_of((2, 0))] == pytest.approx(4.0)
    assert mult[sys2.row_of((1, 1))] == pytest.approx(6.0)
    assert mult[sys2.row_of((1, 3))] == pytest.approx(54.0)
    with pytest.raises(DegenerateInnovationError):
        scale_diagonal(np.zeros((5, 2)))


@pytest.mark.parametrize("n", [2, 4])
def test_scaling_identity_is_exact(n):
    # f(B diag(d), u) = f(B, u)/s + c (1/s - 1), observation by observation.
    rng = np.random.default_rng(300 + n)
    U = _random_panel(rng, n, T=50)
    sys = full_system(n)
    B = np.eye(n) + 0.2 * rng.standard_normal((n, n))
    for _ in range(10):
        d = np.exp(0.4 * rng.standard_normal(n))
        F_base = moment_values(B, U, sys)
        F_scaled = moment_values(B @ np.diag(d), U, sys)
        npt.assert_allclose(F_scaled, moments_after_scaling(sys, d, F_base),
                            rtol=1e-10, atol=1e-12)
        g_scaled = sample_moments(B @ np.diag(d), U, sys)
        npt.assert_allclose(g_scaled,
                            moments_after_scaling(sys, d, sample_moments(B, U, sys)),
                            rtol=1e-10, atol=1e-12)


def test_standardized_covariance_row_equals_correlation():
    # After multiplying by the scale factors, the (1,1,0,...) row is the
    # sample correlation of the first two innovation series.
    rng = np.random.default_rng(11)
    n = 3
    U = _random_panel(rng, n, T=400)
    sys = full_system(n)
    B = np.eye(n) + 0.15 * rng.standard_normal((n, n))
    E = innovations(B, U)
    d = scale_diagonal(E)
    g = sample_moments(B, U, sys)
    row = sys.row_of((1, 1, 0))
    standardized = scale_multipliers(sys, d)[row] * g[row]
    x, y = E[:, 0], E[:, 1]
    corr = np.mean(x * y) / np.sqrt(np.mean(x * x) * np.mean(y * y))
    assert standardized == pytest.approx(corr, rel=1e-12)


def test_empirical_table_statistics():
    rng = np.random.default_rng(12)
    U = _random_panel(rng, 2, T=500)
    sys = full_system(2)
    B = np.eye(2)
    stats = MomentWorkspace(U, sys).statistics(B, max_table_order=8)
    for r in range(9):
        npt.assert_allclose(stats["table"][:, r], np.mean(U**r, axis=0),
                            rtol=1e-11, atol=1e-13)
    npt.assert_allclose(stats["second"], U.T @ U / U.shape[0], rtol=1e-12)


def test_outer_product_statistic():
    rng = np.random.default_rng(13)
    U = _random_panel(rng, 2, T=300)
    sys = full_system(2)
    B = np.eye(2) + 0.1 * rng.standard_normal((2, 2))
    stats = MomentWorkspace(U, sys).statistics(B, need_outer=True)
    F = moment_values(B, U, sys)
    npt.assert_allclose(stats["outer"], F.T @ F / U.shape[0], rtol=1e-11, atol=1e-13)


def test_singular_matrix_raises():
    U = np.ones((10, 2))
    with pytest.raises(SingularMatrixError):
        innovations(np.array([[1.0, 1.0], [1.0, 1.0]]), U)
    with pytest.raises(SingularMatrixError):
        inverse_mixing(np.array([[1.0, 0.0], [0.0, 1e-15]]))


def test_vec_layout_and_coef_positions():
    B = np.array([[1.0, 2.0], [3.0, 4.0]])
    npt.assert_allclose(vec(B), [1.0, 3.0, 2.0, 4.0])
    npt.assert_allclose(unvec(vec(B), 2), B)
    assert coef_position(4, 1, 4) == 3
    assert coef_position(1, 4, 4) == 12
    assert coef_position(1, 1, 2) == 0
    assert coef_position(2, 2, 2) == 3
    with pytest.raises(ValueError):
        coef_position(5, 1, 4)


def test_shape_validation():
    sys = full_system(2)
    with pytest.raises(ValueError):
        sample_moments(np.eye(2), np.ones((10, 3)), sys)
    with pytest.raises(ValueError):
        sample_moments(np.eye(3), np.ones((10, 3)), sys)
    with pytest.raises(ValueError):
        innovations(np.ones((2, 3)), np.ones((10, 2)))
