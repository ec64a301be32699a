"""Asymptotic covariance assembly, Wald tests, and confidence intervals."""

from __future__ import annotations

import numpy as np
import numpy.testing as npt
import pytest
from scipy import stats as sps

from homent.covariance import (
    UnivariateMomentTable,
    floored_inverse,
    g_smi,
    s_true,
)
from homent.dgps import preset, sample_panel
from homent.estimators import gmm_star
from homent.inference import (
    AsymptoticCovariance,
    UnidentifiedModelError,
    WaldTest,
    asymptotic_covariance,
    confidence_interval,
    wald,
)
from homent.moments import full_system
from homent.svar import MomentWorkspace, coef_position, vec

B0_2 = np.array([[10.0, 0.0], [5.0, 10.0]])
SYS2 = full_system(2)
MIX2 = tuple([preset("mixture")] * 2)


def _empirical_S_G(T: int = 2000, seed: int = 6):
    U = sample_panel(list(MIX2), T, seed=seed) @ B0_2.T
    ws = MomentWorkspace(U, SYS2)
    stats = ws.statistics(B0_2, need_jacobian=True, need_outer=True)
    return stats["outer"], stats["jacobian"]


# ---------------------------------------------------------------------------
# covariance assembly
# ---------------------------------------------------------------------------


def test_efficient_weighting_collapses_to_inverse_curvature():
    # With W = S^{-1} the sandwich M S M' reduces exactly to (G' S^{-1} G)^{-1}.
    S, G = _empirical_S_G()
    W = floored_inverse(S)
    V = asymptotic_covariance(G, S, W, T=2000, basis="si")
    direct = np.linalg.inv(G.T @ np.linalg.inv(S) @ G)
    npt.assert_allclose(V.matrix, direct, rtol=1e-9)
    assert V.basis == "si"
    assert V.sample_size == 2000


def test_sandwich_matches_direct_formula_for_any_weighting():
    S, G = _empirical_S_G()
    rng = np.random.default_rng(2)
    R = rng.normal(size=(SYS2.size, SYS2.size))
    W = R @ R.T + np.eye(SYS2.size)
    V = asymptotic_covariance(G, S, W, T=500)
    M = np.linalg.inv(G.T @ np.linalg.inv(S) @ G) @ (G.T @ W)
    npt.assert_allclose(V.matrix, M @ S @ M.T, rtol=1e-8)


def test_covariance_matrix_is_symmetric_psd():
    S, G = _empirical_S_G()
    V = asymptotic_covariance(G, S, floored_inverse(S), T=2000)
    npt.assert_allclose(V.matrix, V.matrix.T, rtol=1e-12)
    assert np.linalg.eigvalsh(V.matrix)[0] >= -1e-12


def test_scalar_chain_rule():
    # One condition, one coefficient: variance s / g^2 under the efficient
    # weighting, and s^3 w^2 / g^2 under an arbitrary scalar weighting.
    g, s, w = 0.7, 2.3, 0.4
    G = np.array([[g]])
    S = np.array([[s]])
    eff = asymptotic_covariance(G, S, np.array([[1.0 / s]]), T=10)
    assert eff.matrix[0, 0] == pytest.approx(s / g**2, rel=1e-12)
    gen = asymptotic_covariance(G, S, np.array([[w]]), T=10)
    assert gen.matrix[0, 0] == pytest.approx(s**3 * w**2 / g**2, rel=1e-12)


def test_coefficient_variance_divides_by_sample_size():
    V = AsymptoticCovariance(matrix=np.diag([4.0, 9.0]), basis="si", sample_size=100)
    assert V.coefficient_variance(0) == pytest.approx(0.04)
    assert V.coefficient_variance(1) == pytest.approx(0.09)


def test_covariance_validation():
    with pytest.raises(ValueError, match="square"):
        AsymptoticCovariance(matrix=np.ones((2, 3)), basis="si", sample_size=10)
    with pytest.raises(ValueError, match="sample size"):
        AsymptoticCovariance(matrix=np.eye(2), basis="si", sample_size=0)


def test_underidentified_by_count_raises():
    # Fewer conditions than coefficients can never identify the model.
    G = np.ones((3, 4))
    S = np.eye(3)
    with pytest.raises(UnidentifiedModelError):
        asymptotic_covariance(G, S, np.eye(3), T=100)


def test_rank_deficient_jacobian_raises():
    S, G = _empirical_S_G()
    G = G.copy()
    G[:, 1] = G[:, 0]  # two coefficients move the conditions identically
    with pytest.raises(UnidentifiedModelError):
        asymptotic_covariance(G, S, floored_inverse(S), T=2000)


def test_shape_mismatch_raises():
    S, G = _empirical_S_G()
    with pytest.raises(ValueError):
        asymptotic_covariance(G[:-1], S, floored_inverse(S), T=2000)


# ---------------------------------------------------------------------------
# Wald tests
# ---------------------------------------------------------------------------


def _toy_avar() -> AsymptoticCovariance:
    rng = np.random.default_rng(5)
    R = rng.normal(size=(4, 4))
    return AsymptoticCovariance(
        matrix=R @ R.T + 2.0 * np.eye(4), basis="si", sample_size=250
    )


def test_wald_zero_difference():
    V = _toy_avar()
    beta = np.array([1.0, -2.0, 3.0, 0.5])
    res = wald(np.eye(4), beta, beta, V)
    assert isinstance(res, WaldTest)
    assert res.statistic == 0.0
    assert res.p_value == 1.0
    assert res.dof == 4
    assert not res.floored


def test_wald_single_restriction_is_squared_t_ratio():
    V = _toy_avar()
    beta = np.array([1.0, -2.0, 3.0, 0.5])
    pos = 2
    r = 2.4
    R = np.zeros((1, 4))
    R[0, pos] = 1.0
    res = wald(R, np.array([r]), beta, V)
    t = (beta[pos] - r) / np.sqrt(V.matrix[pos, pos] / V.sample_size)
    assert res.statistic == pytest.approx(t**2, rel=1e-12)
    assert res.p_value == pytest.approx(2.0 * sps.norm.sf(abs(t)), rel=1e-9)
    assert res.dof == 1


def test_wald_invariant_under_row_operations():
    # Reparameterizing the restrictions by an invertible matrix L changes
    # (R, r) -> (L R, L r) but not the quadratic form.
    V = _toy_avar()
    beta = np.array([1.0, -2.0, 3.0, 0.5])
    R = np.array([[1.0, 0.0, -1.0, 0.0], [0.0, 2.0, 0.0, 1.0]])
    r = np.array([0.3, -0.1])
    L = np.array([[2.0, 1.0], [0.5, -1.0]])
    res1 = wald(R, r, beta, V)
    res2 = wald(L @ R, L @ r, beta, V)
    assert res2.statistic == pytest.approx(res1.statistic, rel=1e-9)
    assert res2.p_value == pytest.approx(res1.p_value, rel=1e-9)


def test_wald_accepts_bare_matrix_with_explicit_sample_size():
    V = _toy_avar()
    beta = np.array([1.0, -2.0, 3.0, 0.5])
    R = np.eye(4)
    r = np.zeros(4)
    res1 = wald(R, r, beta, V)
    res2 = wald(R, r, beta, V.matrix, T=V.sample_size)
    assert res2.statistic == pytest.approx(res1.statistic, rel=1e-12)
    with pytest.raises(ValueError, match="sample size T is required"):
        wald(R, r, beta, V.matrix)


def test_wald_flags_floored_restricted_covariance():
    # A rank-one covariance makes a two-restriction quadratic singular; the
    # statistic stays finite and the result is flagged.
    v = np.array([1.0, 2.0, 0.0, 0.0])
    V = np.outer(v, v)
    beta = np.array([0.3, 0.6, 0.0, 0.0])
    R = np.eye(4)[:2]
    res = wald(R, np.zeros(2), beta, V, T=100)
    assert res.floored
    assert np.isfinite(res.statistic)
    assert 0.0 <= res.p_value <= 1.0


def test_wald_input_validation():
    V = _toy_avar()
    beta = np.array([1.0, -2.0, 3.0, 0.5])
    with pytest.raises(ValueError, match="full row rank"):
        wald(np.array([[1.0, 0, 0, 0], [2.0, 0, 0, 0]]), np.zeros(2), beta, V)
    with pytest.raises(ValueError, match="inconsistent"):
        wald(np.eye(4), np.zeros(3), beta, V)
    with pytest.raises(ValueError, match="inconsistent"):
        wald(np.eye(5), np.zeros(5), beta, V)


# ---------------------------------------------------------------------------
# confidence intervals
# ---------------------------------------------------------------------------


def test_confidence_interval_quantile_math():
    V = AsymptoticCovariance(matrix=np.eye(2), basis="si", sample_size=1)
    beta = np.array([3.0, -1.0])
    lo, hi = confidence_interval(0, V, beta, level=0.90)
    assert (hi - lo) / 2.0 == pytest.approx(1.6448536269514722, rel=1e-12)
    assert (hi + lo) / 2.0 == pytest.approx(3.0, abs=1e-12)
    lo95, hi95 = confidence_interval(1, V, beta, level=0.95)
    assert (hi95 - lo95) / 2.0 == pytest.approx(1.959963984540054, rel=1e-12)
    assert (hi95 + lo95) / 2.0 == pytest.approx(-1.0, abs=1e-12)


def test_confidence_interval_scales_with_sample_size():
    V100 = AsymptoticCovariance(matrix=4.0 * np.eye(2), basis="si", sample_size=100)
    beta = np.array([0.0, 0.0])
    lo, hi = confidence_interval(0, V100, beta, level=0.90)
    assert hi == pytest.approx(1.6448536269514722 * 0.2, rel=1e-12)


def test_confidence_interval_degenerate_variance():
    V = AsymptoticCovariance(matrix=np.zeros((2, 2)), basis="si", sample_size=10)
    lo, hi = confidence_interval(0, V, np.array([1.5, 0.0]))
    assert lo == hi == 1.5


def test_confidence_interval_validation():
    V = AsymptoticCovariance(matrix=np.eye(2), basis="si", sample_size=10)
    with pytest.raises(ValueError, match="level"):
        confidence_interval(0, V, np.zeros(2), level=1.0)
    with pytest.raises(ValueError, match="sample size T is required"):
        confidence_interval(0, np.eye(2), np.zeros(2))


# ---------------------------------------------------------------------------
# Monte Carlo validation of the whole inference pipeline
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def mc_study():
    """Estimates, intervals, and true-null p-values over repeated panels."""
    T, reps = 4000, 400
    pos21 = coef_position(2, 1, 2)
    pos12 = coef_position(1, 2, 2)
    devs = np.empty((reps, 4))
    covered = 0
    pvals = np.empty(reps)
    R = np.zeros((1, 4))
    R[0, pos12] = 1.0
    for rep in range(reps):
        eps = sample_panel(list(MIX2), T, seed=(9000 + rep))
        res = gmm_star(eps @ B0_2.T, SYS2, MIX2)
        beta = vec(res.B_hat)
        devs[rep] = np.sqrt(T) * (beta - vec(B0_2))
        lo, hi = confidence_interval(pos21, res.avar, beta, level=0.90)
        covered += int(lo <= B0_2[1, 0] <= hi)
        pvals[rep] = wald(R, np.array([0.0]), beta, res.avar).p_value
    return {"devs": devs, "coverage": covered / reps, "pvals": pvals, "T": T}


def test_avar_matches_monte_carlo_dispersion(mc_study):
    # Population covariance at the truth versus the empirical covariance of
    # the scaled estimation errors.
    S0 = s_true(MIX2, SYS2)
    G0 = g_smi(B0_2, SYS2, UnivariateMomentTable.from_population(list(MIX2)))
    V = asymptotic_covariance(G0, S0, floored_inverse(S0), mc_study["T"], basis="true")
    emp = np.cov(mc_study["devs"].T)
    ratio = np.diag(emp) / np.diag(V.matrix)
    assert np.all(ratio > 0.75)
    assert np.all(ratio < 1.30)
    assert abs(float(np.mean(ratio)) - 1.0) < 0.15


def test_interval_coverage_near_nominal(mc_study):
    assert 0.85 <= mc_study["coverage"] <= 0.95


def test_true_null_p_values_are_uniform(mc_study):
    ks = sps.kstest(mc_study["pvals"], "uniform")
    assert ks.pvalue > 0.005
