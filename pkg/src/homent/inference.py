"""Asymptotic covariance assembly, confidence intervals, and Wald tests.

The estimators are quadratic-form minimizers, so the limiting covariance of
sqrt(T) (vec(B_hat) - vec(B0)) has the sandwich form M S M' with
M = (G' S^{-1} G)^{-1} G' W, where G is the moment Jacobian, S the moment
covariance, and W the weighting the estimator actually used.  When W equals
S^{-1} the sandwich collapses to (G' S^{-1} G)^{-1}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from homent.covariance import floored_inverse

__all__ = [
    "AsymptoticCovariance",
    "UnidentifiedModelError",
    "WaldTest",
    "asymptotic_covariance",
    "confidence_interval",
    "wald",
]

# Relative eigenvalue threshold below which the curvature matrix G'S^{-1}G is
# treated as exactly rank deficient (unidentified), rather than merely poorly
# conditioned (which flooring handles).
RANK_EPS = 1e-13


class UnidentifiedModelError(RuntimeError):
    """The moment Jacobian does not identify all coefficients."""


@dataclass(frozen=True)
class AsymptoticCovariance:
    """Limiting covariance of sqrt(T) (vec(B_hat) - vec(B0)).

    ``matrix`` is the n^2-by-n^2 sandwich; per-coefficient finite-sample
    variances are its diagonal divided by the sample size.
    """

    matrix: np.ndarray
    basis: str
    sample_size: int

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"covariance must be square; got shape {m.shape}")
        if self.sample_size < 1:
            raise ValueError(f"sample size must be >= 1; got {self.sample_size}")
        object.__setattr__(self, "matrix", m)

    def coefficient_variance(self, position: int) -> float:
        """Finite-sample variance of one vec(B) coefficient (diagonal / T)."""
        return float(self.matrix[position, position]) / self.sample_size


@dataclass(frozen=True)
class WaldTest:
    """Quadratic test of the affine restrictions R vec(B) = value."""

    restriction: np.ndarray
    value: np.ndarray
    statistic: float
    dof: int
    p_value: float
    floored: bool = False


def _psd_project(V: np.ndarray) -> np.ndarray:
    """Symmetrize and clip tiny negative eigenvalues from roundoff."""
    V = 0.5 * (V + V.T)
    lam, Q = np.linalg.eigh(V)
    if lam[0] >= 0.0:
        return V
    return (Q * np.clip(lam, 0.0, None)) @ Q.T


def asymptotic_covariance(
    G_hat: np.ndarray,
    S_hat: np.ndarray,
    W: np.ndarray,
    T: int,
    basis: str = "smi",
) -> AsymptoticCovariance:
    """Sandwich covariance M S M' with M = (G'S^{-1}G)^{-1} G' W.

    ``S_hat`` is floored-inverted, so poorly conditioned moment covariances
    yield large but finite variances; an exactly rank-deficient curvature
    matrix raises :class:`UnidentifiedModelError`.
    """
    G = np.asarray(G_hat, dtype=np.float64)
    S = np.asarray(S_hat, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    K, p = G.shape
    if S.shape != (K, K) or W.shape != (K, K):
        raise ValueError(
            f"S and W must be ({K}, {K}) to match the Jacobian; "
            f"got {S.shape} and {W.shape}"
        )
    if K < p:
        raise UnidentifiedModelError(
            f"{K} moment conditions cannot identify {p} coefficients"
        )
    Sinv = floored_inverse(S)
    curvature = G.T @ Sinv @ G
    curvature = 0.5 * (curvature + curvature.T)
    lam = np.linalg.eigvalsh(curvature)
    if not np.all(np.isfinite(lam)) or lam[0] <= RANK_EPS * max(lam[-1], 1.0):
        raise UnidentifiedModelError(
            "moment Jacobian is rank deficient; coefficients not identified"
        )
    M = np.linalg.solve(curvature, G.T @ W)
    V = _psd_project(M @ S @ M.T)
    return AsymptoticCovariance(matrix=V, basis=basis, sample_size=int(T))


def wald(
    R: np.ndarray,
    r: np.ndarray,
    beta_hat: np.ndarray,
    avar: AsymptoticCovariance | np.ndarray,
    T: int | None = None,
) -> WaldTest:
    """Wald test of H0: R vec(B) = r.

    ``statistic`` is T (R beta - r)' [R V R']^{-1} (R beta - r) with V the
    asymptotic covariance; the p-value comes from the chi-square distribution
    with one degree of freedom per restriction.  A singular restricted
    covariance R V R' is floored and the result flagged.
    """
    if isinstance(avar, AsymptoticCovariance):
        V = avar.matrix
        if T is None:
            T = avar.sample_size
    else:
        V = np.asarray(avar, dtype=np.float64)
        if T is None:
            raise ValueError("sample size T is required with a bare covariance matrix")
    R = np.atleast_2d(np.asarray(R, dtype=np.float64))
    r = np.atleast_1d(np.asarray(r, dtype=np.float64))
    beta = np.asarray(beta_hat, dtype=np.float64).reshape(-1)
    q, p = R.shape
    if p != beta.size or r.shape != (q,):
        raise ValueError(
            f"restriction shapes inconsistent: R {R.shape}, r {r.shape}, "
            f"beta length {beta.size}"
        )
    if np.linalg.matrix_rank(R) < q:
        raise ValueError("restriction matrix must have full row rank")
    diff = R @ beta - r
    RVR = R @ V @ R.T
    RVR = 0.5 * (RVR + RVR.T)
    lam = np.linalg.eigvalsh(RVR)
    floored = bool(lam[0] <= max(lam[-1], 1.0) * 1e-12)
    inv = floored_inverse(RVR)
    stat = float(T) * float(diff @ inv @ diff)
    p_value = float(stats.chi2.sf(stat, df=q))
    return WaldTest(
        restriction=R,
        value=r,
        statistic=max(stat, 0.0),
        dof=q,
        p_value=p_value,
        floored=floored,
    )


def confidence_interval(
    position: int,
    avar: AsymptoticCovariance | np.ndarray,
    beta_hat: np.ndarray,
    T: int | None = None,
    level: float = 0.90,
) -> tuple[float, float]:
    """Two-sided interval for one vec(B) coefficient.

    Half-width is the standard normal (1+level)/2 quantile times
    sqrt(V_ii / T); a zero variance yields the degenerate point interval.
    """
    if not 0.0 < level < 1.0:
        raise ValueError(f"confidence level must be in (0, 1); got {level}")
    if isinstance(avar, AsymptoticCovariance):
        V = avar.matrix
        if T is None:
            T = avar.sample_size
    else:
        V = np.asarray(avar, dtype=np.float64)
        if T is None:
            raise ValueError("sample size T is required with a bare covariance matrix")
    beta = np.asarray(beta_hat, dtype=np.float64).reshape(-1)
    center = float(beta[position])
    variance = float(V[position, position]) / float(T)
    if variance < 0.0:
        variance = 0.0
    half = float(stats.norm.ppf(0.5 * (1.0 + level))) * np.sqrt(variance)
    return center - half, center + half
