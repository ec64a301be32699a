"""Expected-loss analytics under diagonal rescaling of the mixing matrix.

For iid data the expected quadratic-form objective splits into a signal part
driven by the population moment vector and a noise part driven by the moment
covariance.  Because rescaling the mixing matrix transforms every moment
condition by a known affine map, the noise term at a rescaled matrix B*diag(d)
decomposes exactly into three pieces computed from quantities at the base
matrix alone: a quadratic piece in the scale multipliers, a cross piece
involving the population moment vector, and a constant piece involving only
the centering constants.  The gradient of the noise term at the identity
scaling is distribution-free under optimal weighting, which is what makes
plain quadratic-form objectives systematically rewarding a shrinking of the
innovations and motivates the scale-updated weighting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from homent.moments import MomentSystem
from homent.svar import scale_multipliers

__all__ = [
    "NoiseDecomposition",
    "expected_loss_split",
    "noise_decomposition",
    "noise_gradient_at_identity",
    "scaled_population_moments",
    "scale_updated_weight",
]


def _as_weight(W: np.ndarray, K: int) -> np.ndarray:
    W = np.asarray(W, dtype=np.float64)
    if W.shape != (K, K):
        raise ValueError(f"weighting matrix must have shape ({K}, {K}); got {W.shape}")
    if not np.allclose(W, W.T, rtol=1e-10, atol=1e-12):
        raise ValueError("weighting matrix must be symmetric")
    return W


def _as_vector(x: np.ndarray, K: int, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (K,):
        raise ValueError(f"{name} must have shape ({K},); got {x.shape}")
    return x


def _as_scale_vector(D: np.ndarray, n: int) -> np.ndarray:
    """Accept a positive diagonal either as a length-n vector or an n-by-n
    diagonal matrix and return the diagonal entries."""
    D = np.asarray(D, dtype=np.float64)
    if D.ndim == 2:
        if D.shape != (n, n):
            raise ValueError(f"scaling matrix must have shape ({n}, {n}); got {D.shape}")
        off = D - np.diag(np.diag(D))
        if np.any(off != 0.0):
            raise ValueError("scaling matrix must be diagonal")
        D = np.diag(D)
    if D.shape != (n,):
        raise ValueError(f"scaling must be a length-{n} diagonal; got shape {D.shape}")
    if np.any(D <= 0.0) or not np.all(np.isfinite(D)):
        raise ValueError("scaling entries must be positive and finite")
    return D


def expected_loss_split(
    W: np.ndarray,
    B: np.ndarray,
    S_of_B: np.ndarray,
    Ef: np.ndarray,
    T: int,
) -> tuple[float, float]:
    """Split the expected objective E[g' W g] into signal and noise.

    ``S_of_B`` is the uncentered population second-moment matrix E[f f'] of
    the moment conditions at ``B`` and ``Ef`` their population mean, so for
    iid data E[g' W g] = (1 - 1/T) Ef' W Ef + trace(W S)/T.  Returns the pair
    ``(signal, noise)`` whose sum is the expected objective.  ``B`` is the
    evaluation point the inputs were computed at; it is validated for shape
    only.
    """
    if T < 1:
        raise ValueError(f"sample size must be >= 1; got {T}")
    B = np.asarray(B, dtype=np.float64)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValueError(f"mixing matrix must be square; got shape {B.shape}")
    K = np.asarray(S_of_B).shape[0]
    W = _as_weight(W, K)
    S = _as_weight(S_of_B, K)
    Ef = _as_vector(Ef, K, "population moment vector")
    signal = (1.0 - 1.0 / T) * float(Ef @ W @ Ef)
    noise = float(np.trace(W @ S)) / T
    return signal, noise


@dataclass(frozen=True)
class NoiseDecomposition:
    """Exact three-term split of the noise term at a rescaled mixing matrix.

    With per-condition reciprocal multipliers dt_k = 1/prod_i d_i^{m_{k,i}},
    centering constants c, and (S, Ef) the uncentered second-moment matrix and
    mean of the conditions at the base matrix:

    - ``term_quadratic``: trace(diag(dt) W diag(dt) S) / T
    - ``term_cross``:     2 (c*(dt-1))' W (dt*Ef) / T
    - ``term_constant``:  (c*(dt-1))' W (c*(dt-1)) / T

    Their sum equals trace(W S(B diag(d)))/T exactly, where S(B diag(d)) is
    the uncentered second-moment matrix at the rescaled matrix.
    """

    term_quadratic: float
    term_cross: float
    term_constant: float

    @property
    def total(self) -> float:
        return self.term_quadratic + self.term_cross + self.term_constant


def noise_decomposition(
    W: np.ndarray,
    B_tilde: np.ndarray,
    D: np.ndarray,
    sys: MomentSystem,
    S_of_Btilde: np.ndarray,
    Ef_at_Btilde: np.ndarray,
    T: int,
) -> NoiseDecomposition:
    """Noise term of the expected objective at ``B_tilde @ diag(D)``.

    ``S_of_Btilde`` and ``Ef_at_Btilde`` are the uncentered second-moment
    matrix and mean of the moment conditions at the *base* matrix
    ``B_tilde``; the affine transformation of each condition under column
    rescaling turns trace(W S(B_tilde diag(D)))/T into the three exact terms
    of :class:`NoiseDecomposition` without ever evaluating moments at the
    rescaled matrix.
    """
    if T < 1:
        raise ValueError(f"sample size must be >= 1; got {T}")
    B_tilde = np.asarray(B_tilde, dtype=np.float64)
    if B_tilde.shape != (sys.n, sys.n):
        raise ValueError(
            f"base mixing matrix must have shape ({sys.n}, {sys.n}); got {B_tilde.shape}"
        )
    d = _as_scale_vector(D, sys.n)
    K = sys.size
    W = _as_weight(W, K)
    S = _as_weight(S_of_Btilde, K)
    Ef = _as_vector(Ef_at_Btilde, K, "population moment vector")

    dt = 1.0 / scale_multipliers(sys, d)
    shifted = sys.constants * (dt - 1.0)
    quad = float(np.einsum("k,kl,l,lk->", dt, W, dt, S)) / T
    cross = 2.0 * float(shifted @ W @ (dt * Ef)) / T
    const = float(shifted @ W @ shifted) / T
    return NoiseDecomposition(quad, cross, const)


def noise_gradient_at_identity(sys: MomentSystem, T: int = 1) -> np.ndarray:
    """Derivative of the noise term in each scaling direction at D = I.

    Under optimal weighting (W equal to the inverse of the moment covariance
    at the evaluation point) the derivative with respect to d_l at the
    identity scaling is exactly -(2/T) * sum_k m_{k,l}, independent of the
    shock distributions.  Every entry is strictly negative: enlarging any
    column scale always lowers the noise term, which is the mechanism behind
    the downward scale bias of plain quadratic-form objectives.
    """
    if T < 1:
        raise ValueError(f"sample size must be >= 1; got {T}")
    return -2.0 * sys.exponent_matrix.sum(axis=0).astype(np.float64) / T


def scaled_population_moments(
    sys: MomentSystem,
    d: np.ndarray,
    Ef: np.ndarray,
    S: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Population mean and uncentered second moment after column rescaling.

    Given the mean ``Ef`` and uncentered second-moment matrix ``S`` of the
    moment conditions at a base matrix, returns the exact corresponding pair
    at the rescaled matrix B diag(d): each condition maps through
    f -> f/s_k + c_k (1/s_k - 1) with s_k the condition's scale multiplier.
    """
    d = _as_scale_vector(d, sys.n)
    K = sys.size
    Ef = _as_vector(Ef, K, "population moment vector")
    S = _as_weight(S, K)
    dt = 1.0 / scale_multipliers(sys, d)
    shifted = sys.constants * (dt - 1.0)
    mean_scaled = dt * Ef + shifted
    second = (
        (dt[:, None] * S * dt[None, :])
        + np.outer(dt * Ef, shifted)
        + np.outer(shifted, dt * Ef)
        + np.outer(shifted, shifted)
    )
    return mean_scaled, second


def scale_updated_weight(sys: MomentSystem, d_hat: np.ndarray, W_base: np.ndarray) -> np.ndarray:
    """Compose a base weighting with the per-condition scale multipliers.

    ``d_hat`` holds per-series scale factors (for estimation, the inverse
    root-mean-square innovation scales); the effective weighting is
    diag(s) W diag(s) with s_k = prod_i d_hat_i^{m_{k,i}}.  Under this
    composition the noise term stops rewarding a uniform shrinking of the
    innovations: its value at any rescaled matrix is the value at the base
    matrix plus a positive-semidefinite penalty.
    """
    s = scale_multipliers(sys, _as_scale_vector(d_hat, sys.n))
    W = _as_weight(W_base, sys.size)
    return s[:, None] * W * s[None, :]
