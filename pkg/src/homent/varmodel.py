"""Reduced-form vector autoregression: simulation and least-squares fitting.

The estimators in this package operate on reduced-form innovations.  This
module provides the surrounding dynamics: simulating observables from lag
coefficients plus innovations, and recovering innovations from observables by
ordinary least squares.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DEFAULT_BURN_IN",
    "VarFit",
    "VarSpec",
    "companion_matrix",
    "ols_var",
    "simulate_var",
]

DEFAULT_BURN_IN = 200


def companion_matrix(coeffs: tuple[np.ndarray, ...]) -> np.ndarray:
    """Stacked first-order form of the lag polynomial.

    For lag matrices A_1..A_L of size n, returns the (nL)-by-(nL) matrix with
    [A_1 ... A_L] on top and a shifted identity below; its spectral radius
    determines stationarity.
    """
    L = len(coeffs)
    n = coeffs[0].shape[0]
    C = np.zeros((n * L, n * L))
    C[:n] = np.hstack(coeffs)
    if L > 1:
        C[n:, : n * (L - 1)] = np.eye(n * (L - 1))
    return C


@dataclass(frozen=True)
class VarSpec:
    """Lag coefficients (and optional intercept) of a stationary process."""

    coeffs: tuple[np.ndarray, ...]
    intercept: np.ndarray | None = None

    def __post_init__(self) -> None:
        if not self.coeffs:
            raise ValueError("at least one lag coefficient matrix is required")
        mats = tuple(np.asarray(A, dtype=np.float64) for A in self.coeffs)
        n = mats[0].shape[0]
        for A in mats:
            if A.shape != (n, n):
                raise ValueError(
                    f"lag matrices must all be {n}x{n}; got shapes "
                    f"{[m.shape for m in mats]}"
                )
        object.__setattr__(self, "coeffs", mats)
        if self.intercept is not None:
            c = np.asarray(self.intercept, dtype=np.float64).reshape(-1)
            if c.shape != (n,):
                raise ValueError(f"intercept must have length {n}; got {c.shape}")
            object.__setattr__(self, "intercept", c)
        rho = self.spectral_radius
        if rho >= 1.0:
            raise ValueError(
                f"lag polynomial is not stationary (spectral radius {rho:.4f})"
            )

    @property
    def n(self) -> int:
        return self.coeffs[0].shape[0]

    @property
    def lags(self) -> int:
        return len(self.coeffs)

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(companion_matrix(self.coeffs)))))


def simulate_var(
    spec: VarSpec, innovations: np.ndarray, burn_in: int = DEFAULT_BURN_IN
) -> np.ndarray:
    """Observables from a lag recursion driven by the given innovations.

    The recursion starts from zeros; the first ``burn_in`` rows are dropped so
    the output of ``T + burn_in`` innovation rows has length ``T`` and is
    effectively free of the initial condition.
    """
    U = np.asarray(innovations, dtype=np.float64)
    n = spec.n
    if U.ndim != 2 or U.shape[1] != n:
        raise ValueError(f"innovations must be (T, {n}); got shape {U.shape}")
    if burn_in < 0:
        raise ValueError(f"burn-in must be nonnegative; got {burn_in}")
    total = U.shape[0]
    if total <= burn_in:
        raise ValueError(
            f"need more than burn_in={burn_in} innovation rows; got {total}"
        )
    L = spec.lags
    c = spec.intercept if spec.intercept is not None else np.zeros(n)
    Y = np.zeros((total + L, n))
    for t in range(total):
        acc = c + U[t]
        for lag, A in enumerate(spec.coeffs, start=1):
            acc = acc + A @ Y[t + L - lag]
        Y[t + L] = acc
    return Y[L + burn_in :]


@dataclass(frozen=True)
class VarFit:
    """Least-squares estimates and residuals of a lag regression."""

    coeffs: tuple[np.ndarray, ...]
    intercept: np.ndarray | None
    residuals: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.coeffs[0].shape[0]

    @property
    def lags(self) -> int:
        return len(self.coeffs)

    @property
    def sigma_u(self) -> np.ndarray:
        """Uncentered second-moment matrix of the residuals."""
        U = self.residuals
        return (U.T @ U) / U.shape[0]


def ols_var(Y: np.ndarray, lags: int, intercept: bool = True) -> VarFit:
    """Regress each observable on ``lags`` of all observables.

    Returns the fitted lag matrices and the residual panel (the reduced-form
    innovations used by the estimators); the first ``lags`` rows of ``Y`` are
    consumed as initial conditions.
    """
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2:
        raise ValueError(f"observables must be 2-D; got shape {Y.shape}")
    T, n = Y.shape
    if lags < 1:
        raise ValueError(f"lag order must be >= 1; got {lags}")
    k = n * lags + int(intercept)
    if T - lags <= k:
        raise ValueError(
            f"{T} observations cannot support {k} regressors at lag order {lags}"
        )
    rows = T - lags
    blocks = []
    if intercept:
        blocks.append(np.ones((rows, 1)))
    for lag in range(1, lags + 1):
        blocks.append(Y[lags - lag : T - lag])
    X = np.hstack(blocks)
    target = Y[lags:]
    coef, _, _, _ = np.linalg.lstsq(X, target, rcond=None)
    resid = target - X @ coef
    offset = int(intercept)
    mats = tuple(
        coef[offset + lag * n : offset + (lag + 1) * n].T for lag in range(lags)
    )
    const = coef[0] if intercept else None
    return VarFit(coeffs=mats, intercept=const, residuals=resid)
