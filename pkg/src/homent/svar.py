"""Innovation algebra for a simultaneous-interaction matrix candidate.

Given reduced-form data u_t and a candidate mixing matrix B, the unmixed
innovations are e_t(B) = B^{-1} u_t.  Each moment condition evaluates
f_m(B, u_t) = prod_i e_{i,t}^{m_i} - c(m); the estimators work with the sample
average g_T(B) and its Jacobian with respect to vec(B) (column-major
stacking, so the coefficient in row p, column q of B maps to position
q*n + p).

Everything here is written against a fixed chunk size so that results are
bit-identical regardless of panel length or caller parallelism.
"""

from __future__ import annotations

import numpy as np

from homent.moments import MomentSystem

# Reciprocal condition number below which B is treated as numerically singular.
RCOND_MIN = 1e-12

# Fixed accumulation chunk so summation order never depends on the caller.
CHUNK_ROWS = 65536


class SingularMatrixError(RuntimeError):
    """Candidate mixing matrix is numerically singular."""


class DegenerateInnovationError(RuntimeError):
    """An innovation series has (numerically) zero variance."""


def _as_panel(U: np.ndarray, n: int | None = None) -> np.ndarray:
    U = np.asarray(U, dtype=np.float64)
    if U.ndim != 2:
        raise ValueError(f"data panel must be 2-D (T, n); got shape {U.shape}")
    if n is not None and U.shape[1] != n:
        raise ValueError(f"data panel has {U.shape[1]} columns; expected {n}")
    if U.shape[0] < 1:
        raise ValueError("data panel is empty")
    return U


def inverse_mixing(B: np.ndarray) -> np.ndarray:
    """Inverse of the candidate mixing matrix, guarded against singularity."""
    B = np.asarray(B, dtype=np.float64)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValueError(f"mixing matrix must be square; got shape {B.shape}")
    sv = np.linalg.svd(B, compute_uv=False)
    if sv[0] <= 0.0 or sv[-1] / sv[0] < RCOND_MIN:
        raise SingularMatrixError(
            f"mixing matrix is numerically singular (rcond "
            f"{0.0 if sv[0] == 0 else sv[-1] / sv[0]:.3e} < {RCOND_MIN:.0e})"
        )
    return np.linalg.inv(B)


def innovations(B: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Unmixed innovations e_t = B^{-1} u_t, one row per observation."""
    A = inverse_mixing(B)
    U = _as_panel(U, A.shape[0])
    return U @ A.T


def scale_diagonal(E: np.ndarray) -> np.ndarray:
    """Per-series inverse root-mean-square scale d_i = 1 / sqrt(mean e_i^2)."""
    E = _as_panel(E)
    v = np.mean(E * E, axis=0)
    if np.any(v <= 0.0) or not np.all(np.isfinite(v)):
        raise DegenerateInnovationError(
            f"innovation second moments must be positive and finite; got {v}"
        )
    return 1.0 / np.sqrt(v)


def scale_multipliers(sys: MomentSystem, d: np.ndarray) -> np.ndarray:
    """Per-condition products prod_i d_i^{m_{k,i}} for a diagonal scaling d."""
    d = np.asarray(d, dtype=np.float64)
    if d.shape != (sys.n,):
        raise ValueError(f"scaling vector must have shape ({sys.n},); got {d.shape}")
    if np.any(d <= 0.0):
        raise ValueError("scaling entries must be positive")
    return np.prod(d[None, :] ** sys.exponent_matrix, axis=1)


def moments_after_scaling(sys: MomentSystem, d: np.ndarray, f_base: np.ndarray) -> np.ndarray:
    """Exact transformation of moment values under column scaling B -> B diag(d).

    For each condition k with multiplier s_k = prod_i d_i^{m_{k,i}}:
    f_k(B diag(d), u) = f_k(B, u) / s_k + c_k (1 / s_k - 1).
    Applies along the last axis to per-observation values or sample averages.
    """
    s = scale_multipliers(sys, d)
    f_base = np.asarray(f_base, dtype=np.float64)
    if f_base.shape[-1] != sys.size:
        raise ValueError(
            f"moment values have last dimension {f_base.shape[-1]}; expected {sys.size}"
        )
    return f_base / s + sys.constants * (1.0 / s - 1.0)


def _power_cube(E: np.ndarray, max_power: int) -> np.ndarray:
    """P[t, i, r] = e_{i,t}^r for r = 0..max_power."""
    T, n = E.shape
    P = np.empty((T, n, max_power + 1), dtype=np.float64)
    P[:, :, 0] = 1.0
    for r in range(1, max_power + 1):
        P[:, :, r] = P[:, :, r - 1] * E
    return P


class MomentWorkspace:
    """Fused, chunked evaluation of moment statistics for one data panel.

    Splits the panel into fixed-size chunks and accumulates sums, so results
    do not depend on panel length beyond the data itself, and memory stays
    bounded for very long panels.
    """

    def __init__(self, U: np.ndarray, sys: MomentSystem, chunk_rows: int = CHUNK_ROWS):
        self.U = _as_panel(U, sys.n)
        self.sys = sys
        self.chunk_rows = int(chunk_rows)
        if self.chunk_rows < 1:
            raise ValueError("chunk_rows must be positive")
        self.T = self.U.shape[0]
        M = sys.exponent_matrix
        n = sys.n
        self._max_power = int(M.max())
        self._col_ix = np.arange(n)[None, :]
        # Exponent matrices with coordinate j decremented (product-rule terms).
        self._dec = []
        for j in range(n):
            Mj = M.copy()
            rows = M[:, j] > 0
            Mj[rows, j] -= 1
            self._dec.append((rows, Mj))

    # -- single-chunk kernels -------------------------------------------------

    def _chunk_products(self, P: np.ndarray, M: np.ndarray) -> np.ndarray:
        """prod_i e_i^{M[k, i]} for every observation in the chunk."""
        return P[:, self._col_ix, M].prod(axis=2)

    def _iter_chunks(self):
        for start in range(0, self.T, self.chunk_rows):
            yield self.U[start : start + self.chunk_rows]

    # -- public statistics ----------------------------------------------------

    def statistics(
        self,
        B: np.ndarray,
        *,
        need_jacobian: bool = False,
        need_outer: bool = False,
        max_table_order: int = 0,
    ) -> dict:
        """Accumulate moment statistics of the panel at candidate B.

        Returns a dict with keys:
          g            sample moment vector (K,)
          raw          sample averages of the raw products (K,)
          second       innovation second-moment matrix (1/T) E'E (n, n)
          jacobian     d g / d vec(B)' (K, n^2), when requested
          outer        (1/T) sum f f' (K, K), when requested
          table        univariate raw sample moments (n, max_table_order + 1),
                       when max_table_order > 0
        """
        sys = self.sys
        K, n = sys.size, sys.n
        A = inverse_mixing(B)
        M = sys.exponent_matrix

        sum_raw = np.zeros(K)
        sum_second = np.zeros((n, n))
        sum_jac = np.zeros((n, n, K)) if need_jacobian else None  # [j, q, k]
        sum_outer = np.zeros((K, K)) if need_outer else None
        sum_table = np.zeros((n, max_table_order + 1)) if max_table_order else None

        for chunk in self._iter_chunks():
            E = chunk @ A.T
            P = _power_cube(E, self._max_power)
            Fraw = self._chunk_products(P, M)
            sum_raw += Fraw.sum(axis=0)
            sum_second += E.T @ E
            if need_jacobian:
                for j in range(n):
                    rows, Mj = self._dec[j]
                    if not rows.any():
                        continue
                    D = self._chunk_products(P, Mj) * M[:, j]
                    # [q, k] accumulation of sum_t e_{q,t} * D_{k,j,t}
                    sum_jac[j] += E.T @ D
            if need_outer:
                F = Fraw - sys.constants
                sum_outer += F.T @ F
            if max_table_order:
                acc = np.ones_like(E)
                sum_table[:, 0] += E.shape[0]
                for r in range(1, max_table_order + 1):
                    acc = acc * E
                    sum_table[:, r] += acc.sum(axis=0)

        T = float(self.T)
        out = {
            "raw": sum_raw / T,
            "g": sum_raw / T - sys.constants,
            "second": sum_second / T,
        }
        if need_jacobian:
            # J[k, q*n + p] = -sum_j a_{jp} (1/T) sum_t D_{k,j,t} e_{q,t}
            J = -np.einsum("jp,jqk->kqp", A, sum_jac / T)
            out["jacobian"] = J.reshape(K, n * n)
        if need_outer:
            out["outer"] = sum_outer / T
        if max_table_order:
            out["table"] = sum_table / T
        return out


def sample_moments(B: np.ndarray, U: np.ndarray, sys: MomentSystem) -> np.ndarray:
    """Sample moment vector g_T(B) = (1/T) sum_t f(B, u_t)."""
    return MomentWorkspace(U, sys).statistics(B)["g"]


def moment_jacobian(B: np.ndarray, U: np.ndarray, sys: MomentSystem) -> np.ndarray:
    """Sample Jacobian of g_T with respect to vec(B)' (column-major), (K, n^2)."""
    return MomentWorkspace(U, sys).statistics(B, need_jacobian=True)["jacobian"]


def moment_values(B: np.ndarray, U: np.ndarray, sys: MomentSystem) -> np.ndarray:
    """Per-observation condition values f(B, u_t), shape (T, K).

    Materializes the full panel; prefer :class:`MomentWorkspace` statistics for
    long panels.
    """
    E = innovations(B, U)
    ws = MomentWorkspace(U, sys)
    P = _power_cube(E, ws._max_power)
    return ws._chunk_products(P, sys.exponent_matrix) - sys.constants


def vec(B: np.ndarray) -> np.ndarray:
    """Column-major vectorization of a matrix."""
    return np.asarray(B, dtype=np.float64).reshape(-1, order="F")


def unvec(beta: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`vec` for square matrices."""
    return np.asarray(beta, dtype=np.float64).reshape((n, n), order="F")


def coef_position(i: int, j: int, n: int) -> int:
    """Position of coefficient B[i, j] (1-based row/column) in vec(B)."""
    if not (1 <= i <= n and 1 <= j <= n):
        raise ValueError(f"coefficient ({i}, {j}) outside a {n}x{n} matrix")
    return (j - 1) * n + (i - 1)
