"""Second-moment and Jacobian estimators for the moment-condition vector.

Two families are provided.  The sample-average family uses only serial
independence of the shocks: the long-run covariance is the uncentered outer
product of per-observation condition values, the Jacobian the sample average
of analytic derivatives.  The factorized family additionally imposes mutual
independence across shocks, so every expectation of a product becomes a
product of univariate moments; it needs only univariate moments up to order
six and is far better conditioned in short samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from homent import dgps
from homent.dgps import ShockDistributionSpec
from homent.moments import MomentSystem
from homent.svar import MomentWorkspace, inverse_mixing

# Eigenvalue floor for inverting (near-)singular symmetric PSD matrices.
EIG_FLOOR_REL = 1e-10
EIG_FLOOR_ABS = 1e-12

# Univariate moment order needed by the factorized covariance: largest
# exponent sum per coordinate is 3 + 3.
TABLE_ORDER_COVARIANCE = 6


@dataclass(frozen=True)
class UnivariateMomentTable:
    """Raw univariate moments E[e_i^r] per series, r = 0..max_order."""

    moments: np.ndarray  # shape (n, max_order + 1); column 0 is all ones

    def __post_init__(self) -> None:
        moments = np.atleast_2d(np.asarray(self.moments, dtype=np.float64))
        if moments.ndim != 2 or moments.shape[1] < 3:
            raise ValueError("moment table needs at least orders 0..2 per series")
        if not np.allclose(moments[:, 0], 1.0, atol=1e-12):
            raise ValueError("order-0 moments must equal one")
        object.__setattr__(self, "moments", moments)

    @property
    def n(self) -> int:
        return self.moments.shape[0]

    @property
    def max_order(self) -> int:
        return self.moments.shape[1] - 1

    def require_order(self, order: int) -> None:
        if self.max_order < order:
            raise ValueError(
                f"moment table holds orders up to {self.max_order}; "
                f"order {order} required"
            )

    def product_moment(self, exponents: Sequence[int]) -> float:
        """Factorized expectation prod_i E[e_i^{m_i}]."""
        exps = np.asarray(exponents, dtype=np.int64)
        if exps.shape != (self.n,):
            raise ValueError(f"exponent vector must have shape ({self.n},)")
        self.require_order(int(exps.max()))
        return float(np.prod(self.moments[np.arange(self.n), exps]))

    @classmethod
    def from_population(cls, specs: Sequence[ShockDistributionSpec],
                        max_order: int = dgps.DEFAULT_MAX_ORDER) -> "UnivariateMomentTable":
        """Population table of standardized shock families (orders 0..max_order)."""
        rows = [dgps.population_moments(spec, max_order) for spec in specs]
        return cls(np.vstack(rows))

    @classmethod
    def from_samples(cls, E: np.ndarray,
                     max_order: int = TABLE_ORDER_COVARIANCE) -> "UnivariateMomentTable":
        """Empirical table of raw sample moments of the given series."""
        E = np.asarray(E, dtype=np.float64)
        if E.ndim != 2 or E.shape[0] < 1:
            raise ValueError("sample table needs a non-empty (T, n) array")
        cols = [np.ones(E.shape[1])]
        acc = np.ones_like(E)
        for _ in range(max_order):
            acc = acc * E
            cols.append(acc.mean(axis=0))
        return cls(np.column_stack(cols))


def floored_inverse(S: np.ndarray, rel_floor: float = EIG_FLOOR_REL,
                    abs_floor: float = EIG_FLOOR_ABS) -> np.ndarray:
    """Inverse of a symmetric PSD matrix with eigenvalue flooring.

    Eigenvalues below max(rel_floor * lambda_max, abs_floor) are raised to the
    floor before inverting, so near-singular covariance estimates yield a
    finite, symmetric weighting instead of exploding.
    """
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"matrix must be square; got shape {S.shape}")
    Ssym = 0.5 * (S + S.T)
    vals, vecs = np.linalg.eigh(Ssym)
    floor = max(rel_floor * float(vals.max(initial=0.0)), abs_floor)
    vals = np.maximum(vals, floor)
    return (vecs / vals) @ vecs.T


# -- sample-average (serial-independence) family ------------------------------

def s_si(B: np.ndarray, U: np.ndarray, sys: MomentSystem,
         workspace: MomentWorkspace | None = None) -> np.ndarray:
    """Uncentered outer-product covariance (1/T) sum_t f(B, u_t) f(B, u_t)'."""
    ws = workspace if workspace is not None else MomentWorkspace(U, sys)
    return ws.statistics(B, need_outer=True)["outer"]


def g_empirical(B: np.ndarray, U: np.ndarray, sys: MomentSystem,
                workspace: MomentWorkspace | None = None) -> np.ndarray:
    """Sample-average Jacobian of the moment vector, (K, n^2)."""
    ws = workspace if workspace is not None else MomentWorkspace(U, sys)
    return ws.statistics(B, need_jacobian=True)["jacobian"]


# -- factorized (mutual-independence) family ----------------------------------

def s_smi(sys: MomentSystem, table: UnivariateMomentTable) -> np.ndarray:
    """Factorized moment-condition covariance from univariate moments.

    Entry (k, l) is  prod_i E[e_i^{m_i + mt_i}]
                    - c_k prod_i E[e_i^{mt_i}] - c_l prod_i E[e_i^{m_i}]
                    + c_k c_l,
    with m the k-th and mt the l-th multi-index.
    """
    if table.n != sys.n:
        raise ValueError(f"moment table covers {table.n} series; system has {sys.n}")
    M = sys.exponent_matrix
    table.require_order(int(M.max()) * 2)
    mom = table.moments
    cols = np.arange(sys.n)
    prod_single = mom[cols, M].prod(axis=1)  # (K,)
    Msum = M[:, None, :] + M[None, :, :]     # (K, K, n)
    prod_pair = mom[cols[None, None, :], Msum].prod(axis=2)
    c = sys.constants
    return (prod_pair
            - c[:, None] * prod_single[None, :]
            - prod_single[:, None] * c[None, :]
            + np.outer(c, c))


def s_smi_empirical(B: np.ndarray, U: np.ndarray, sys: MomentSystem,
                    workspace: MomentWorkspace | None = None) -> np.ndarray:
    """Factorized covariance with an empirical univariate table at B."""
    ws = workspace if workspace is not None else MomentWorkspace(U, sys)
    stats = ws.statistics(B, max_table_order=TABLE_ORDER_COVARIANCE)
    return s_smi(sys, UnivariateMomentTable(stats["table"]))


def g_smi(B: np.ndarray, sys: MomentSystem, table: UnivariateMomentTable) -> np.ndarray:
    """Factorized Jacobian of the moment vector with respect to vec(B)'.

    Derivatives of e = B^{-1} u enter through d e_i / d b_pq = -a_ip e_q with
    A = B^{-1}; expectations of the resulting products factorize across
    series.  Shape (K, n^2), column-major coefficient layout.
    """
    if table.n != sys.n:
        raise ValueError(f"moment table covers {table.n} series; system has {sys.n}")
    A = inverse_mixing(B)
    M = sys.exponent_matrix
    table.require_order(int(M.max()) + 1)
    mom = table.moments
    n, K = sys.n, sys.size
    cols = np.arange(n)
    prod_full = mom[cols, M].prod(axis=1)  # (K,) factorized E[prod e^m]
    G = np.empty((K, n, n))  # [k, q, p]
    for k in range(K):
        m = M[k]
        for q in range(n):
            w = np.zeros(n)
            for j in range(n):
                if m[j] == 0:
                    continue
                if j == q:
                    w[j] = m[j] * prod_full[k]
                else:
                    partial = 1.0
                    for i in range(n):
                        if i == j or i == q:
                            continue
                        partial *= mom[i, m[i]]
                    w[j] = m[j] * mom[j, m[j] - 1] * mom[q, m[q] + 1] * partial
            G[k, q] = -A.T @ w
    return G.reshape(K, n * n)


def s_true(dists: Sequence[ShockDistributionSpec], sys: MomentSystem) -> np.ndarray:
    """Population moment-condition covariance under the given shock families.

    Requires finite order-8 univariate moments (asymptotic theory needs them);
    families without them raise a ValueError.
    """
    dists = tuple(dists)
    if len(dists) != sys.n:
        raise ValueError(f"need {sys.n} shock specs; got {len(dists)}")
    table = UnivariateMomentTable.from_population(dists, max_order=8)
    return s_smi(sys, table)
