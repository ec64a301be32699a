"""Mixing-matrix estimators minimizing weighted quadratic moment objectives.

All estimators share one optimizer: quasi-Newton over vec(B) with the analytic
gradient 2 J' W g for a weighting held fixed during the run.  Scale-updated
weightings W(B) = D(B) W_base D(B), with D(B) built from the per-condition
products of inverse root-mean-square innovation scales, are differentiated
through exactly.  Continuously-updated weightings (W re-estimated from the
candidate itself) alternate frozen-weight runs with weight refreshes and
finish with a derivative-free polish of the full objective.

Estimates are reported after a sign/column-permutation normalization; the
matrix before normalization, the applied signed permutation, and the resolved
weighting are kept on the result so callers can re-normalize against an
external reference and transform the covariance consistently.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np
from scipy import optimize

from homent.covariance import (
    TABLE_ORDER_COVARIANCE,
    UnivariateMomentTable,
    floored_inverse,
    g_smi,
    s_smi,
    s_true,
)
from homent.dgps import ShockDistributionSpec
from homent.inference import AsymptoticCovariance, asymptotic_covariance
from homent.moments import MomentSystem
from homent.svar import (
    DegenerateInnovationError,
    MomentWorkspace,
    SingularMatrixError,
    inverse_mixing,
    scale_multipliers,
    unvec,
    vec,
)

__all__ = [
    "EstimateResult",
    "WeightingSpec",
    "avar_weight",
    "basis_estimates",
    "cue",
    "csue_si",
    "csue_star",
    "default_start",
    "gmm_star",
    "minimize_gmm",
    "objective_at",
    "sign_permute",
    "signed_permutation",
    "two_step_csue",
    "two_step_gmm",
]

# Convergence: gradient infinity-norm below GRADIENT_TOL * max(1, loss).
GRADIENT_TOL = 1e-8
MAX_ITERATIONS = 500
MAX_RESTARTS = 3
RESTART_NOISE = 0.05
# Loss reported for numerically singular candidates; line searches back away.
SINGULAR_LOSS = 1e12
# Fixed-point iteration cap for continuously-updated weightings.
CUE_MAX_ROUNDS = 30
CUE_FIXED_POINT_TOL = 1e-8
# Largest dimension for exhaustive signed-permutation search (2^n * n!).
MAX_PERMUTE_DIM = 6

_DEFAULT_RESTART_SEED = 171


@dataclass(frozen=True)
class WeightingSpec:
    """How the quadratic-form weighting is built.

    ``kind`` selects the base matrix: ``identity``; ``fixed`` (a supplied
    symmetric PSD matrix); ``si`` (inverse of the sample outer-product moment
    covariance at ``B_ref``); ``smi`` (inverse of the factorized empirical
    moment covariance at ``B_ref``); ``true`` (inverse of the population
    moment covariance of ``dists``).  With ``scale_updating`` the base is
    conjugated per candidate by the diagonal of per-condition products of
    inverse root-mean-square innovation scales.
    """

    kind: str
    matrix: np.ndarray | None = None
    B_ref: np.ndarray | None = None
    dists: tuple[ShockDistributionSpec, ...] | None = None
    scale_updating: bool = False

    def __post_init__(self) -> None:
        if self.kind not in ("identity", "fixed", "si", "smi", "true"):
            raise ValueError(f"unknown weighting kind {self.kind!r}")
        if self.kind == "fixed":
            if self.matrix is None:
                raise ValueError("fixed weighting requires a matrix")
            m = np.asarray(self.matrix, dtype=np.float64)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ValueError(f"weighting matrix must be square; got {m.shape}")
            if not np.allclose(m, m.T, rtol=1e-10, atol=1e-12):
                raise ValueError("weighting matrix must be symmetric")
            if np.linalg.eigvalsh(0.5 * (m + m.T))[0] < -1e-10:
                raise ValueError("weighting matrix must be positive semidefinite")
            object.__setattr__(self, "matrix", m)
        if self.kind in ("si", "smi"):
            if self.B_ref is None:
                raise ValueError(f"{self.kind} weighting requires a reference matrix")
            object.__setattr__(
                self, "B_ref", np.asarray(self.B_ref, dtype=np.float64)
            )
        if self.kind == "true":
            if not self.dists:
                raise ValueError("true weighting requires shock distributions")
            object.__setattr__(self, "dists", tuple(self.dists))

    # -- constructors ---------------------------------------------------------

    @classmethod
    def identity(cls, scale_updating: bool = False) -> "WeightingSpec":
        return cls(kind="identity", scale_updating=scale_updating)

    @classmethod
    def fixed(cls, matrix: np.ndarray, scale_updating: bool = False) -> "WeightingSpec":
        return cls(kind="fixed", matrix=matrix, scale_updating=scale_updating)

    @classmethod
    def si(cls, B_ref: np.ndarray, scale_updating: bool = False) -> "WeightingSpec":
        return cls(kind="si", B_ref=B_ref, scale_updating=scale_updating)

    @classmethod
    def smi(cls, B_ref: np.ndarray, scale_updating: bool = False) -> "WeightingSpec":
        return cls(kind="smi", B_ref=B_ref, scale_updating=scale_updating)

    @classmethod
    def true(
        cls,
        dists: tuple[ShockDistributionSpec, ...],
        scale_updating: bool = False,
    ) -> "WeightingSpec":
        return cls(kind="true", dists=tuple(dists), scale_updating=scale_updating)

    # -- resolution -----------------------------------------------------------

    def resolve_base(self, ws: MomentWorkspace) -> np.ndarray:
        """Base K-by-K weighting matrix before any scale updating."""
        sys = ws.sys
        if self.kind == "identity":
            return np.eye(sys.size)
        if self.kind == "fixed":
            if self.matrix.shape != (sys.size, sys.size):
                raise ValueError(
                    f"weighting matrix is {self.matrix.shape}; "
                    f"system needs ({sys.size}, {sys.size})"
                )
            return self.matrix
        if self.kind == "si":
            S = ws.statistics(self.B_ref, need_outer=True)["outer"]
            return floored_inverse(S)
        if self.kind == "smi":
            stats = ws.statistics(self.B_ref, max_table_order=TABLE_ORDER_COVARIANCE)
            return floored_inverse(s_smi(sys, UnivariateMomentTable(stats["table"])))
        if len(self.dists) != sys.n:
            raise ValueError(
                f"{len(self.dists)} shock distributions for an n={sys.n} system"
            )
        return floored_inverse(s_true(self.dists, sys))


@dataclass(frozen=True)
class EstimateResult:
    """Outcome of one quadratic-form minimization.

    ``B_hat`` is normalized by convention (columns permuted toward a dominant
    diagonal, diagonal signs positive); ``B_opt`` is the optimizer's terminal
    point with ``B_hat = B_opt @ P_norm``.  ``loss``, ``gradient_norm``,
    ``converged`` and ``iterations`` describe the optimizer run at ``B_opt``
    (the objective is not invariant under the reporting normalization).
    ``S_hat`` and ``G_hat`` are the basis estimates recomputed at ``B_hat``;
    ``avar`` is the sandwich covariance assembled at ``B_opt`` with the
    resolved weighting and transformed exactly to the ``B_hat`` coordinates.
    """

    B_hat: np.ndarray
    loss: float
    weighting: WeightingSpec
    S_hat: np.ndarray
    G_hat: np.ndarray
    avar: AsymptoticCovariance
    converged: bool
    iterations: int
    gradient_norm: float
    B_opt: np.ndarray
    P_norm: np.ndarray
    W_base: np.ndarray
    W_resolved: np.ndarray
    basis: str
    T: int

    @property
    def n(self) -> int:
        return self.B_hat.shape[0]


def default_start(U: np.ndarray) -> np.ndarray:
    """Lower-triangular Cholesky factor of the uncentered data covariance.

    Starting innovations are whitened with unit sample variances, making the
    start neutral with respect to scaling.
    """
    U = np.asarray(U, dtype=np.float64)
    if U.ndim != 2:
        raise ValueError(f"data panel must be 2-D; got shape {U.shape}")
    C = (U.T @ U) / U.shape[0]
    try:
        return np.linalg.cholesky(C)
    except np.linalg.LinAlgError as exc:
        raise DegenerateInnovationError(
            "data covariance is not positive definite; cannot build a start"
        ) from exc


# ---------------------------------------------------------------------------
# objective evaluation
# ---------------------------------------------------------------------------


def _objective(ws: MomentWorkspace, W_base: np.ndarray, scale_updating: bool):
    """Loss-and-gradient callable over vec(B) for a fixed base weighting."""
    sys = ws.sys
    n = sys.n
    M = sys.exponent_matrix.astype(np.float64)
    zero_grad = np.zeros(n * n)

    def fun(theta: np.ndarray) -> tuple[float, np.ndarray]:
        B = unvec(theta, n)
        try:
            stats = ws.statistics(B, need_jacobian=True)
        except (SingularMatrixError, DegenerateInnovationError):
            return SINGULAR_LOSS, zero_grad
        g = stats["g"]
        J = stats["jacobian"]
        if not scale_updating:
            Wg = W_base @ g
            return float(g @ Wg), 2.0 * (J.T @ Wg)
        v = np.diag(stats["second"])
        if np.any(v <= 0.0) or not np.all(np.isfinite(v)):
            return SINGULAR_LOSS, zero_grad
        s = scale_multipliers(sys, 1.0 / np.sqrt(v))
        A = inverse_mixing(B)
        # d log(scale_i) / d b_pq = A[i, p] * V[i, q] / V[i, i]
        H = np.einsum("ip,iq->iqp", A, stats["second"] / v[:, None]).reshape(n, n * n)
        g_tilde = s * g
        J_tilde = s[:, None] * (J + g[:, None] * (M @ H))
        Wg = W_base @ g_tilde
        return float(g_tilde @ Wg), 2.0 * (J_tilde.T @ Wg)

    return fun


def _run_optimizer(fun, x0: np.ndarray) -> tuple[np.ndarray, float, np.ndarray, int]:
    res = optimize.minimize(
        fun,
        x0,
        jac=True,
        method="BFGS",
        options={"gtol": GRADIENT_TOL, "maxiter": MAX_ITERATIONS},
    )
    loss, grad = fun(res.x)
    return res.x, float(loss), grad, int(res.nit)


def _minimize_with_restarts(
    fun, start: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, float, float, bool, int]:
    """Run the optimizer with perturbed-start retries; keep the best attempt."""
    best = None
    total_iters = 0
    x0 = vec(start)
    for attempt in range(MAX_RESTARTS + 1):
        x, loss, grad, nit = _run_optimizer(fun, x0)
        total_iters += nit
        gnorm = float(np.max(np.abs(grad)))
        converged = loss < 0.5 * SINGULAR_LOSS and gnorm < GRADIENT_TOL * max(1.0, loss)
        candidate = (x, loss, gnorm, converged)
        if best is None or (converged, -loss) > (best[3], -best[1]):
            best = candidate
        if converged:
            break
        noise = rng.standard_normal(start.shape)
        x0 = vec(start * (1.0 + RESTART_NOISE * noise))
    x, loss, gnorm, converged = best
    return x, loss, gnorm, converged, total_iters


# ---------------------------------------------------------------------------
# sign / permutation normalization
# ---------------------------------------------------------------------------


def _iter_signed_permutations(n: int):
    for perm in itertools.permutations(range(n)):
        base = np.zeros((n, n))
        for new_col, old_col in enumerate(perm):
            base[old_col, new_col] = 1.0
        for signs in itertools.product((1.0, -1.0), repeat=n):
            yield base * np.asarray(signs)[None, :]


def _convention_permutation(B: np.ndarray) -> np.ndarray:
    """Greedy dominant-diagonal column assignment with positive diagonal."""
    n = B.shape[0]
    P = np.zeros((n, n))
    used: set[int] = set()
    for i in range(n):
        order = np.argsort(-np.abs(B[i]), kind="stable")
        col = next(int(q) for q in order if int(q) not in used)
        used.add(col)
        sign = 1.0 if B[i, col] >= 0.0 else -1.0
        P[col, i] = sign
    return P


def signed_permutation(
    B_hat: np.ndarray,
    mode: str = "convention",
    *,
    B_ref: np.ndarray | None = None,
    V: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Normalize column signs/order; return the matrix and the applied P.

    ``convention`` permutes columns greedily toward a dominant diagonal and
    flips signs so diagonal entries are positive.  ``reference`` searches all
    2^n n! signed permutations for the one minimizing the quadratic distance
    of vec(B P) from vec(B_ref) in the metric of the inverse of ``V``.
    """
    B = np.asarray(B_hat, dtype=np.float64)
    n = B.shape[0]
    if B.shape != (n, n):
        raise ValueError(f"matrix must be square; got shape {B.shape}")
    if mode == "convention":
        P = _convention_permutation(B)
        return B @ P, P
    if mode != "reference":
        raise ValueError(f"unknown normalization mode {mode!r}")
    if B_ref is None or V is None:
        raise ValueError("reference mode requires B_ref and a covariance V")
    if n > MAX_PERMUTE_DIM:
        raise ValueError(
            f"signed-permutation search supports n <= {MAX_PERMUTE_DIM}; got {n}"
        )
    B_ref = np.asarray(B_ref, dtype=np.float64)
    Vinv = floored_inverse(np.asarray(V, dtype=np.float64))
    ref = vec(B_ref)
    best_P = None
    best_val = np.inf
    for P in _iter_signed_permutations(n):
        delta = vec(B @ P) - ref
        val = float(delta @ Vinv @ delta)
        if val < best_val - 1e-15:
            best_val = val
            best_P = P
    return B @ best_P, best_P


def sign_permute(
    B_hat: np.ndarray,
    mode: str = "convention",
    *,
    B_ref: np.ndarray | None = None,
    V: np.ndarray | None = None,
) -> np.ndarray:
    """Normalized matrix only; see :func:`signed_permutation`."""
    return signed_permutation(B_hat, mode, B_ref=B_ref, V=V)[0]


# ---------------------------------------------------------------------------
# basis estimates and result assembly
# ---------------------------------------------------------------------------


def basis_estimates(
    ws: MomentWorkspace,
    basis: str,
    B: np.ndarray,
    dists: tuple[ShockDistributionSpec, ...] | None,
) -> tuple[np.ndarray, np.ndarray]:
    """(S, G) estimates of the chosen inference basis at B."""
    sys = ws.sys
    if basis == "si":
        stats = ws.statistics(B, need_jacobian=True, need_outer=True)
        return stats["outer"], stats["jacobian"]
    if basis == "smi":
        stats = ws.statistics(B, max_table_order=TABLE_ORDER_COVARIANCE)
        table = UnivariateMomentTable(stats["table"])
        return s_smi(sys, table), g_smi(B, sys, table)
    if basis == "true":
        if not dists:
            raise ValueError("true basis requires shock distributions")
        table = UnivariateMomentTable.from_population(dists)
        return s_true(dists, sys), g_smi(B, sys, table)
    raise ValueError(f"unknown inference basis {basis!r}")


def avar_weight(
    weighting: WeightingSpec,
    basis: str,
    S_basis: np.ndarray,
    W_resolved: np.ndarray,
) -> np.ndarray:
    """Weighting matrix to pair with basis estimates in the asymptotic sandwich.

    When the estimator's base weighting is the same statistical object as the
    inference basis (same kind, no scale updating), the weight is that object's
    inverse re-evaluated at the reported estimate; the sandwich M S M' then
    collapses to the efficient form (G'S^-1 G)^-1.  Any other pairing — fixed,
    identity or population weights, scale updating, or a different basis —
    keeps the estimator's resolved weight and yields the general sandwich.
    """
    if weighting.kind == basis and not weighting.scale_updating:
        return floored_inverse(S_basis)
    return W_resolved


def _resolved_weight(
    ws: MomentWorkspace, W_base: np.ndarray, scale_updating: bool, B: np.ndarray
) -> np.ndarray:
    if not scale_updating:
        return W_base
    stats = ws.statistics(B)
    d_hat = 1.0 / np.sqrt(np.diag(stats["second"]))
    s = scale_multipliers(ws.sys, d_hat)
    return s[:, None] * W_base * s[None, :]


def _assemble_result(
    ws: MomentWorkspace,
    weighting: WeightingSpec,
    W_base: np.ndarray,
    basis: str,
    x: np.ndarray,
    loss: float,
    gnorm: float,
    converged: bool,
    iterations: int,
) -> EstimateResult:
    sys = ws.sys
    n = sys.n
    B_opt = unvec(x, n)
    W_resolved = _resolved_weight(ws, W_base, weighting.scale_updating, B_opt)
    S_raw, G_raw = basis_estimates(ws, basis, B_opt, weighting.dists)
    W_avar = avar_weight(weighting, basis, S_raw, W_resolved)
    avar_raw = asymptotic_covariance(G_raw, S_raw, W_avar, ws.T, basis=basis)
    B_hat, P = signed_permutation(B_opt, "convention")
    if np.array_equal(P, np.eye(n)):
        avar = avar_raw
        S_hat, G_hat = S_raw, G_raw
    else:
        # vec(B P) = (P' kron I) vec(B): transform the covariance exactly.
        Tr = np.kron(P.T, np.eye(n))
        avar = AsymptoticCovariance(
            matrix=Tr @ avar_raw.matrix @ Tr.T, basis=basis, sample_size=ws.T
        )
        S_hat, G_hat = basis_estimates(ws, basis, B_hat, weighting.dists)
    return EstimateResult(
        B_hat=B_hat,
        loss=loss,
        weighting=weighting,
        S_hat=S_hat,
        G_hat=G_hat,
        avar=avar,
        converged=converged,
        iterations=iterations,
        gradient_norm=gnorm,
        B_opt=B_opt,
        P_norm=P,
        W_base=W_base,
        W_resolved=W_resolved,
        basis=basis,
        T=ws.T,
    )


_BASIS_FOR_KIND = {"identity": "si", "fixed": "si", "si": "si", "smi": "smi", "true": "true"}


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------


def objective_at(
    U: np.ndarray,
    sys: MomentSystem,
    W: WeightingSpec,
    B: np.ndarray,
    *,
    workspace: MomentWorkspace | None = None,
) -> tuple[float, np.ndarray]:
    """Loss and gradient of the weighted objective at a fixed candidate."""
    ws = workspace if workspace is not None else MomentWorkspace(U, sys)
    fun = _objective(ws, W.resolve_base(ws), W.scale_updating)
    return fun(vec(np.asarray(B, dtype=np.float64)))


def _minimize_core(
    ws: MomentWorkspace,
    W: WeightingSpec,
    start: np.ndarray | None,
    rng: np.random.Generator | None,
) -> tuple[np.ndarray, float, float, bool, int, np.ndarray]:
    sys = ws.sys
    if rng is None:
        rng = np.random.default_rng(_DEFAULT_RESTART_SEED)
    if start is None:
        start = default_start(ws.U)
    else:
        start = np.asarray(start, dtype=np.float64)
        if start.shape != (sys.n, sys.n):
            raise ValueError(
                f"start must have shape ({sys.n}, {sys.n}); got {start.shape}"
            )
        inverse_mixing(start)  # must be invertible
    W_base = W.resolve_base(ws)
    fun = _objective(ws, W_base, W.scale_updating)
    x, loss, gnorm, converged, iters = _minimize_with_restarts(fun, start, rng)
    return x, loss, gnorm, converged, iters, W_base


def minimize_gmm(
    U: np.ndarray,
    sys: MomentSystem,
    W: WeightingSpec,
    start: np.ndarray | None = None,
    *,
    basis: str | None = None,
    rng: np.random.Generator | None = None,
    workspace: MomentWorkspace | None = None,
) -> EstimateResult:
    """Minimize g_T(B)' W(B) g_T(B) over B from the given start."""
    ws = workspace if workspace is not None else MomentWorkspace(U, sys)
    if basis is None:
        basis = _BASIS_FOR_KIND[W.kind]
    x, loss, gnorm, converged, iters, W_base = _minimize_core(ws, W, start, rng)
    return _assemble_result(ws, W, W_base, basis, x, loss, gnorm, converged, iters)


def gmm_star(
    U: np.ndarray,
    sys: MomentSystem,
    dists: tuple[ShockDistributionSpec, ...],
    *,
    rng: np.random.Generator | None = None,
) -> EstimateResult:
    """One-step estimator weighted by the inverse population moment covariance."""
    return minimize_gmm(U, sys, WeightingSpec.true(dists), rng=rng)


def _two_step(
    U: np.ndarray,
    sys: MomentSystem,
    step1_spec: WeightingSpec,
    step2_kind: str,
    scale_updating: bool,
    basis: str,
    rng: np.random.Generator | None,
) -> EstimateResult:
    ws = MomentWorkspace(U, sys)
    x1, _, _, _, iters1, _ = _minimize_core(ws, step1_spec, None, rng)
    B1 = sign_permute(unvec(x1, sys.n))
    spec2 = WeightingSpec(kind=step2_kind, B_ref=B1, scale_updating=scale_updating)
    step2 = minimize_gmm(
        U, sys, spec2, start=B1, rng=rng, workspace=ws, basis=basis
    )
    return replace(step2, iterations=iters1 + step2.iterations)


def two_step_gmm(
    U: np.ndarray,
    sys: MomentSystem,
    *,
    rng: np.random.Generator | None = None,
) -> EstimateResult:
    """Identity weighting, then inverse sample outer-product weighting."""
    return _two_step(
        U, sys, WeightingSpec.identity(), "si", False, "si", rng
    )


def two_step_csue(
    U: np.ndarray,
    sys: MomentSystem,
    *,
    rng: np.random.Generator | None = None,
) -> EstimateResult:
    """Scale-updated identity, then scale-updated factorized weighting."""
    return _two_step(
        U,
        sys,
        WeightingSpec.identity(scale_updating=True),
        "smi",
        True,
        "smi",
        rng,
    )


def csue_si(
    U: np.ndarray,
    sys: MomentSystem,
    *,
    rng: np.random.Generator | None = None,
) -> EstimateResult:
    """Scale-updated identity, then scale-updated sample outer-product weighting."""
    return _two_step(
        U,
        sys,
        WeightingSpec.identity(scale_updating=True),
        "si",
        True,
        "si",
        rng,
    )


def csue_star(
    U: np.ndarray,
    sys: MomentSystem,
    dists: tuple[ShockDistributionSpec, ...],
    *,
    rng: np.random.Generator | None = None,
) -> EstimateResult:
    """One-step scale-updated estimator around the population weighting."""
    return minimize_gmm(
        U, sys, WeightingSpec.true(dists, scale_updating=True), rng=rng
    )


def _cue_weight(ws: MomentWorkspace, basis: str, B: np.ndarray) -> np.ndarray:
    sys = ws.sys
    if basis == "si":
        S = ws.statistics(B, need_outer=True)["outer"]
    else:
        stats = ws.statistics(B, max_table_order=TABLE_ORDER_COVARIANCE)
        S = s_smi(sys, UnivariateMomentTable(stats["table"]))
    return floored_inverse(S)


def cue(
    U: np.ndarray,
    sys: MomentSystem,
    basis: str = "smi",
    start: np.ndarray | None = None,
    *,
    rng: np.random.Generator | None = None,
    polish_maxiter: int | None = None,
) -> EstimateResult:
    """Continuously-updated estimator: W is re-estimated at the candidate.

    Alternates frozen-weight minimizations with weight refreshes until the
    fixed point stabilizes, then polishes the full objective (weight varying
    with the candidate) with a derivative-free simplex search.  The fixed
    point zeroes only the frozen-weight part of the first-order condition, so
    the polish routinely moves the minimizer by a small amount of order the
    attained loss; ``converged`` requires the fixed point to stabilize and
    the polish to terminate by its own tolerances rather than hit its
    iteration cap.
    """
    if basis not in ("si", "smi"):
        raise ValueError(f"unknown continuous-updating basis {basis!r}")
    ws = MomentWorkspace(U, sys)
    if rng is None:
        rng = np.random.default_rng(_DEFAULT_RESTART_SEED)
    n = sys.n
    if start is None:
        B = default_start(ws.U)
    else:
        B = np.asarray(start, dtype=np.float64)
        if B.shape != (n, n):
            raise ValueError(f"start must have shape ({n}, {n}); got {B.shape}")
        inverse_mixing(B)  # must be invertible
    total_iters = 0
    fixed_point = False
    loss = np.inf
    gnorm = np.inf
    for _ in range(CUE_MAX_ROUNDS):
        W_frozen = _cue_weight(ws, basis, B)
        fun = _objective(ws, W_frozen, scale_updating=False)
        x, loss, gnorm, _, iters = _minimize_with_restarts(fun, B, rng)
        total_iters += iters
        B_new = unvec(x, n)
        step = float(np.max(np.abs(B_new - B)))
        B = B_new
        if step < CUE_FIXED_POINT_TOL * max(1.0, float(np.max(np.abs(B)))):
            fixed_point = True
            break

    def full_objective(theta: np.ndarray) -> float:
        Bc = unvec(theta, n)
        try:
            if basis == "si":
                stats = ws.statistics(Bc, need_outer=True)
                S = stats["outer"]
            else:
                stats = ws.statistics(Bc, max_table_order=TABLE_ORDER_COVARIANCE)
                S = s_smi(sys, UnivariateMomentTable(stats["table"]))
        except (SingularMatrixError, DegenerateInnovationError):
            return SINGULAR_LOSS
        g = stats["g"]
        return float(g @ floored_inverse(S) @ g)

    value_before = full_objective(vec(B))
    if polish_maxiter is None:
        polish_maxiter = 200 * n * n
    polish = optimize.minimize(
        full_objective,
        vec(B),
        method="Nelder-Mead",
        options={
            "maxiter": polish_maxiter,
            "xatol": 1e-10,
            "fatol": 1e-12,
            "initial_simplex": None,
        },
    )
    value_after = float(polish.fun)
    if value_after < value_before:
        B = unvec(polish.x, n)
        loss = value_after
    else:
        loss = value_before
    total_iters += int(polish.nit)
    converged = fixed_point and bool(polish.success)

    W_final = _cue_weight(ws, basis, B)
    frozen = _objective(ws, W_final, scale_updating=False)
    _, grad_final = frozen(vec(B))
    gnorm = float(np.max(np.abs(grad_final)))
    spec = WeightingSpec(kind=basis, B_ref=B, scale_updating=False)
    return _assemble_result(
        ws, spec, W_final, basis, vec(B), loss, gnorm, converged, total_iters
    )
