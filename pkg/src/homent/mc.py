"""Scenario-driven repeated-sampling study: simulate, estimate, infer, tabulate.

A scenario fixes the mixing matrix, shock distributions, optional lag
dynamics, sample sizes, estimator list, and hypothesis tests.  Each
replication simulates a panel, runs every requested estimator, normalizes the
estimate against the true matrix (signed-permutation search in the metric of
the population coefficient covariance), and evaluates confidence intervals
and Wald tests under each requested inference basis.

Per-replication randomness is seeded as a pure function of (scenario seed,
replication index, sample-size index), so records are bit-identical across
thread counts and scheduling orders.  Rows are written in replication-major
order regardless of completion order.  Per-record wall time is deliberately
not recorded (it would break that determinism); aggregate wall time lives in
the run manifest.
"""

from __future__ import annotations

import csv
import hashlib
import json
import re
import sys as _sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from homent.covariance import UnivariateMomentTable, floored_inverse, g_smi, s_true
from homent.dgps import ShockDistributionSpec, preset, sample_panel
from homent.estimators import (
    EstimateResult,
    avar_weight,
    basis_estimates,
    csue_si,
    csue_star,
    cue,
    gmm_star,
    signed_permutation,
    two_step_csue,
    two_step_gmm,
)
from homent.inference import (
    UnidentifiedModelError,
    asymptotic_covariance,
    confidence_interval,
    wald,
)
from homent.moments import MomentSystem, full_system
from homent.svar import (
    DegenerateInnovationError,
    MomentWorkspace,
    SingularMatrixError,
    coef_position,
    innovations,
    vec,
)
from homent.varmodel import DEFAULT_BURN_IN, VarSpec, ols_var, simulate_var

__all__ = [
    "ESTIMATOR_NAMES",
    "INFERENCE_BASES",
    "RunResult",
    "Scenario",
    "SUMMARY_KINDS",
    "TestSpec",
    "record_columns",
    "reference_metric",
    "run_scenario",
    "summarize",
]

ESTIMATOR_NAMES = (
    "gmm_star",
    "gmm2",
    "csue2",
    "csue_star",
    "cue_si",
    "cue_smi",
    "csue_si",
)
INFERENCE_BASES = ("smi", "si")
SUMMARY_KINDS = (
    "variance_quantiles",
    "coef_stats",
    "coverage",
    "rejection",
    "power_curve",
)

_ESTIMATION_ERRORS = (
    UnidentifiedModelError,
    DegenerateInnovationError,
    SingularMatrixError,
    np.linalg.LinAlgError,
)

_FAILURE_WARNING_FRACTION = 0.05


def _fmt_value(v: float) -> str:
    """Grid value as a column-name fragment (integers bare, '.' -> 'p')."""
    if float(v) == int(v):
        return str(int(v))
    return str(float(v)).replace(".", "p").replace("-", "m")


@dataclass(frozen=True)
class TestSpec:
    """One Wald hypothesis evaluated on every replication.

    ``full`` tests all coefficients against the scenario's true matrix;
    ``coef`` tests a single entry against ``value``; ``power`` tests a single
    entry against every value in ``grid`` (one flag per grid point).
    """

    __test__ = False  # data container, despite the class name

    kind: str
    name: str
    i: int | None = None
    j: int | None = None
    value: float | None = None
    grid: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("full", "coef", "power"):
            raise ValueError(f"unknown test kind {self.kind!r}")
        if not self.name or not re.fullmatch(r"[A-Za-z0-9_]+", self.name):
            raise ValueError(
                f"test name must be a nonempty identifier; got {self.name!r}"
            )
        if self.kind in ("coef", "power"):
            if self.i is None or self.j is None:
                raise ValueError(f"{self.kind} test requires coefficient indices")
        if self.kind == "coef" and self.value is None:
            raise ValueError("coef test requires a value")
        if self.kind == "power":
            if not self.grid:
                raise ValueError("power test requires a nonempty grid")
            object.__setattr__(self, "grid", tuple(float(v) for v in self.grid))

    @classmethod
    def full(cls, name: str = "h0_full") -> "TestSpec":
        return cls(kind="full", name=name)

    @classmethod
    def coef(cls, i: int, j: int, value: float, name: str | None = None) -> "TestSpec":
        if name is None:
            name = f"b{i}{j}_eq_{_fmt_value(value)}"
        return cls(kind="coef", name=name, i=i, j=j, value=float(value))

    @classmethod
    def power(cls, i: int, j: int, grid, name: str | None = None) -> "TestSpec":
        if name is None:
            name = f"pw_b{i}{j}"
        return cls(kind="power", name=name, i=i, j=j, grid=tuple(grid))

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind, "name": self.name}
        for key in ("i", "j", "value"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        if self.grid is not None:
            out["grid"] = list(self.grid)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TestSpec":
        try:
            return cls(**data)
        except TypeError as exc:
            raise ValueError(f"bad test spec {data!r}: {exc}") from None


@dataclass(frozen=True)
class Scenario:
    """Complete description of one repeated-sampling study."""

    name: str
    B0: np.ndarray
    shocks: tuple[ShockDistributionSpec, ...]
    T_list: tuple[int, ...]
    replications: int
    estimators: tuple[str, ...]
    inference: tuple[str, ...] = INFERENCE_BASES
    tests: tuple[TestSpec, ...] = ()
    coverage_coeffs: tuple[tuple[int, int], ...] | None = None
    var_spec: VarSpec | None = None
    lags: int | None = None
    intercept: bool = True
    burn_in: int = DEFAULT_BURN_IN
    seed: int = 0
    level: float = 0.90

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("scenario name must be nonempty")
        B0 = np.asarray(self.B0, dtype=np.float64)
        if B0.ndim != 2 or B0.shape[0] != B0.shape[1]:
            raise ValueError(f"B0 must be square; got shape {B0.shape}")
        n = B0.shape[0]
        if n > 9:
            raise ValueError("record schema supports up to 9 series")
        object.__setattr__(self, "B0", B0)
        shocks = tuple(self.shocks)
        if len(shocks) == 1 and n > 1:
            shocks = shocks * n
        if len(shocks) != n:
            raise ValueError(f"{len(shocks)} shock specs for an n={n} scenario")
        object.__setattr__(self, "shocks", shocks)
        T_list = tuple(int(T) for T in self.T_list)
        if not T_list or any(T < 2 for T in T_list):
            raise ValueError(f"sample sizes must be >= 2; got {T_list}")
        object.__setattr__(self, "T_list", T_list)
        if self.replications < 1:
            raise ValueError(f"replications must be >= 1; got {self.replications}")
        ests = tuple(self.estimators)
        unknown = [e for e in ests if e not in ESTIMATOR_NAMES]
        if not ests or unknown:
            raise ValueError(
                f"estimators must be a nonempty subset of {ESTIMATOR_NAMES}; "
                f"unknown: {unknown}"
            )
        object.__setattr__(self, "estimators", ests)
        bases = tuple(self.inference)
        bad = [b for b in bases if b not in INFERENCE_BASES]
        if not bases or bad:
            raise ValueError(
                f"inference bases must be a nonempty subset of {INFERENCE_BASES}; "
                f"unknown: {bad}"
            )
        object.__setattr__(self, "inference", bases)
        object.__setattr__(self, "tests", tuple(self.tests))
        if self.coverage_coeffs is None:
            cov = tuple((i, j) for i in range(1, n + 1) for j in range(1, n + 1))
        else:
            cov = tuple((int(i), int(j)) for i, j in self.coverage_coeffs)
        for i, j in cov:
            if not (1 <= i <= n and 1 <= j <= n):
                raise ValueError(f"coverage coefficient ({i},{j}) out of range")
        object.__setattr__(self, "coverage_coeffs", cov)
        for t in self.tests:
            if t.kind in ("coef", "power") and not (
                1 <= t.i <= n and 1 <= t.j <= n
            ):
                raise ValueError(f"test {t.name!r} indexes ({t.i},{t.j}) out of range")
        if self.var_spec is not None:
            if self.var_spec.n != n:
                raise ValueError(
                    f"lag dynamics are {self.var_spec.n}-dimensional; B0 is {n}"
                )
            if self.lags is None:
                object.__setattr__(self, "lags", self.var_spec.lags)
            elif self.lags < 1:
                raise ValueError(f"lag order must be >= 1; got {self.lags}")
        if self.burn_in < 0:
            raise ValueError(f"burn-in must be nonnegative; got {self.burn_in}")
        if not 0.0 < self.level < 1.0:
            raise ValueError(f"confidence level must be in (0, 1); got {self.level}")
        if self.seed < 0:
            raise ValueError(f"seed must be nonnegative; got {self.seed}")

    @property
    def n(self) -> int:
        return self.B0.shape[0]

    @property
    def significance(self) -> float:
        return 1.0 - self.level

    # -- serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        out: dict = {
            "name": self.name,
            "B0": self.B0.tolist(),
            "shocks": [s.to_dict() for s in self.shocks],
            "T": list(self.T_list),
            "replications": self.replications,
            "estimators": list(self.estimators),
            "inference": list(self.inference),
            "tests": [t.to_dict() for t in self.tests],
            "coverage_coeffs": [list(c) for c in self.coverage_coeffs],
            "intercept": self.intercept,
            "burn_in": self.burn_in,
            "seed": self.seed,
            "level": self.level,
        }
        if self.var_spec is not None:
            var: dict = {"coeffs": [A.tolist() for A in self.var_spec.coeffs]}
            if self.var_spec.intercept is not None:
                var["intercept"] = self.var_spec.intercept.tolist()
            out["var"] = var
            out["lags"] = self.lags
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        data = dict(data)
        known = {
            "name",
            "B0",
            "shocks",
            "T",
            "replications",
            "estimators",
            "inference",
            "tests",
            "coverage_coeffs",
            "var",
            "lags",
            "intercept",
            "burn_in",
            "seed",
            "level",
        }
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown scenario keys: {unknown}")
        for key in ("name", "B0", "shocks", "T", "replications", "estimators"):
            if key not in data:
                raise ValueError(f"scenario is missing required key {key!r}")
        shocks = data["shocks"]
        if isinstance(shocks, (dict, str)):
            shocks = [shocks]
        shocks = [preset(s) if isinstance(s, str) else s for s in shocks]
        var = data.get("var")
        var_spec = None
        if var is not None:
            var_spec = VarSpec(
                coeffs=tuple(np.asarray(A, dtype=np.float64) for A in var["coeffs"]),
                intercept=var.get("intercept"),
            )
        kwargs = dict(
            name=data["name"],
            B0=np.asarray(data["B0"], dtype=np.float64),
            shocks=tuple(
                s if isinstance(s, ShockDistributionSpec)
                else ShockDistributionSpec.from_dict(s)
                for s in shocks
            ),
            T_list=tuple(data["T"]),
            replications=int(data["replications"]),
            estimators=tuple(data["estimators"]),
            tests=tuple(TestSpec.from_dict(t) for t in data.get("tests", [])),
            var_spec=var_spec,
            intercept=bool(data.get("intercept", True)),
            burn_in=int(data.get("burn_in", DEFAULT_BURN_IN)),
            seed=int(data.get("seed", 0)),
            level=float(data.get("level", 0.90)),
        )
        if "inference" in data:
            kwargs["inference"] = tuple(data["inference"])
        if "coverage_coeffs" in data:
            kwargs["coverage_coeffs"] = tuple(
                (int(i), int(j)) for i, j in data["coverage_coeffs"]
            )
        if "lags" in data and data["lags"] is not None:
            kwargs["lags"] = int(data["lags"])
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "Scenario":
        path = Path(path)
        suffix = path.suffix.lower()
        if suffix not in (".toml", ".json"):
            raise ValueError(
                f"scenario files must end in .toml or .json; got {path.name}"
            )
        text = path.read_bytes()
        if suffix == ".toml":
            try:
                import tomllib  # Python >= 3.11
            except ModuleNotFoundError:
                import tomli as tomllib
            data = tomllib.loads(text.decode("utf-8"))
        else:
            data = json.loads(text)
        return cls.from_dict(data)

    def scenario_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# record schema
# ---------------------------------------------------------------------------


def _test_columns(test: TestSpec, basis: str) -> list[str]:
    if test.kind == "power":
        return [
            f"power_{test.name}_{_fmt_value(v)}_{basis}" for v in test.grid
        ]
    return [f"reject_{test.name}_{basis}"]


def record_columns(sc: Scenario) -> list[str]:
    """Fixed, documented column order of the records file."""
    n = sc.n
    cols = ["rep", "T", "estimator", "converged", "loss", "iterations"]
    cols += [f"b{i}{j}_hat" for i in range(1, n + 1) for j in range(1, n + 1)]
    cols += [f"var_e{i}" for i in range(1, n + 1)]
    for basis in sc.inference:
        cols += [f"cover_b{i}{j}_{basis}" for i, j in sc.coverage_coeffs]
    for basis in sc.inference:
        for test in sc.tests:
            cols += _test_columns(test, basis)
    return cols


def reference_metric(sc: Scenario) -> np.ndarray:
    """Population coefficient covariance at the true matrix.

    Used as the metric of the signed-permutation normalization, so that
    column assignment errors are weighed by how precisely each coefficient
    is estimated.  When the scenario is unidentified at the population level
    (for example all-Gaussian shocks), falls back to the identity metric so
    the study can still record per-replication outcomes.
    """
    sys = full_system(sc.n)
    try:
        S0 = s_true(sc.shocks, sys)
        table = UnivariateMomentTable.from_population(list(sc.shocks))
        G0 = g_smi(sc.B0, sys, table)
        V = asymptotic_covariance(G0, S0, floored_inverse(S0), T=1, basis="true")
        return V.matrix
    except _ESTIMATION_ERRORS:
        return np.eye(sc.n * sc.n)


# ---------------------------------------------------------------------------
# one replication
# ---------------------------------------------------------------------------


def _simulate_panel(sc: Scenario, rep: int, t_index: int) -> np.ndarray:
    """Reduced-form innovation panel for one (replication, sample size)."""
    T = sc.T_list[t_index]
    seed = np.random.SeedSequence([sc.seed, rep, t_index])
    if sc.var_spec is None:
        eps = sample_panel(list(sc.shocks), T, seed=seed)
        return eps @ sc.B0.T
    eps = sample_panel(list(sc.shocks), T + sc.burn_in, seed=seed)
    U_true = eps @ sc.B0.T
    Y = simulate_var(sc.var_spec, U_true, burn_in=sc.burn_in)
    fit = ols_var(Y, lags=sc.lags, intercept=sc.intercept)
    return fit.residuals


def _run_estimator(
    name: str,
    U: np.ndarray,
    sys: MomentSystem,
    shocks: tuple[ShockDistributionSpec, ...],
    rng: np.random.Generator,
) -> EstimateResult:
    if name == "gmm_star":
        return gmm_star(U, sys, shocks, rng=rng)
    if name == "gmm2":
        return two_step_gmm(U, sys, rng=rng)
    if name == "csue2":
        return two_step_csue(U, sys, rng=rng)
    if name == "csue_star":
        return csue_star(U, sys, shocks, rng=rng)
    if name == "csue_si":
        return csue_si(U, sys, rng=rng)
    if name == "cue_si":
        return cue(U, sys, "si", rng=rng)
    if name == "cue_smi":
        return cue(U, sys, "smi", rng=rng)
    raise ValueError(f"unknown estimator {name!r}")


def _estimate_record(
    sc: Scenario,
    rep: int,
    t_index: int,
    est_name: str,
    U: np.ndarray,
    ws: MomentWorkspace,
    V_ref: np.ndarray,
) -> dict:
    n = sc.n
    sys = ws.sys
    T_est = U.shape[0]
    row: dict = {
        "rep": rep,
        "T": sc.T_list[t_index],
        "estimator": est_name,
        "converged": 0,
        "loss": np.nan,
        "iterations": np.nan,
    }
    est_index = ESTIMATOR_NAMES.index(est_name)
    rng = np.random.default_rng([sc.seed, rep, t_index, est_index])
    try:
        res = _run_estimator(est_name, U, sys, sc.shocks, rng)
    except _ESTIMATION_ERRORS:
        return row
    # normalize against the truth in the population-covariance metric
    B_final, Q = signed_permutation(res.B_hat, "reference", B_ref=sc.B0, V=V_ref)
    P_total = res.P_norm @ Q
    Tr = np.kron(P_total.T, np.eye(n))
    beta = vec(B_final)
    row["converged"] = int(res.converged)
    row["loss"] = res.loss
    row["iterations"] = res.iterations
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            row[f"b{i}{j}_hat"] = B_final[i - 1, j - 1]
    E = innovations(B_final, U)
    v = np.mean(E * E, axis=0)
    for i in range(1, n + 1):
        row[f"var_e{i}"] = v[i - 1]
    alpha = sc.significance
    for basis in sc.inference:
        try:
            S_b, G_b = basis_estimates(ws, basis, res.B_opt, sc.shocks)
            W_b = avar_weight(res.weighting, basis, S_b, res.W_resolved)
            avar_opt = asymptotic_covariance(G_b, S_b, W_b, T_est, basis)
            V_final = Tr @ avar_opt.matrix @ Tr.T
        except _ESTIMATION_ERRORS:
            continue  # leave this basis's flags missing
        for i, j in sc.coverage_coeffs:
            pos = coef_position(i, j, n)
            lo, hi = confidence_interval(pos, V_final, beta, T=T_est, level=sc.level)
            row[f"cover_b{i}{j}_{basis}"] = int(lo <= sc.B0[i - 1, j - 1] <= hi)
        for test in sc.tests:
            if test.kind == "full":
                R = np.eye(n * n)
                res_w = wald(R, vec(sc.B0), beta, V_final, T=T_est)
                row[f"reject_{test.name}_{basis}"] = int(res_w.p_value < alpha)
            elif test.kind == "coef":
                R = np.zeros((1, n * n))
                R[0, coef_position(test.i, test.j, n)] = 1.0
                res_w = wald(R, np.array([test.value]), beta, V_final, T=T_est)
                row[f"reject_{test.name}_{basis}"] = int(res_w.p_value < alpha)
            else:
                R = np.zeros((1, n * n))
                R[0, coef_position(test.i, test.j, n)] = 1.0
                for v_grid in test.grid:
                    res_w = wald(R, np.array([v_grid]), beta, V_final, T=T_est)
                    col = f"power_{test.name}_{_fmt_value(v_grid)}_{basis}"
                    row[col] = int(res_w.p_value < alpha)
    return row


def _replication_rows(
    sc: Scenario,
    rep: int,
    needed: set[tuple[int, str]],
    V_ref: np.ndarray,
) -> list[dict]:
    sys = full_system(sc.n)
    rows = []
    for t_index in range(len(sc.T_list)):
        ests = [e for e in sc.estimators if (t_index, e) in needed]
        if not ests:
            continue
        U = _simulate_panel(sc, rep, t_index)
        ws = MomentWorkspace(U, sys)
        for est_name in ests:
            rows.append(
                _estimate_record(sc, rep, t_index, est_name, U, ws, V_ref)
            )
    return rows


# ---------------------------------------------------------------------------
# the run
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunResult:
    """Artifacts of one scenario run."""

    records: pd.DataFrame = field(repr=False)
    summaries: dict[str, pd.DataFrame] = field(repr=False)
    records_path: Path
    manifest_path: Path
    summary_paths: dict[str, Path]
    nonconverged_fraction: float
    high_failure_warning: bool


def _format_cell(value) -> str:
    if isinstance(value, str):
        return value
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    v = float(value)
    if np.isnan(v):
        return ""
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return format(v, ".17g")


def _existing_triples(path: Path, columns: list[str]) -> set[tuple[int, int, str]]:
    """Completed (rep, T, estimator) triples in a partial records file."""
    if not path.exists() or path.stat().st_size == 0:
        return set()
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != columns:
            raise ValueError(
                f"existing records file {path} has a different schema; "
                "remove it or run with resume disabled"
            )
        done = set()
        for line in reader:
            if len(line) != len(columns):
                continue  # torn final line from an interrupted run
            done.add((int(line[0]), int(line[1]), line[2]))
    return done


def run_scenario(
    sc: Scenario,
    out_dir: str | Path,
    threads: int = 1,
    resume: bool = True,
) -> RunResult:
    """Execute every (replication, sample size, estimator) cell of a scenario.

    Writes ``records.csv`` (one row per cell, replication-major order),
    ``summary_<kind>.csv`` for every summary kind, and ``manifest.json``.
    Individual estimation failures are recorded with ``converged`` 0 and
    missing values; they never abort the run.  With ``resume``, cells already
    present in ``records.csv`` are skipped and only missing ones are computed.
    """
    if threads < 1:
        raise ValueError(f"thread count must be >= 1; got {threads}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records_path = out / "records.csv"
    manifest_path = out / "manifest.json"
    columns = record_columns(sc)
    sc_hash = sc.scenario_hash()
    if manifest_path.exists():
        old = json.loads(manifest_path.read_text())
        if old.get("scenario_hash") not in (None, sc_hash):
            raise ValueError(
                f"{out} holds records for a different scenario "
                f"({old.get('scenario_hash')[:12]} != {sc_hash[:12]})"
            )
    if not resume and records_path.exists():
        records_path.unlink()
    done = _existing_triples(records_path, columns)
    needed_by_rep: dict[int, set[tuple[int, str]]] = {}
    for rep in range(sc.replications):
        needed = {
            (t_index, est)
            for t_index in range(len(sc.T_list))
            for est in sc.estimators
            if (rep, sc.T_list[t_index], est) not in done
        }
        if needed:
            needed_by_rep[rep] = needed
    V_ref = reference_metric(sc)

    started = time.time()
    new_header = not records_path.exists() or records_path.stat().st_size == 0
    with records_path.open("a", newline="") as fh:
        writer = csv.writer(fh)
        if new_header:
            writer.writerow(columns)
        if needed_by_rep:
            reps = sorted(needed_by_rep)
            with ThreadPoolExecutor(max_workers=threads) as pool:
                futures = [
                    pool.submit(
                        _replication_rows, sc, rep, needed_by_rep[rep], V_ref
                    )
                    for rep in reps
                ]
                # consume in submission order: deterministic row order
                for future in futures:
                    for row in future.result():
                        writer.writerow(
                            [_format_cell(row.get(c, np.nan)) for c in columns]
                        )
    wall = time.time() - started

    records = pd.read_csv(records_path)
    records = records.drop_duplicates(subset=["rep", "T", "estimator"], keep="first")
    nonconv = float(1.0 - records["converged"].fillna(0).mean())
    warning = nonconv > _FAILURE_WARNING_FRACTION
    summaries: dict[str, pd.DataFrame] = {}
    summary_paths: dict[str, Path] = {}
    for kind in SUMMARY_KINDS:
        table = summarize(records, kind)
        summaries[kind] = table
        path = out / f"summary_{kind}.csv"
        table.to_csv(path, index=False)
        summary_paths[kind] = path
    manifest = {
        "schema_version": "1",
        "scenario": sc.to_dict(),
        "scenario_hash": sc_hash,
        "records": int(len(records)),
        "expected_records": sc.replications * len(sc.T_list) * len(sc.estimators),
        "nonconverged_fraction": nonconv,
        "warning_high_failure_rate": warning,
        "wall_time_seconds": wall,
        "versions": {
            "python": _sys.version.split()[0],
            "numpy": np.__version__,
            "pandas": pd.__version__,
        },
    }
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return RunResult(
        records=records,
        summaries=summaries,
        records_path=records_path,
        manifest_path=manifest_path,
        summary_paths=summary_paths,
        nonconverged_fraction=nonconv,
        high_failure_warning=warning,
    )


# ---------------------------------------------------------------------------
# summaries
# ---------------------------------------------------------------------------

_COVER_RE = re.compile(r"^cover_(b\d\d)_(smi|si)$")
_REJECT_RE = re.compile(r"^reject_(.+)_(smi|si)$")
_POWER_RE = re.compile(r"^power_(.+)_(\d+|\d+p\d+|m[\dp]+)_(smi|si)$")
_COEF_RE = re.compile(r"^(b\d\d)_hat$")


def _parse_value(fragment: str) -> float:
    return float(fragment.replace("p", ".").replace("m", "-"))


def summarize(records: pd.DataFrame, kind: str) -> pd.DataFrame:
    """Aggregate a records table into one of the fixed summary layouts.

    ``variance_quantiles``: mean/Q10/Q90 of the first innovation variance.
    ``coef_stats``: mean/median/IQR/sd per coefficient.
    ``coverage``: percentage of interval hits per coefficient and basis.
    ``rejection``: percentage of rejections per plain test and basis.
    ``power_curve``: rejection percentage per grid value for power tests.
    All group by (T, estimator); missing values (failed replications or
    failed inference) are excluded cell-wise.
    """
    if records is None or len(records) == 0:
        raise ValueError("records are empty; nothing to summarize")
    if kind not in SUMMARY_KINDS:
        raise ValueError(f"unknown summary kind {kind!r}; choose from {SUMMARY_KINDS}")
    df = records.drop_duplicates(subset=["rep", "T", "estimator"], keep="first")
    groups = df.groupby(["T", "estimator"], sort=True)

    if kind == "variance_quantiles":
        out = groups["var_e1"].agg(
            mean="mean",
            q10=lambda s: s.quantile(0.10),
            q90=lambda s: s.quantile(0.90),
        )
        return out.reset_index()

    if kind == "coef_stats":
        coef_cols = [c for c in df.columns if _COEF_RE.match(c)]
        rows = []
        for (T, est), sub in groups:
            for col in coef_cols:
                s = sub[col].dropna()
                if s.empty:
                    continue
                rows.append(
                    {
                        "T": T,
                        "estimator": est,
                        "coef": _COEF_RE.match(col).group(1),
                        "mean": s.mean(),
                        "median": s.median(),
                        "iqr": s.quantile(0.75) - s.quantile(0.25),
                        "sd": s.std(ddof=1) if len(s) > 1 else 0.0,
                    }
                )
        return pd.DataFrame(
            rows, columns=["T", "estimator", "coef", "mean", "median", "iqr", "sd"]
        )

    if kind == "coverage":
        rows = []
        for (T, est), sub in groups:
            for col in df.columns:
                m = _COVER_RE.match(col)
                if not m:
                    continue
                s = sub[col].dropna()
                if s.empty:
                    continue
                rows.append(
                    {
                        "T": T,
                        "estimator": est,
                        "coef": m.group(1),
                        "basis": m.group(2),
                        "coverage_pct": 100.0 * s.mean(),
                        "count": int(len(s)),
                    }
                )
        return pd.DataFrame(
            rows, columns=["T", "estimator", "coef", "basis", "coverage_pct", "count"]
        )

    if kind == "rejection":
        rows = []
        for (T, est), sub in groups:
            for col in df.columns:
                m = _REJECT_RE.match(col)
                if not m:
                    continue
                s = sub[col].dropna()
                if s.empty:
                    continue
                rows.append(
                    {
                        "T": T,
                        "estimator": est,
                        "test": m.group(1),
                        "basis": m.group(2),
                        "rejection_pct": 100.0 * s.mean(),
                        "count": int(len(s)),
                    }
                )
        return pd.DataFrame(
            rows, columns=["T", "estimator", "test", "basis", "rejection_pct", "count"]
        )

    rows = []
    for (T, est), sub in groups:
        for col in df.columns:
            m = _POWER_RE.match(col)
            if not m:
                continue
            s = sub[col].dropna()
            if s.empty:
                continue
            rows.append(
                {
                    "T": T,
                    "estimator": est,
                    "test": m.group(1),
                    "b": _parse_value(m.group(2)),
                    "basis": m.group(3),
                    "rejection_pct": 100.0 * s.mean(),
                    "count": int(len(s)),
                }
            )
    out = pd.DataFrame(
        rows,
        columns=["T", "estimator", "test", "b", "basis", "rejection_pct", "count"],
    )
    return out.sort_values(["T", "estimator", "test", "b", "basis"]).reset_index(
        drop=True
    )
