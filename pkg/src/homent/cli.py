"""Command-line interface: estimate, simulate, noise-analyze, moments.

Exit codes: 0 success, 2 malformed input (message includes the offending
line where applicable), 3 numerical failure (non-convergence or a singular /
unidentified model).  All JSON artifacts carry a ``schema_version`` field;
CSV artifacts are comma-separated UTF-8 with a header row.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys as _sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from homent.covariance import floored_inverse
from homent.dgps import ShockDistributionSpec, population_moments, preset
from homent.estimators import (
    EstimateResult,
    WeightingSpec,
    avar_weight,
    basis_estimates,
    csue_si,
    csue_star,
    cue,
    gmm_star,
    minimize_gmm,
    two_step_csue,
    two_step_gmm,
)
from homent.inference import (
    UnidentifiedModelError,
    asymptotic_covariance,
    confidence_interval,
    wald,
)
from homent.mc import ESTIMATOR_NAMES, Scenario, TestSpec, run_scenario
from homent.moments import full_system
from homent.noise import noise_decomposition, noise_gradient_at_identity
from homent.svar import (
    DegenerateInnovationError,
    MomentWorkspace,
    SingularMatrixError,
    coef_position,
    innovations,
    moment_values,
    vec,
)
from homent.varmodel import ols_var

__all__ = ["InputError", "build_parser", "main"]

SCHEMA_VERSION = "1"

WEIGHTING_CHOICES = ("si", "smi", "true", "identity")
INFERENCE_CHOICES = ("smi", "si")
# Estimators that need the shock distributions (supplied via config `shocks`).
_DIST_ESTIMATORS = ("gmm_star", "csue_star")

_NUMERICAL_ERRORS = (
    UnidentifiedModelError,
    DegenerateInnovationError,
    SingularMatrixError,
    np.linalg.LinAlgError,
)

_CONFIG_KEYS = {
    "threads",
    "seed",
    "out",
    "lags",
    "estimator",
    "weighting",
    "scale_updating",
    "inference",
    "level",
    "shocks",
    "tests",
    "grid",
}


class InputError(Exception):
    """Malformed user input; maps to exit code 2."""


# ---------------------------------------------------------------------------
# input handling
# ---------------------------------------------------------------------------


def _read_panel(path: str | Path) -> np.ndarray:
    """T x n numeric panel from a headered CSV; errors carry line numbers."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    rows: list[list[float]] = []
    width: int | None = None
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise InputError(f"{path}:1: empty file; expected a header row")
        for lineno, line in enumerate(reader, start=2):
            if not line:
                continue
            if width is None:
                width = len(line)
            elif len(line) != width:
                raise InputError(
                    f"{path}:{lineno}: ragged row ({len(line)} fields, "
                    f"expected {width})"
                )
            try:
                rows.append([float(x) for x in line])
            except ValueError:
                bad = next(x for x in line if not _is_number(x))
                raise InputError(
                    f"{path}:{lineno}: non-numeric value {bad!r}"
                ) from None
    if not rows:
        raise InputError(f"{path}:2: no data rows after the header")
    return np.asarray(rows, dtype=np.float64)


def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def _load_config(path: str | Path | None) -> dict:
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    try:
        if path.suffix.lower() == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:
                import tomli as tomllib
            try:
                data = tomllib.loads(path.read_text(encoding="utf-8"))
            except tomllib.TOMLDecodeError as exc:
                raise InputError(f"{path}: {exc}") from None
        elif path.suffix.lower() == ".json":
            try:
                data = json.loads(path.read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}:{exc.lineno}: {exc.msg}") from None
        else:
            raise InputError(
                f"{path}: config must be a .toml or .json file"
            )
    except OSError as exc:
        raise InputError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise InputError(f"{path}: config must be a table of settings")
    unknown = sorted(set(data) - _CONFIG_KEYS)
    if unknown:
        raise InputError(
            f"{path}: unknown config keys {unknown}; "
            f"allowed: {sorted(_CONFIG_KEYS)}"
        )
    return data


def _resolve(args: argparse.Namespace, config: dict, key: str, default):
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in config:
        return config[key]
    return default


def _parse_shocks(config: dict, n: int) -> tuple[ShockDistributionSpec, ...] | None:
    raw = config.get("shocks")
    if raw is None:
        return None
    if isinstance(raw, (str, dict)):
        raw = [raw]
    try:
        specs = [
            preset(s) if isinstance(s, str) else ShockDistributionSpec.from_dict(s)
            for s in raw
        ]
    except ValueError as exc:
        raise InputError(f"config shocks: {exc}") from None
    if len(specs) == 1 and n > 1:
        specs = specs * n
    if len(specs) != n:
        raise InputError(
            f"config supplies {len(specs)} shock specs for an n={n} panel"
        )
    return tuple(specs)


# ---------------------------------------------------------------------------
# shared estimation plumbing
# ---------------------------------------------------------------------------


def _run_requested_estimator(
    U: np.ndarray,
    estimator: str,
    weighting: str | None,
    scale_updating: bool,
    inference: str,
    dists: tuple[ShockDistributionSpec, ...] | None,
    seed: int | None,
) -> tuple[EstimateResult, MomentWorkspace, str]:
    """Run either a registry estimator or a custom weighting/update combo."""
    n = U.shape[1] if U.ndim == 2 else 1
    sys = full_system(n)
    ws = MomentWorkspace(U, sys)
    rng = np.random.default_rng(seed) if seed is not None else None
    if weighting is not None:
        label = f"weighting={weighting},scale_updating={'on' if scale_updating else 'off'}"
        if weighting == "identity":
            spec = WeightingSpec.identity(scale_updating=scale_updating)
            res = minimize_gmm(
                U, sys, spec, rng=rng, workspace=ws, basis=inference
            )
        elif weighting == "true":
            if dists is None:
                raise InputError(
                    "weighting 'true' needs shock distributions; add a "
                    "`shocks` list to the config file"
                )
            spec = WeightingSpec.true(dists, scale_updating=scale_updating)
            res = minimize_gmm(
                U, sys, spec, rng=rng, workspace=ws, basis=inference
            )
        else:  # data-based: warm up with identity, reweight at the pilot fit
            step1 = minimize_gmm(
                U,
                sys,
                WeightingSpec.identity(scale_updating=scale_updating),
                rng=rng,
                workspace=ws,
                basis=inference,
            )
            maker = WeightingSpec.si if weighting == "si" else WeightingSpec.smi
            spec = maker(B_ref=step1.B_hat, scale_updating=scale_updating)
            res = minimize_gmm(
                U,
                sys,
                spec,
                start=step1.B_hat,
                rng=rng,
                workspace=ws,
                basis=inference,
            )
            res = replace(res, iterations=step1.iterations + res.iterations)
        return res, ws, label
    if estimator in _DIST_ESTIMATORS and dists is None:
        raise InputError(
            f"estimator {estimator!r} needs known shock distributions; add a "
            "`shocks` list to the config file or pick a data-based estimator"
        )
    runners = {
        "gmm_star": lambda: gmm_star(U, sys, dists, rng=rng),
        "gmm2": lambda: two_step_gmm(U, sys, rng=rng),
        "csue2": lambda: two_step_csue(U, sys, rng=rng),
        "csue_star": lambda: csue_star(U, sys, dists, rng=rng),
        "csue_si": lambda: csue_si(U, sys, rng=rng),
        "cue_si": lambda: cue(U, sys, "si", rng=rng),
        "cue_smi": lambda: cue(U, sys, "smi", rng=rng),
    }
    if estimator not in runners:
        raise InputError(
            f"unknown estimator {estimator!r}; choose from {ESTIMATOR_NAMES}"
        )
    return runners[estimator](), ws, estimator


def _avar_in_reported_coordinates(
    res: EstimateResult,
    ws: MomentWorkspace,
    basis: str,
    dists: tuple[ShockDistributionSpec, ...] | None,
) -> np.ndarray:
    """Asymptotic covariance of vec(B_hat) under the requested basis."""
    if basis == res.basis:
        return res.avar.matrix
    S_b, G_b = basis_estimates(ws, basis, res.B_opt, dists)
    W_b = avar_weight(res.weighting, basis, S_b, res.W_resolved)
    avar = asymptotic_covariance(G_b, S_b, W_b, ws.T, basis)
    Tr = np.kron(res.P_norm.T, np.eye(res.n))
    return Tr @ avar.matrix @ Tr.T


def _matrix(M: np.ndarray) -> list[list[float]]:
    return [[float(x) for x in row] for row in np.asarray(M)]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_estimate(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    out = Path(_resolve(args, config, "out", "."))
    lags = _resolve(args, config, "lags", None)
    estimator = _resolve(args, config, "estimator", "csue2")
    weighting = _resolve(args, config, "weighting", None)
    scale_updating = _resolve(args, config, "scale_updating", "off") == "on"
    inference = _resolve(args, config, "inference", "smi")
    level = float(config.get("level", 0.90))
    seed = _resolve(args, config, "seed", None)

    data = _read_panel(args.data)
    var_fit = None
    if lags is not None:
        try:
            var_fit = ols_var(data, lags=int(lags), intercept=True)
        except ValueError as exc:
            raise InputError(f"{args.data}: {exc}") from None
        U = var_fit.residuals
    else:
        U = data
    n = U.shape[1]
    dists = _parse_shocks(config, n)

    res, ws, label = _run_requested_estimator(
        U, estimator, weighting, scale_updating, inference, dists, seed
    )
    if not res.converged:
        print(
            f"estimation did not converge: loss={res.loss:.6g} "
            f"gradient_norm={res.gradient_norm:.3g} iterations={res.iterations}",
            file=_sys.stderr,
        )
        return 3

    V = _avar_in_reported_coordinates(res, ws, inference, dists)
    beta = vec(res.B_hat)
    T = ws.T
    se = np.sqrt(np.clip(np.diag(V), 0.0, None) / T)
    ci_lo = np.empty((n, n))
    ci_hi = np.empty((n, n))
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            pos = coef_position(i, j, n)
            lo, hi = confidence_interval(pos, V, beta, T=T, level=level)
            ci_lo[i - 1, j - 1] = lo
            ci_hi[i - 1, j - 1] = hi

    tests_out = []
    for raw in config.get("tests", []):
        try:
            spec = TestSpec.from_dict(raw)
        except ValueError as exc:
            raise InputError(f"config tests: {exc}") from None
        if spec.kind != "coef":
            raise InputError(
                f"test {spec.name!r}: only single-coefficient tests apply to "
                "estimated data (no true matrix is available)"
            )
        if not (1 <= spec.i <= n and 1 <= spec.j <= n):
            raise InputError(f"test {spec.name!r} indexes out of range for n={n}")
        R = np.zeros((1, n * n))
        R[0, coef_position(spec.i, spec.j, n)] = 1.0
        wres = wald(R, np.array([spec.value]), beta, V, T=T)
        tests_out.append(
            {
                "name": spec.name,
                "statistic": wres.statistic,
                "p_value": wres.p_value,
                "dof": 1,
                "floored": wres.floored,
            }
        )

    E = innovations(res.B_hat, U)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "estimator": label,
        "T": T,
        "n": n,
        "lags": None if var_fit is None else var_fit.lags,
        "converged": bool(res.converged),
        "loss": res.loss,
        "iterations": res.iterations,
        "gradient_norm": res.gradient_norm,
        "B_hat": _matrix(res.B_hat),
        "innovation_variances": [float(v) for v in np.mean(E * E, axis=0)],
        "inference": {
            "basis": inference,
            "level": level,
            "avar": _matrix(V),
            "standard_errors": _matrix(se.reshape((n, n), order="F")),
            "ci_lower": _matrix(ci_lo),
            "ci_upper": _matrix(ci_hi),
        },
        "tests": tests_out,
    }
    if var_fit is not None:
        payload["var_fit"] = {
            "coeffs": [_matrix(A) for A in var_fit.coeffs],
            "intercept": None
            if var_fit.intercept is None
            else [float(c) for c in var_fit.intercept],
        }
    est_path = out / "estimate.json"
    est_path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    innov_path = out / "innovations.csv"
    with innov_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"e{i}" for i in range(1, n + 1)])
        for row in E:
            writer.writerow([format(x, ".17g") for x in row])
    print(est_path)
    print(innov_path)
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    out = Path(_resolve(args, config, "out", "."))
    threads = int(_resolve(args, config, "threads", os.cpu_count() or 1))
    try:
        sc = Scenario.from_file(args.scenario)
    except FileNotFoundError:
        raise InputError(f"{args.scenario}: no such file") from None
    except ValueError as exc:
        raise InputError(f"{args.scenario}: {exc}") from None
    except Exception as exc:  # TOML/JSON decode errors carry line info
        raise InputError(f"{args.scenario}: {exc}") from None
    seed = _resolve(args, config, "seed", None)
    if seed is not None:
        sc = replace(sc, seed=int(seed))
    if args.dry_run:
        plan = {
            "scenario": sc.name,
            "hash": sc.scenario_hash(),
            "n": sc.n,
            "sample_sizes": list(sc.T_list),
            "replications": sc.replications,
            "estimators": list(sc.estimators),
            "inference": list(sc.inference),
            "tests": [t.name for t in sc.tests],
            "expected_records": sc.replications
            * len(sc.T_list)
            * len(sc.estimators),
            "threads": threads,
            "out": str(out),
        }
        print(json.dumps(plan, indent=2))
        return 0
    from homent.report import render_figures

    result = run_scenario(sc, out, threads=threads)
    figures = render_figures(result.records, out, B0=sc.B0, level=sc.level)
    if result.high_failure_warning:
        print(
            f"warning: {100 * result.nonconverged_fraction:.1f}% of "
            "replications failed to converge",
            file=_sys.stderr,
        )
    print(result.records_path)
    for path in result.summary_paths.values():
        print(path)
    for path in figures.values():
        print(path)
    print(result.manifest_path)
    return 0


def cmd_noise_analyze(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    out = Path(_resolve(args, config, "out", "."))
    estimator = _resolve(args, config, "estimator", "csue2")
    weighting = _resolve(args, config, "weighting", None)
    scale_updating = _resolve(args, config, "scale_updating", "off") == "on"
    inference = _resolve(args, config, "inference", "smi")
    seed = _resolve(args, config, "seed", None)
    grid_cfg = config.get("grid", {})
    if not isinstance(grid_cfg, dict) or set(grid_cfg) - {"min", "max", "points"}:
        raise InputError(
            "config grid must be a table with keys min, max, points"
        )
    lo = float(grid_cfg.get("min", 0.7))
    hi = float(grid_cfg.get("max", 1.3))
    points = int(grid_cfg.get("points", 13))
    if not (0 < lo <= 1.0 <= hi) or points < 2:
        raise InputError(
            f"grid must straddle 1.0 with at least 2 points; got "
            f"[{lo}, {hi}] with {points}"
        )

    U = _read_panel(args.data)
    n = U.shape[1]
    dists = _parse_shocks(config, n)
    res, ws, label = _run_requested_estimator(
        U, estimator, weighting, scale_updating, inference, dists, seed
    )
    sys = ws.sys
    T = ws.T
    B = res.B_hat
    F = moment_values(B, U, sys)
    Ef = F.mean(axis=0)
    S_unc = (F.T @ F) / T
    # evaluation weight: inverse moment covariance of the chosen basis at B
    S_basis, _ = basis_estimates(ws, inference, B, dists)
    W = floored_inverse(S_basis)

    scales = np.linspace(lo, hi, points)
    if not np.any(np.isclose(scales, 1.0)):
        scales = np.sort(np.append(scales, 1.0))
    grid_rows = []
    for c in scales:
        dec = noise_decomposition(
            W, B, float(c) * np.ones(n), sys, S_unc, Ef, T
        )
        grid_rows.append(
            {
                "scale": float(c),
                "quadratic": dec.term_quadratic,
                "cross": dec.term_cross,
                "constant": dec.term_constant,
                "total": dec.total,
            }
        )
    payload = {
        "schema_version": SCHEMA_VERSION,
        "n": n,
        "T": T,
        "conditions": sys.size,
        "estimator": label,
        "weighting_basis": inference,
        "B": _matrix(B),
        "grid": grid_rows,
        "identity_gradient": [
            float(g) for g in noise_gradient_at_identity(sys, T)
        ],
    }
    out.mkdir(parents=True, exist_ok=True)
    path = out / "noise_analysis.json"
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    print(path)
    return 0


def cmd_moments(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    out = Path(_resolve(args, config, "out", "."))
    name = args.spec
    if name.endswith((".toml", ".json")):
        path = Path(name)
        if not path.exists():
            raise InputError(f"{path}: no such file")
        try:
            if path.suffix == ".toml":
                try:
                    import tomllib
                except ModuleNotFoundError:
                    import tomli as tomllib
                data = tomllib.loads(path.read_text(encoding="utf-8"))
            else:
                data = json.loads(path.read_text(encoding="utf-8"))
            spec = ShockDistributionSpec.from_dict(data)
        except Exception as exc:
            raise InputError(f"{path}: {exc}") from None
    else:
        try:
            spec = preset(name)
        except ValueError as exc:
            raise InputError(str(exc)) from None
    moments = population_moments(spec, max_order=8)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "spec": spec.to_dict(),
        "max_order": 8,
        "moments": {str(r): float(moments[r]) for r in range(1, 9)},
    }
    out.mkdir(parents=True, exist_ok=True)
    path = out / "moments.json"
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    print(path)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML or JSON file with default settings")
    p.add_argument("--out", help="output directory (default: current)")
    p.add_argument("--seed", type=int, help="seed for optimizer restarts")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="homent",
        description=(
            "Estimate simultaneous-interaction matrices from higher-order "
            "moment conditions of independent non-Gaussian shocks."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser(
        "estimate", help="fit the mixing matrix to a CSV panel"
    )
    est.add_argument("data", help="CSV of observables or reduced-form shocks")
    _add_common(est)
    est.add_argument(
        "--lags", type=int, help="fit this many autoregressive lags first"
    )
    est.add_argument(
        "--estimator",
        choices=ESTIMATOR_NAMES,
        help="registry estimator (default csue2)",
    )
    est.add_argument(
        "--weighting",
        choices=WEIGHTING_CHOICES,
        help="override: custom weighting base instead of a registry estimator",
    )
    est.add_argument(
        "--scale-updating",
        choices=("on", "off"),
        dest="scale_updating",
        help="with --weighting: continuously rescale the weight (default off)",
    )
    est.add_argument(
        "--inference",
        choices=INFERENCE_CHOICES,
        help="covariance basis for intervals and tests (default smi)",
    )
    est.set_defaults(func=cmd_estimate)

    sim = sub.add_parser("simulate", help="run a scenario study")
    sim.add_argument("scenario", help="scenario .toml or .json file")
    _add_common(sim)
    sim.add_argument(
        "--threads", type=int, help="parallel replications (default: all cores)"
    )
    sim.add_argument(
        "--dry-run",
        action="store_true",
        help="validate and print the resolved plan without computing",
    )
    sim.set_defaults(func=cmd_simulate)

    noise = sub.add_parser(
        "noise-analyze",
        help="decompose the expected objective under uniform rescaling",
    )
    noise.add_argument("data", help="CSV panel to fit and analyze")
    _add_common(noise)
    noise.add_argument(
        "--estimator", choices=ESTIMATOR_NAMES, help="base fit (default csue2)"
    )
    noise.add_argument(
        "--weighting", choices=WEIGHTING_CHOICES, help="custom weighting base"
    )
    noise.add_argument(
        "--scale-updating", choices=("on", "off"), dest="scale_updating"
    )
    noise.add_argument(
        "--inference",
        choices=INFERENCE_CHOICES,
        help="basis of the evaluation weight (default smi)",
    )
    noise.set_defaults(func=cmd_noise_analyze)

    mom = sub.add_parser(
        "moments", help="population moment table of a shock distribution"
    )
    mom.add_argument(
        "spec",
        help="preset name (gaussian, mixture, skew_normal, student_t, "
        "common_volatility) or a .toml/.json spec file",
    )
    _add_common(mom)
    mom.set_defaults(func=cmd_moments)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 2
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=_sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
