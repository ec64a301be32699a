"""Render study figures to image files next to the delimited outputs.

Every function takes the records table produced by the scenario runner and
writes one PNG; :func:`render_figures` writes every figure the records
support and returns the paths.  Rendering uses the non-interactive backend,
so it works in headless sessions.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from homent.mc import summarize  # noqa: E402

__all__ = [
    "plot_coefficient_boxes",
    "plot_coverage_bars",
    "plot_power_curves",
    "plot_variance_distributions",
    "render_figures",
]

_DPI = 150


def _estimator_order(records: pd.DataFrame) -> list[str]:
    return list(pd.unique(records["estimator"]))


def plot_variance_distributions(records: pd.DataFrame, path: str | Path) -> Path:
    """Histogram of the first innovation's sample variance per estimator."""
    path = Path(path)
    ests = _estimator_order(records)
    T_values = sorted(records["T"].unique())
    fig, axes = plt.subplots(
        1, len(T_values), figsize=(5.0 * len(T_values), 3.6), squeeze=False
    )
    for ax, T in zip(axes[0], T_values):
        sub = records[records["T"] == T]
        for est in ests:
            vals = sub.loc[sub["estimator"] == est, "var_e1"].dropna()
            if vals.empty:
                continue
            ax.hist(vals, bins=30, alpha=0.55, label=est, density=True)
        ax.axvline(1.0, color="black", lw=1, ls="--")
        ax.set_title(f"T = {T}")
        ax.set_xlabel("variance of first innovation")
        ax.legend(fontsize=8)
    axes[0][0].set_ylabel("density")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def plot_coefficient_boxes(
    records: pd.DataFrame, path: str | Path, B0: np.ndarray | None = None
) -> Path:
    """Box plots of every estimated coefficient, grouped by estimator."""
    path = Path(path)
    coef_cols = sorted(c for c in records.columns if c.endswith("_hat"))
    ests = _estimator_order(records)
    T_values = sorted(records["T"].unique())
    fig, axes = plt.subplots(
        len(T_values), 1, figsize=(1.1 * len(coef_cols) * len(ests) + 2, 3.4 * len(T_values)),
        squeeze=False,
    )
    n = int(round(np.sqrt(len(coef_cols))))
    for row_ax, T in zip(axes[:, 0], T_values):
        sub = records[records["T"] == T]
        data, labels, truths = [], [], []
        for col in coef_cols:
            for est in ests:
                vals = sub.loc[sub["estimator"] == est, col].dropna()
                data.append(vals)
                labels.append(f"{col[:-4]}\n{est}")
                if B0 is not None:
                    i = int(col[1]) - 1
                    j = int(col[2]) - 1
                    truths.append(B0[i, j])
        row_ax.boxplot(data, tick_labels=labels, showfliers=False)
        if truths:
            row_ax.plot(
                range(1, len(truths) + 1), truths, "r_", markersize=14, label="truth"
            )
            row_ax.legend(fontsize=8)
        row_ax.set_title(f"T = {T}")
        row_ax.tick_params(axis="x", labelsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def plot_power_curves(records: pd.DataFrame, path: str | Path) -> Path:
    """Rejection rate against the hypothesized value, by estimator and basis."""
    path = Path(path)
    power = summarize(records, "power_curve")
    if power.empty:
        raise ValueError("records contain no power-test columns")
    T_values = sorted(power["T"].unique())
    fig, axes = plt.subplots(
        1, len(T_values), figsize=(5.0 * len(T_values), 3.6), squeeze=False
    )
    for ax, T in zip(axes[0], T_values):
        sub = power[power["T"] == T]
        for (est, test, basis), grp in sub.groupby(["estimator", "test", "basis"]):
            grp = grp.sort_values("b")
            ax.plot(
                grp["b"], grp["rejection_pct"], marker="o",
                label=f"{est}/{basis} ({test})",
            )
        ax.set_title(f"T = {T}")
        ax.set_xlabel("hypothesized value")
        ax.set_ylim(-3, 103)
        ax.legend(fontsize=7)
    axes[0][0].set_ylabel("rejection rate (%)")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def plot_coverage_bars(
    records: pd.DataFrame, path: str | Path, level: float = 0.90
) -> Path:
    """Confidence-interval coverage per coefficient, estimator, and basis."""
    path = Path(path)
    cov = summarize(records, "coverage")
    if cov.empty:
        raise ValueError("records contain no coverage columns")
    T_values = sorted(cov["T"].unique())
    fig, axes = plt.subplots(
        1, len(T_values), figsize=(5.5 * len(T_values), 3.6), squeeze=False
    )
    for ax, T in zip(axes[0], T_values):
        sub = cov[cov["T"] == T]
        keys = [
            f"{r.coef}/{r.estimator}/{r.basis}" for r in sub.itertuples()
        ]
        ax.bar(range(len(keys)), sub["coverage_pct"], tick_label=keys)
        ax.axhline(100 * level, color="black", lw=1, ls="--", label="nominal")
        ax.set_title(f"T = {T}")
        ax.set_ylim(0, 103)
        ax.tick_params(axis="x", labelrotation=90, labelsize=6)
        ax.legend(fontsize=8)
    axes[0][0].set_ylabel("coverage (%)")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def render_figures(
    records: pd.DataFrame,
    out_dir: str | Path,
    B0: np.ndarray | None = None,
    level: float = 0.90,
) -> dict[str, Path]:
    """Write every figure the records support; return name -> path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}
    written["variance_distributions"] = plot_variance_distributions(
        records, out / "variance_distributions.png"
    )
    written["coefficient_boxes"] = plot_coefficient_boxes(
        records, out / "coefficient_boxes.png", B0=B0
    )
    if any(c.startswith("power_") for c in records.columns):
        written["power_curves"] = plot_power_curves(records, out / "power_curves.png")
    if any(c.startswith("cover_") for c in records.columns):
        written["coverage_bars"] = plot_coverage_bars(
            records, out / "coverage_bars.png", level=level
        )
    return written
