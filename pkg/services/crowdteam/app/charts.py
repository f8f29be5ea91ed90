from __future__ import annotations

import logging
import os
from typing import Literal

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from .bench import BENCH_COLUMNS, RANKS_COLUMNS, SWEEP_COLUMNS, Z95  # noqa: E402

logger = logging.getLogger(__name__)

ChartKind = Literal["bench", "sweep", "ranks"]

SCHEMAS: dict[str, list[str]] = {
    "bench": BENCH_COLUMNS,
    "sweep": SWEEP_COLUMNS,
    "ranks": RANKS_COLUMNS,
}

BENCH_PANELS = (
    ("te_total", "overall efficiency"),
    ("skill_perceived", "perceived skills"),
    ("uncertainty", "leader uncertainty"),
    ("cost", "team cost"),
    ("social", "social relationship"),
    ("wall_time_us", "running time (us)"),
)

# Secretary on the left, exhaustive on the right.
BAR_ORDER = ("secretary", "exhaustive")

_SVG_RC = {"svg.hashsalt": "crowdteam", "svg.fonttype": "path"}


def detect_schema(columns: list[str]) -> ChartKind:
    cols = [str(c) for c in columns]
    for kind, expected in SCHEMAS.items():
        if cols == expected:
            return kind  # type: ignore[return-value]
    expected_txt = "; ".join(f"{k}: {','.join(v)}" for k, v in SCHEMAS.items())
    raise ValueError(f"schema_mismatch: got columns {','.join(cols) or '(none)'}; expected one of {expected_txt}")


def read_results(path: str) -> tuple[ChartKind, pd.DataFrame]:
    if not os.path.isfile(path):
        raise FileNotFoundError(f"csv_not_found: {path}")
    try:
        df = pd.read_csv(path, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise RuntimeError(f"no data rows: {path} is empty") from None
    kind = detect_schema(list(df.columns))
    if df.empty:
        raise RuntimeError(f"no data rows: {path} has a header only")
    return kind, df


def _save(fig: plt.Figure, out_path: str) -> None:
    parent = os.path.dirname(os.path.abspath(out_path))
    os.makedirs(parent, exist_ok=True)
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_bench(df: pd.DataFrame, out_path: str) -> None:
    stats = df.groupby("solver")[[c for c, _ in BENCH_PANELS]].agg(["mean", "std", "count"])
    solvers = [s for s in BAR_ORDER if s in stats.index] + sorted(s for s in stats.index if s not in BAR_ORDER)
    fig, axes = plt.subplots(2, 3, figsize=(12, 7))
    for ax, (col, title) in zip(axes.flat, BENCH_PANELS):
        means = [float(stats.loc[s, (col, "mean")]) for s in solvers]
        errs = []
        for s in solvers:
            n = float(stats.loc[s, (col, "count")])
            sd = stats.loc[s, (col, "std")]
            errs.append(0.0 if n < 2 or pd.isna(sd) else Z95 * float(sd) / n**0.5)
        ax.bar(range(len(solvers)), means, yerr=errs, capsize=4, color=["tab:orange", "tab:blue"][: len(solvers)])
        ax.set_xticks(range(len(solvers)), solvers)
        ax.set_title(title)
        ax.set_ylabel(col)
    fig.tight_layout()
    _save(fig, out_path)


def plot_sweep(df: pd.DataFrame, out_path: str, metric: str = "te_total") -> None:
    sub = df[df["metric"] == metric]
    if sub.empty:
        available = ",".join(sorted(df["metric"].astype(str).unique()))
        raise ValueError(f"unknown_metric: {metric} (available: {available})")
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for solver, g in sub.groupby("solver", sort=True):
        g = g.sort_values("k")
        ax.errorbar(g["k"], g["mean"], yerr=g["ci95"], marker="o", capsize=3, label=str(solver))
    ax.set_xlabel("k")
    ax.set_ylabel(metric)
    ax.legend()
    fig.tight_layout()
    _save(fig, out_path)


def plot_ranks(df: pd.DataFrame, out_path: str) -> None:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    multi_n = df["n"].nunique() > 1
    for n, g in df.groupby("n", sort=True):
        g = g.sort_values("k")
        for col in ("p_rank1", "p_rank2_or_better", "p_full_scan"):
            label = f"{col} (n={n})" if multi_n else col
            ax.plot(g["k"], g[col], marker="o", label=label)
    ax.set_xlabel("k")
    ax.set_ylabel("probability")
    ax.set_ylim(0.0, 1.0)
    ax.legend()
    fig.tight_layout()
    _save(fig, out_path)


def render_chart(csv_path: str, out_path: str, metric: str | None = None) -> ChartKind:
    kind, df = read_results(csv_path)
    with matplotlib.rc_context(_SVG_RC):
        if kind == "bench":
            plot_bench(df, out_path)
        elif kind == "sweep":
            plot_sweep(df, out_path, metric or "te_total")
        else:
            plot_ranks(df, out_path)
    logger.info("wrote %s chart %s", kind, out_path)
    return kind
