from __future__ import annotations

import xml.etree.ElementTree as ET

import pandas as pd
import pytest

from services.crowdteam.app import charts
from services.crowdteam.app.bench import BENCH_COLUMNS, RANKS_COLUMNS, SWEEP_COLUMNS
from services.crowdteam.app.charts import detect_schema, render_chart


def _bench_csv(path) -> None:
    rows = []
    for trial in range(3):
        for solver, te in (("exhaustive", 0.4 + trial * 0.01), ("secretary", 0.35 + trial * 0.01)):
            rows.append([trial, solver, te, 0.8, 0.7, 0.02, 0.4, 0.9, 100 if solver == "secretary" else 6552, 1500.0, 1])
    pd.DataFrame(rows, columns=BENCH_COLUMNS).to_csv(path, index=False)


def _sweep_csv(path) -> None:
    rows = []
    for k in (10, 133, 360):
        for solver in ("exhaustive", "secretary"):
            for metric in ("te_total", "p_best"):
                rows.append([k, solver, metric, 0.3 + k / 1000, 0.05, 0.01, 100])
    pd.DataFrame(rows, columns=SWEEP_COLUMNS).to_csv(path, index=False)


def test_detect_schema() -> None:
    assert detect_schema(BENCH_COLUMNS) == "bench"
    assert detect_schema(SWEEP_COLUMNS) == "sweep"
    assert detect_schema(RANKS_COLUMNS) == "ranks"
    with pytest.raises(ValueError, match="schema_mismatch") as e:
        detect_schema(["a", "b"])
    assert ",".join(BENCH_COLUMNS) in str(e.value)


def test_bench_chart_is_deterministic_svg(tmp_path) -> None:
    csv = tmp_path / "bench.csv"
    _bench_csv(csv)
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    assert render_chart(str(csv), str(a)) == "bench"
    render_chart(str(csv), str(b))
    root = ET.parse(a).getroot()
    assert root.tag.endswith("svg")
    assert a.read_bytes() == b.read_bytes()


def test_sweep_chart_has_one_series_per_solver(tmp_path, monkeypatch) -> None:
    csv = tmp_path / "sweep.csv"
    _sweep_csv(csv)
    figs = []
    monkeypatch.setattr(charts, "_save", lambda fig, path: figs.append(fig))
    assert render_chart(str(csv), str(tmp_path / "s.svg"), metric="p_best") == "sweep"
    ax = figs[0].axes[0]
    assert [t.get_text() for t in ax.get_legend().get_texts()] == ["exhaustive", "secretary"]
    assert ax.get_ylabel() == "p_best"
    with pytest.raises(ValueError, match="unknown_metric"):
        render_chart(str(csv), str(tmp_path / "s.svg"), metric="nope")


def test_ranks_chart(tmp_path) -> None:
    csv = tmp_path / "ranks.csv"
    pd.DataFrame(
        [[360, 60, 0.3, 0.5, 0.17, 200.0, 1000], [360, 133, 0.37, 0.6, 0.37, 250.0, 1000]], columns=RANKS_COLUMNS
    ).to_csv(csv, index=False)
    out = tmp_path / "r.svg"
    assert render_chart(str(csv), str(out)) == "ranks"
    ET.parse(out)


def test_empty_inputs(tmp_path) -> None:
    header_only = tmp_path / "h.csv"
    header_only.write_text(",".join(BENCH_COLUMNS) + "\n", encoding="utf-8")
    with pytest.raises(RuntimeError, match="no data rows"):
        render_chart(str(header_only), str(tmp_path / "x.svg"))
    blank = tmp_path / "blank.csv"
    blank.write_text("", encoding="utf-8")
    with pytest.raises(RuntimeError, match="no data rows"):
        render_chart(str(blank), str(tmp_path / "x.svg"))
    with pytest.raises(FileNotFoundError):
        render_chart(str(tmp_path / "missing.csv"), str(tmp_path / "x.svg"))
