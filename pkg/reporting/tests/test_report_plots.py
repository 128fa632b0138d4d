"""Golden-file regression of the plotting/report tools on a frozen fixture."""

import json
import os
import shutil

import pytest

from report_plots.artifacts import (
    SchemaError,
    read_manifest,
    read_residuals,
    read_thresholds,
)
from report_plots.cli import main as cli_main
from report_plots.plots import PlotSpec, label_color, plot_residuals
from report_plots.summary import collect_metrics, plot_summary

HERE = os.path.dirname(os.path.abspath(__file__))
FIXTURE = os.path.join(HERE, "fixtures", "case_fixture")
GOLDEN = os.path.join(HERE, "fixtures", "golden")


# ---------------------------------------------------------------------------
# artifact readers
# ---------------------------------------------------------------------------

def test_read_residuals_roundtrip():
    data = read_residuals(os.path.join(FIXTURE, "hybrid-vi-i",
                                       "residuals_run000.csv"))
    assert len(data["t"]) == 60
    assert data["t"][0] == pytest.approx(0.1)
    # M2 steps up after the onset
    assert data["r_M2"][-1] > 0.025


def test_schema_mismatch_reports_column_diff(tmp_path):
    bad = tmp_path / "residuals_run000.csv"
    bad.write_text("t,r_M1,bogus\n0.1,0.0,0.0\n")
    with pytest.raises(SchemaError, match="missing columns.*r_M2"):
        read_residuals(str(bad))


def test_thresholds_and_manifest():
    th = read_thresholds(FIXTURE)
    assert set(th) == {"hybrid-vi-i", "hybrid-i-i"}
    assert len(th["hybrid-vi-i"]) == 8
    man = read_manifest(FIXTURE)
    assert man["fault_onsets"] == {"M2": 3.0}


# ---------------------------------------------------------------------------
# residual panels
# ---------------------------------------------------------------------------

def test_plot_residuals_matches_golden(tmp_path):
    out = tmp_path / "residuals_m2_m4.svg"
    plot_residuals(PlotSpec(run_dir=FIXTURE, modes=("M2", "M4"),
                            out_path=str(out)))
    got = out.read_bytes()
    want = open(os.path.join(GOLDEN, "residuals_m2_m4.svg"), "rb").read()
    assert got == want


def test_panel_contains_threshold_band_and_onset_marker(tmp_path):
    out = tmp_path / "fig.svg"
    plot_residuals(PlotSpec(run_dir=FIXTURE, modes=("M2",), out_path=str(out)))
    svg = out.read_text()
    # dashed threshold band and the dotted onset line render as stroke-dasharray
    assert svg.count("stroke-dasharray") >= 3
    assert "M2" in svg


def test_empty_mode_selection_rejected_and_no_file(tmp_path):
    out = tmp_path / "nothing.svg"
    with pytest.raises(ValueError):
        PlotSpec(run_dir=FIXTURE, modes=(), out_path=str(out))
    assert not out.exists()


def test_unknown_mode_rejected():
    with pytest.raises(ValueError, match="unknown modes"):
        PlotSpec(run_dir=FIXTURE, modes=("M9",))


def test_two_labels_overlaid_with_deterministic_colors(tmp_path):
    out = tmp_path / "two.svg"
    plot_residuals(PlotSpec(run_dir=FIXTURE, modes=("M2",),
                            labels=("hybrid-vi-i", "hybrid-i-i"),
                            out_path=str(out)))
    svg = out.read_text()
    for label in ("hybrid-vi-i", "hybrid-i-i"):
        assert label in svg
        assert label_color(label).upper() in svg.upper()
    assert label_color("hybrid-vi-i") == label_color("hybrid-vi-i")
    assert label_color("hybrid-vi-i") != label_color("hybrid-i-i")


def test_rendering_is_byte_deterministic(tmp_path):
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    for out in (a, b):
        plot_residuals(PlotSpec(run_dir=FIXTURE, modes=("M1", "M2", "M3"),
                                out_path=str(out)))
    assert a.read_bytes() == b.read_bytes()


# ---------------------------------------------------------------------------
# summary report
# ---------------------------------------------------------------------------

def test_report_matches_golden(tmp_path):
    out_md = tmp_path / "report.md"
    out_tbl = tmp_path / "summary_table.svg"
    plot_summary([FIXTURE], str(out_md), str(out_tbl))
    assert out_md.read_bytes() == open(os.path.join(GOLDEN, "report.md"),
                                       "rb").read()
    assert out_tbl.read_bytes() == open(
        os.path.join(GOLDEN, "summary_table.svg"), "rb").read()


def test_single_run_single_row():
    rows, warnings = collect_metrics([FIXTURE])
    assert not warnings
    per_label = {r["estimator"] for r in rows}
    assert per_label == {"hybrid-vi-i", "hybrid-i-i"}


def test_conflicting_config_hashes_warn(tmp_path):
    clone = tmp_path / "clone"
    shutil.copytree(FIXTURE, clone)
    man_path = clone / "manifest.json"
    man = json.loads(man_path.read_text())
    man["config_hash"] = "ffff0000"
    man_path.write_text(json.dumps(man))
    out_md = tmp_path / "report.md"
    result = plot_summary([FIXTURE, str(clone)], str(out_md))
    assert result["warnings"]
    assert "Warning" in out_md.read_text()


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def test_cli_plot_residuals(tmp_path, capsys):
    out = tmp_path / "cli.svg"
    rc = cli_main(["plot-residuals", FIXTURE, "--modes", "M2,M3",
                   "--out", str(out)])
    assert rc == 0 and out.exists()


def test_cli_report(tmp_path, capsys):
    out = tmp_path / "r.md"
    rc = cli_main(["report", FIXTURE, "--out", str(out)])
    assert rc == 0 and out.exists()


def test_cli_error_exit(tmp_path, capsys):
    rc = cli_main(["plot-residuals", str(tmp_path / "nope"), "--out",
                   str(tmp_path / "x.svg")])
    assert rc == 2
    assert "error:" in capsys.readouterr().err
