"""Aggregate per-run metrics CSVs into comparison tables and a markdown
report."""

from __future__ import annotations

import math
import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .artifacts import SchemaError, read_manifest, read_metrics  # noqa: E402
from .plots import _RC, _save  # noqa: E402


def _mean(vals):
    vals = [v for v in vals if not math.isnan(v)]
    return sum(vals) / len(vals) if vals else math.nan


def _fmt(v, digits=3):
    if isinstance(v, float):
        return "-" if math.isnan(v) else f"{v:.{digits}f}"
    return str(v)


def collect_metrics(run_dirs: list[str]) -> tuple[list[dict], list[str]]:
    """Aggregate metrics rows across run directories; returns (table rows,
    warning strings)."""
    rows = []
    hashes = {}
    for run_dir in run_dirs:
        man = read_manifest(run_dir)
        hashes[run_dir] = man.get("config_hash", "?")
        for label in man.get("estimators", []):
            path = os.path.join(run_dir, label, "metrics.csv")
            if not os.path.exists(path):
                raise SchemaError(f"metrics file missing: {path}")
            for rec in read_metrics(path):
                rows.append({"scenario": man.get("scenario", "?"),
                             "estimator": rec["estimator"],
                             "fdt_s": float(rec["fdt_s"]),
                             "far": float(rec["far"]),
                             "missed": int(rec["missed"]),
                             "mae_theta": _mean([
                                 float(v) for k, v in rec.items()
                                 if k.startswith("mae_pct_") and v])})
    warnings = []
    if len(set(hashes.values())) > 1:
        detail = ", ".join(f"{os.path.basename(k)}={v}"
                           for k, v in sorted(hashes.items()))
        warnings.append(f"config hashes differ across inputs: {detail}")
    return rows, warnings


def summarize(rows: list[dict]) -> list[dict]:
    grouped = defaultdict(list)
    for r in rows:
        grouped[(r["scenario"], r["estimator"])].append(r)
    out = []
    for (scenario, estimator), group in sorted(grouped.items()):
        out.append({
            "scenario": scenario,
            "estimator": estimator,
            "runs": len(group),
            "fdt_s": _mean([g["fdt_s"] for g in group]),
            "far": _mean([g["far"] for g in group]),
            "missed": sum(g["missed"] for g in group),
            "mae_theta_pct": _mean([g["mae_theta"] for g in group]),
        })
    return out


COLUMNS = ("scenario", "estimator", "runs", "fdt_s", "far", "missed",
           "mae_theta_pct")


def write_markdown(summary: list[dict], warnings: list[str],
                   out_path: str) -> str:
    lines = ["# Estimation run summary", ""]
    for w in warnings:
        lines.append(f"> **Warning:** {w}")
        lines.append("")
    lines.append("| " + " | ".join(COLUMNS) + " |")
    lines.append("|" + "---|" * len(COLUMNS))
    for row in summary:
        lines.append("| " + " | ".join(_fmt(row[c]) for c in COLUMNS) + " |")
    lines.append("")
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines))
    return out_path


def write_table_image(summary: list[dict], out_path: str) -> str:
    cells = [[_fmt(row[c]) for c in COLUMNS] for row in summary]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(8.0, 0.5 + 0.3 * (len(cells) + 1)))
        ax.set_axis_off()
        table = ax.table(cellText=cells, colLabels=COLUMNS, loc="center")
        table.auto_set_font_size(False)
        table.set_fontsize(8)
        return _save(fig, out_path)


def plot_summary(run_dirs: list[str], out_md: str,
                 out_table: str | None = None) -> dict:
    rows, warnings = collect_metrics(run_dirs)
    summary = summarize(rows)
    result = {"markdown": write_markdown(summary, warnings, out_md),
              "warnings": warnings, "rows": summary}
    if out_table:
        result["table_image"] = write_table_image(summary, out_table)
    return result
