"""Run-artifact readers and schema checks.

A run directory is laid out as written by the scenario driver:

    <run_dir>/manifest.json
    <run_dir>/thresholds.json
    <run_dir>/<estimator label>/residuals_run###.csv
    <run_dir>/<estimator label>/metrics.csv
"""

from __future__ import annotations

import csv
import json
import os

MODES = ("M1", "M2", "M3", "M4", "M5", "M6", "M7", "M8")

RESIDUAL_COLUMNS = (
    ["t"] + [f"r_{m}" for m in MODES] + [f"trip_{m}" for m in MODES]
    + [f"sev_{m}" for m in MODES] + ["overall", "decided"]
)


class SchemaError(ValueError):
    """Artifact does not match the expected schema."""


def read_csv_columns(path: str, required: list[str]) -> dict[str, list]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        missing = [c for c in required if c not in header]
        extra = [c for c in header if c not in required]
        if missing:
            raise SchemaError(
                f"{path}: missing columns {missing}"
                + (f"; unexpected columns {extra}" if extra else ""))
        idx = {c: header.index(c) for c in header}
        out: dict[str, list] = {c: [] for c in header}
        for row in reader:
            for c, i in idx.items():
                out[c].append(row[i])
    return out


def read_residuals(path: str) -> dict:
    cols = read_csv_columns(path, RESIDUAL_COLUMNS)
    data = {"t": [float(v) for v in cols["t"]]}
    for m in MODES:
        data[f"r_{m}"] = [float(v) for v in cols[f"r_{m}"]]
        data[f"trip_{m}"] = [int(float(v)) for v in cols[f"trip_{m}"]]
    return data


def read_metrics(path: str) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise SchemaError(f"{path}: empty metrics file")
    required = {"estimator", "run", "fdt_s", "far", "missed"}
    missing = required - set(rows[0])
    if missing:
        raise SchemaError(f"{path}: missing columns {sorted(missing)}")
    return rows


def read_manifest(run_dir: str) -> dict:
    path = os.path.join(run_dir, "manifest.json")
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def read_thresholds(run_dir: str) -> dict[str, list[float]]:
    path = os.path.join(run_dir, "thresholds.json")
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return {label: [float(v) for v in body["r_max"]]
            for label, body in data["thresholds"].items()}


def estimator_labels(run_dir: str) -> list[str]:
    man = read_manifest(run_dir)
    return list(man.get("estimators", []))


def residual_files(run_dir: str, label: str) -> list[str]:
    d = os.path.join(run_dir, label)
    if not os.path.isdir(d):
        raise SchemaError(f"estimator directory missing: {d}")
    files = sorted(f for f in os.listdir(d)
                   if f.startswith("residuals_run") and f.endswith(".csv"))
    if not files:
        raise SchemaError(f"no residual CSVs under {d}")
    return [os.path.join(d, f) for f in files]
