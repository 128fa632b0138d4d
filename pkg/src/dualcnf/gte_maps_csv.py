"""Tabular performance maps: CSV grids with bilinear interpolation.

Drop-in alternative to the analytic surrogates.  Each component map is a
CSV grid: first row the pressure-ratio axis, first column the corrected
speed (or inlet-pressure) axis, body the map value.  ``dump_map_tables``
samples the analytic maps onto such grids so the two modes can be
round-tripped against each other.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .gte_constants import EngineConstants, PerformanceMaps

__all__ = ["TabularPerformanceMaps", "dump_map_tables", "load_map_tables"]

MAP_NAMES = ("lpc_mdot", "lpc_eta", "hpc_mdot", "hpc_eta",
             "hpt_mdot", "hpt_eta", "lpt_mdot", "lpt_eta")


def _write_grid(path: str, row_axis, col_axis, values):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["axis", *[f"{v:.16e}" for v in col_axis]])
        for rv, row in zip(row_axis, values):
            w.writerow([f"{rv:.16e}", *[f"{v:.16e}" for v in row]])


def _read_grid(path: str):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    col_axis = np.array([float(v) for v in rows[0][1:]])
    row_axis = np.array([float(r[0]) for r in rows[1:]])
    values = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return row_axis, col_axis, values


def dump_map_tables(const: EngineConstants, out_dir: str,
                    n_speed: int = 25, n_pr: int = 41,
                    span: float = 0.25) -> None:
    """Sample the analytic maps onto CSV grids around the design point."""
    maps = PerformanceMaps(const)
    os.makedirs(out_dir, exist_ok=True)

    n2 = const.N2_des * np.linspace(1 - span, 1 + span, n_speed)
    pr = const.PR_LC_des * np.linspace(1 - span, 1 + span, n_pr)
    m = np.array([maps.lpc(pr, n)[0] for n in n2])
    e = np.array([maps.lpc(pr, n)[1] for n in n2])
    _write_grid(os.path.join(out_dir, "lpc_mdot.csv"), n2, pr, m)
    _write_grid(os.path.join(out_dir, "lpc_eta.csv"), n2, pr, e)

    # HPC grid over corrected speed (inlet-temperature effect folded into
    # the corrected-speed axis)
    nc = const.N1_des * np.linspace(1 - span, 1 + span, n_speed)
    prh = const.PR_HC_des * np.linspace(1 - span, 1 + span, n_pr)
    m = np.array([maps.hpc(prh, n, const.T_LC_des)[0] for n in nc])
    e = np.array([maps.hpc(prh, n, const.T_LC_des)[1] for n in nc])
    _write_grid(os.path.join(out_dir, "hpc_mdot.csv"), nc, prh, m)
    _write_grid(os.path.join(out_dir, "hpc_eta.csv"), nc, prh, e)

    # turbines: rows over inlet pressure, columns over expansion ratio;
    # the sqrt(T_ref/T_in) factor stays analytic (exact separable term)
    p_in = const.P_CC_des * np.linspace(1 - span, 1 + span, n_speed)
    er = const.ER_HT_des * np.linspace(1 - span, 1 + span, n_pr)
    m = np.array([maps.hpt(er, p, const.T_CC_des)[0] for p in p_in])
    e = np.array([maps.hpt(er, p, const.T_CC_des)[1] for p in p_in])
    _write_grid(os.path.join(out_dir, "hpt_mdot.csv"), p_in, er, m)
    _write_grid(os.path.join(out_dir, "hpt_eta.csv"), p_in, er, e)

    p_in = const.P_HT_des * np.linspace(1 - span, 1 + span, n_speed)
    er = const.ER_LT_des * np.linspace(1 - span, 1 + span, n_pr)
    m = np.array([maps.lpt(er, p, const.T_HT_des)[0] for p in p_in])
    e = np.array([maps.lpt(er, p, const.T_HT_des)[1] for p in p_in])
    _write_grid(os.path.join(out_dir, "lpt_mdot.csv"), p_in, er, m)
    _write_grid(os.path.join(out_dir, "lpt_eta.csv"), p_in, er, e)


@dataclass
class TabularPerformanceMaps:
    """PerformanceMaps-compatible evaluation backed by CSV grids."""

    const: EngineConstants
    tables: dict

    @classmethod
    def from_dir(cls, const: EngineConstants, map_dir: str):
        tables = {}
        for name in MAP_NAMES:
            path = os.path.join(map_dir, f"{name}.csv")
            if not os.path.exists(path):
                raise FileNotFoundError(f"map table missing: {path}")
            rows, cols, vals = _read_grid(path)
            tables[name] = RegularGridInterpolator(
                (rows, cols), vals, method="linear", bounds_error=False,
                fill_value=None)
        return cls(const, tables)

    def _eval(self, name, a, b):
        a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
        pts = np.stack([a.ravel(), b.ravel()], axis=1)
        return self.tables[name](pts).reshape(a.shape)

    def lpc(self, PR, N2):
        return self._eval("lpc_mdot", N2, PR), self._eval("lpc_eta", N2, PR)

    def hpc(self, PR, N1, T_in):
        nc = N1 / np.sqrt(T_in / self.const.T_LC_des)
        return self._eval("hpc_mdot", nc, PR), self._eval("hpc_eta", nc, PR)

    def hpt(self, ER, P_in, T_in):
        m = self._eval("hpt_mdot", P_in, ER) * np.sqrt(self.const.T_CC_des / T_in)
        return m, self._eval("hpt_eta", P_in, ER)

    def lpt(self, ER, P_in, T_in):
        m = self._eval("lpt_mdot", P_in, ER) * np.sqrt(self.const.T_HT_des / T_in)
        return m, self._eval("lpt_eta", P_in, ER)

    def nozzle(self, P_LT, T_M):
        return self.const.nozzle_constant * P_LT / np.sqrt(T_M)


def load_map_tables(const: EngineConstants, map_dir: str) -> TabularPerformanceMaps:
    return TabularPerformanceMaps.from_dir(const, map_dir)
