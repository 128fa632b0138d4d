"""Residual generation, Monte-Carlo threshold calibration, detection /
isolation / identification decisions, and the evaluation metrics.

Residuals compare the healthy-reference parameter estimate (averaged over an
initial fault-free window) against the current estimate.  A mode trips only
after a configurable number of consecutive exceedances; identified severity
is the signed parameter deviation, so its sign matches the injected fault
direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gte_constants import FAULT_MODES

__all__ = [
    "Thresholds",
    "FdiiRecord",
    "RunMetrics",
    "InsufficientRuns",
    "residual",
    "healthy_reference",
    "calibrate_thresholds",
    "DecisionLogic",
    "decide",
    "confusion_metrics",
    "run_metrics",
]

N_MODES = len(FAULT_MODES)


class InsufficientRuns(ValueError):
    """Fewer healthy calibration runs than the configured minimum."""


@dataclass(frozen=True)
class Thresholds:
    """Per-mode residual bounds plus calibration provenance."""

    r_max: np.ndarray
    run_count: int = 0
    seed: int | None = None
    quantile: float = 0.999
    safety: float = 1.1
    burn_in_steps: int = 0

    def __post_init__(self):
        r = np.asarray(self.r_max, dtype=float)
        if r.shape != (N_MODES,) or np.any(r <= 0):
            raise ValueError("thresholds must be 8 strictly positive values")
        object.__setattr__(self, "r_max", r)

    def scaled(self, factor: float) -> "Thresholds":
        return Thresholds(self.r_max * factor, self.run_count, self.seed,
                          self.quantile, self.safety, self.burn_in_steps)


@dataclass
class FdiiRecord:
    """Per-step decision record."""

    t: float
    r: np.ndarray                 # 8-vector residual
    decisions: np.ndarray         # 8 booleans (persistent trips)
    severity: np.ndarray          # signed parameter deviations
    overall: str                  # "Healthy" or "Faulty"
    modes: tuple[str, ...] = ()

    def __post_init__(self):
        faulty = bool(np.any(self.decisions))
        expect = "Faulty" if faulty else "Healthy"
        if self.overall != expect:
            raise ValueError("overall flag inconsistent with decisions")


def residual(theta_healthy_ref: np.ndarray, theta_hat: np.ndarray) -> np.ndarray:
    """r = theta_h - theta_hat (positive residual for a loss-type fault)."""
    return np.asarray(theta_healthy_ref, dtype=float) - np.asarray(theta_hat, dtype=float)


def healthy_reference(theta_traj: np.ndarray, burn_in_steps: int,
                      window_steps: int) -> np.ndarray:
    """Mean parameter estimate over the initial fault-free window."""
    a = np.asarray(theta_traj, dtype=float)
    lo = burn_in_steps
    hi = min(len(a), burn_in_steps + window_steps)
    if hi <= lo:
        raise ValueError("healthy window is empty")
    return a[lo:hi].mean(axis=0)


def calibrate_thresholds(healthy_runs, quantile: float = 0.999,
                         safety: float = 1.1, burn_in_steps: int = 0,
                         min_runs: int = 50, floor: float = 1e-6,
                         seed: int | None = None) -> Thresholds:
    """Per-mode threshold from the |r| quantile over healthy-run residuals.

    healthy_runs: iterable of (T_i, 8) residual trajectories.
    """
    runs = [np.asarray(r, dtype=float) for r in healthy_runs]
    if len(runs) < min_runs:
        raise InsufficientRuns(
            f"{len(runs)} healthy runs provided, {min_runs} required")
    tails = [r[burn_in_steps:] for r in runs]
    if any(len(t) == 0 for t in tails):
        raise ValueError("burn-in leaves an empty residual trajectory")
    stacked = np.abs(np.vstack(tails))
    q = np.quantile(stacked, quantile, axis=0)
    r_max = np.maximum(q * safety, floor)
    return Thresholds(r_max, run_count=len(runs), seed=seed, quantile=quantile,
                      safety=safety, burn_in_steps=burn_in_steps)


class DecisionLogic:
    """Stateful persistence logic: a mode trips after ``window`` consecutive
    threshold exceedances; optional moving average smooths the residual."""

    def __init__(self, thresholds: Thresholds, window: int = 3,
                 smooth: int = 1):
        if window < 1 or smooth < 1:
            raise ValueError("window and smooth must be >= 1")
        self.thresholds = thresholds
        self.window = window
        self.smooth = smooth
        self._counts = np.zeros(N_MODES, dtype=int)
        self._recent: list[np.ndarray] = []

    def step(self, t: float, r: np.ndarray,
             severity: np.ndarray | None = None) -> FdiiRecord:
        r = np.asarray(r, dtype=float)
        self._recent.append(r)
        if len(self._recent) > self.smooth:
            self._recent.pop(0)
        r_eval = np.mean(self._recent, axis=0)
        exceed = np.abs(r_eval) > self.thresholds.r_max
        self._counts = np.where(exceed, self._counts + 1, 0)
        dec = self._counts >= self.window
        sev = np.asarray(severity, dtype=float) if severity is not None else -r
        overall = "Faulty" if np.any(dec) else "Healthy"
        modes = tuple(m for m, d in zip(FAULT_MODES, dec) if d)
        return FdiiRecord(t, r, dec, sev, overall, modes)


def decide(r: np.ndarray, thresholds: Thresholds, window: int = 3) -> FdiiRecord:
    """Single-shot decision for a residual held ``window`` samples.

    Convenience wrapper over DecisionLogic for steady residuals; trajectory
    evaluation should drive DecisionLogic.step directly.
    """
    logic = DecisionLogic(thresholds, window=window)
    rec = None
    for k in range(window):
        rec = logic.step(float(k), r)
    return rec


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def confusion_metrics(matrix: np.ndarray) -> dict:
    """Accuracy, false-positive rate and per-mode precision from 9x9 counts.

    Rows are actual classes (M1..M8, healthy), columns predicted.  Undefined
    ratios (zero denominators) are reported as NaN, not zero.
    """
    m = np.asarray(matrix, dtype=float)
    if m.shape != (9, 9) or np.any(m < 0):
        raise ValueError("confusion matrix must be 9x9 nonnegative counts")
    total = m.sum()
    acc = np.trace(m) / total if total > 0 else math.nan
    healthy_row = m[8]
    denom = healthy_row.sum()
    fp = healthy_row[:8].sum() / denom if denom > 0 else math.nan
    precision = {}
    for j, mode in enumerate(FAULT_MODES):
        col = m[:, j].sum()
        precision[mode] = m[j, j] / col if col > 0 else math.nan
    return {"ACC": acc, "FP": fp, "precision": precision}


@dataclass
class RunMetrics:
    """Per-run summary emitted to the metrics CSV."""

    mae_pct: dict                   # variable name -> MAE percent
    far: float
    fdt: float | None               # seconds from onset, None when no fault
    missed: bool
    isolated_modes: tuple[str, ...] = ()
    false_modes: tuple[str, ...] = ()
    diverged_steps: int = 0


def mae_percent(estimate: np.ndarray, truth: np.ndarray) -> float:
    est = np.asarray(estimate, dtype=float)
    tr = np.asarray(truth, dtype=float)
    denom = np.maximum(np.abs(tr), 1e-12)
    return float(np.mean(np.abs(est - tr) / denom) * 100.0)


def run_metrics(records: list[FdiiRecord], times: np.ndarray,
                fault_active: np.ndarray,
                onset: float | None,
                injected_modes: tuple[str, ...],
                tail_steps: int,
                est_states: np.ndarray | None = None,
                true_states: np.ndarray | None = None,
                est_params: np.ndarray | None = None,
                true_params: np.ndarray | None = None,
                state_names: tuple[str, ...] = (),
                param_names: tuple[str, ...] = (),
                diverged_steps: int = 0) -> RunMetrics:
    """Aggregate decisions and estimation accuracy for one run.

    fault_active is a (T, 8) boolean array marking which mode is truly
    faulted at each step; false alarms are counted over every (step, mode)
    pair whose mode is healthy at that time.
    """
    times = np.asarray(times, dtype=float)
    dec = np.array([rec.decisions for rec in records], dtype=bool)
    active = np.asarray(fault_active, dtype=bool)
    if dec.shape != active.shape:
        raise ValueError("decision/fault timelines misaligned")

    healthy_pairs = ~active
    n_healthy = int(healthy_pairs.sum())
    false_hits = int(np.sum(dec & healthy_pairs))
    far = false_hits / n_healthy if n_healthy else 0.0

    fdt = None
    missed = False
    if onset is not None and injected_modes:
        idxs = [FAULT_MODES.index(m) for m in injected_modes]
        hit = np.any(dec[:, idxs], axis=1) & (times >= onset)
        where = np.nonzero(hit)[0]
        if where.size:
            fdt = float(times[where[0]] - onset)
        else:
            missed = True

    isolated = tuple(m for j, m in enumerate(FAULT_MODES) if np.any(dec[:, j] & active[:, j]))
    false_modes = tuple(m for j, m in enumerate(FAULT_MODES)
                        if np.any(dec[:, j] & ~active[:, j]))

    mae = {}
    sl = slice(-tail_steps, None) if tail_steps else slice(None)
    if est_states is not None and true_states is not None:
        for i, name in enumerate(state_names):
            mae[name] = mae_percent(est_states[sl, i], true_states[sl, i])
    if est_params is not None and true_params is not None:
        for i, name in enumerate(param_names):
            mae[name] = mae_percent(est_params[sl, i], true_params[sl, i])
    return RunMetrics(mae, far, fdt, missed, isolated, false_modes, diverged_steps)
