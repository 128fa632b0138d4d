"""Batch experiment driver: parse scenario files, run seeded Monte-Carlo
replications of truth + estimators, calibrate thresholds, emit CSV artifacts.

Reproducibility contract: (config, seed) fully determines every emitted
number.  Noise streams are counter-based per (master seed, run index, role),
so every estimator inside one run sees the identical truth and measurement
sequence, and re-running a scenario reproduces files byte for byte.
"""

from __future__ import annotations

import concurrent.futures
import copy
import csv
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__
from .dual import (
    DualEstimator,
    DualState,
    ExponentialEvolution,
    HybridConfig,
    LinearEvolution,
    PerComponentEvolution,
    PlantModel,
)
from .fdii import (
    DecisionLogic,
    Thresholds,
    calibrate_thresholds,
    healthy_reference,
    residual,
    run_metrics,
)
from .filters import (
    FilterDiverged,
    GaussianBelief,
    ParticleCloud,
    TransitionModel,
    pf_step,
)
from .gte import (
    FaultEvent,
    FaultSchedule,
    GtePlant,
    SimulationFault,
    UncertaintyConfig,
    gte_measure,
)
from .gte_constants import (
    FAULT_MODES,
    HEALTH_PARAM_NAMES,
    MEASUREMENT_NAMES,
    STATE_NAMES,
    default_constants,
)
from .rules import make_rule, stability_factor, RULE_KINDS

__all__ = ["Scenario", "EstimatorSpec", "load_scenario", "run_scenario",
           "calibrate_scenario", "benchmark_points", "ConfigError",
           "format_float", "write_csv"]

ROLE_PROCESS, ROLE_MEASUREMENT, ROLE_FILTER = 0, 1, 2


class ConfigError(ValueError):
    """Scenario file failed validation; message carries field context."""


def format_float(x: float) -> str:
    """17-significant-digit decimal form used by every CSV artifact."""
    return f"{x:.16e}"


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([format_float(v) if isinstance(v, float) else v
                        for v in row])


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EstimatorSpec:
    label: str
    kind: str = "hybrid"          # "hybrid" or "dual-pf"
    state_kind: str = "CNF-VI"
    param_kind: str = "CNF-I"
    modified_propagation: bool = False
    particles: int = 500


@dataclass
class Scenario:
    name: str
    horizon: float
    seed: int
    runs: int
    out_dir: str
    dt_truth: float = 0.01
    sample_dt: float = 0.1
    constants_overrides: dict = field(default_factory=dict)
    maps_dir: str | None = None
    save_truth: bool = True
    sigma_tau: float = 1e-3
    sigma_tau_pf: float = 1.5e-3
    pf_r_inflation: float = 6.0
    init_perturb: str = "off"   # "off" | "theta" | "full"
    p0_theta: float = 0.02
    p0_state_pct: float = 1.0
    turbine_evo_alpha: float = -0.005
    estimators: tuple[EstimatorSpec, ...] = ()
    fault: FaultSchedule = field(default_factory=FaultSchedule)
    uncertainty: UncertaintyConfig | None = None
    burn_in: float = 1.0
    healthy_window: float = 1.5
    quantile: float = 0.999
    safety: float = 1.1
    threshold_floor: float = 1e-6
    window: int = 3
    smooth: int = 1
    calibration_runs: int = 50
    calibration_horizon: float | None = None
    thresholds_file: str | None = None
    lambda_max_theta: float = 4e-3
    mae_tail: float = 2.0
    raw_config: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.horizon <= 0:
            raise ConfigError("scenario.horizon must be positive")
        if not self.estimators:
            raise ConfigError("at least one estimator is required")
        labels = [e.label for e in self.estimators]
        if len(set(labels)) != len(labels):
            raise ConfigError("estimator labels must be unique")

    # -- derived -------------------------------------------------------------
    @property
    def n_steps(self) -> int:
        return round(self.horizon / self.sample_dt)

    @property
    def burn_in_steps(self) -> int:
        return round(self.burn_in / self.sample_dt)

    @property
    def healthy_window_steps(self) -> int:
        return round(self.healthy_window / self.sample_dt)

    def config_hash(self) -> str:
        """Hash of the experiment-defining config (output location excluded)."""
        cfg = copy.deepcopy(self.raw_config)
        cfg.get("scenario", {}).pop("out_dir", None)
        canon = json.dumps(cfg, sort_keys=True, default=str)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _parse_fault(items) -> FaultSchedule:
    events = []
    for it in items:
        profile = it.get("profile", "abrupt")
        if profile == "abrupt":
            p = ("abrupt", float(it["delta"]))
        elif profile == "ramp":
            p = ("ramp", float(it["rate"]))
        elif profile == "exp":
            p = ("exp", float(it["alpha"]), float(it["beta"]))
        else:
            raise ConfigError(f"fault.profile {profile!r} unknown")
        events.append(FaultEvent(str(it["mode"]), float(it["onset"]), p))
    return FaultSchedule(tuple(events))


def parse_scenario(cfg: dict, path: str = "<dict>",
                   overrides: list[str] | None = None) -> Scenario:
    cfg = copy.deepcopy(cfg)
    for ov in overrides or []:
        if "=" not in ov:
            raise ConfigError(f"--set expects key=value, got {ov!r}")
        key, val = ov.split("=", 1)
        node = cfg
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        try:
            node[parts[-1]] = json.loads(val)
        except json.JSONDecodeError:
            node[parts[-1]] = val

    try:
        sc = cfg["scenario"]
        ests = []
        for label, body in cfg.get("estimators", {}).items():
            ests.append(EstimatorSpec(
                label=label,
                kind=body.get("type", "hybrid"),
                state_kind=body.get("state_kind", "CNF-VI"),
                param_kind=body.get("param_kind", "CNF-I"),
                modified_propagation=bool(body.get("modified_propagation", False)),
                particles=int(body.get("particles", 500)),
            ))
        unc = None
        if "uncertainty" in cfg:
            u = cfg["uncertainty"]
            unc = UncertaintyConfig(
                d_gamma=float(u.get("d_gamma", 0.0)),
                d_j1=float(u.get("d_j1", 0.0)),
                d_j2=float(u.get("d_j2", 0.0)),
                onset=float(u.get("onset", 0.0)),
                zeta_bar=float(u.get("zeta_bar", 0.05)))
        plant = cfg.get("plant", {})
        noise = cfg.get("noise", {})
        fd = cfg.get("fdii", {})
        cal = cfg.get("calibration", {})
        return Scenario(
            name=str(sc.get("name", os.path.splitext(os.path.basename(path))[0])),
            horizon=float(sc["horizon"]),
            seed=int(sc.get("seed", 0)),
            runs=int(sc.get("runs", 1)),
            out_dir=str(sc.get("out_dir", "runs")),
            dt_truth=float(plant.get("dt_truth", 0.01)),
            sample_dt=float(plant.get("sample_dt", 0.1)),
            constants_overrides=dict(plant.get("constants", {})),
            maps_dir=plant.get("maps_dir"),
            save_truth=bool(plant.get("save_truth", True)),
            sigma_tau=float(noise.get("sigma_tau", 1e-3)),
            sigma_tau_pf=float(noise.get("sigma_tau_pf", 1.5e-3)),
            pf_r_inflation=float(noise.get("pf_r_inflation", 6.0)),
            init_perturb=str(noise.get("init_perturb", "off")),
            p0_theta=float(noise.get("p0_theta", 0.02)),
            p0_state_pct=float(noise.get("p0_state_pct", 1.0)),
            turbine_evo_alpha=float(noise.get("turbine_evo_alpha", -0.005)),
            estimators=tuple(ests),
            fault=_parse_fault(cfg.get("fault", [])),
            uncertainty=unc,
            burn_in=float(fd.get("burn_in", 1.0)),
            healthy_window=float(fd.get("healthy_window", 1.5)),
            quantile=float(fd.get("quantile", 0.999)),
            safety=float(fd.get("safety", 1.1)),
            threshold_floor=float(fd.get("floor", 1e-6)),
            window=int(fd.get("window", 3)),
            smooth=int(fd.get("smooth", 1)),
            calibration_runs=int(cal.get("runs", 50)),
            calibration_horizon=(float(cal["horizon"]) if "horizon" in cal else None),
            thresholds_file=cal.get("thresholds_file"),
            lambda_max_theta=float(cfg.get("monitors", {}).get("lambda_max_theta", 4e-3)),
            mae_tail=float(fd.get("mae_tail", 2.0)),
            raw_config=cfg,
        )
    except KeyError as e:
        raise ConfigError(f"{path}: missing required field {e}") from e
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"{path}: {e}") from e


def load_scenario(path: str, overrides: list[str] | None = None) -> Scenario:
    with open(path, "rb") as fh:
        try:
            cfg = tomllib.load(fh)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}") from e
    return parse_scenario(cfg, path, overrides)


# ---------------------------------------------------------------------------
# run machinery
# ---------------------------------------------------------------------------

def _rng(seed: int, run: int, role: int, sub: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, run, role, sub]))


class ScenarioEngine:
    """Everything derived from a Scenario that the runs share."""

    def __init__(self, sc: Scenario):
        self.sc = sc
        const = default_constants(**sc.constants_overrides)
        self.plant = GtePlant(const=const, dt_truth=sc.dt_truth,
                              sample_dt=sc.sample_dt)
        if sc.maps_dir:
            from .gte_maps_csv import load_map_tables
            self.plant.maps = load_map_tables(const, sc.maps_dir)
        self.u = self.plant.fuel_flow(const.pla)
        self.x_trim = self.plant.trim()
        self.z_nom = self.plant.nominal_measurement(self.x_trim)
        self.sigma_z = np.abs(self.z_nom) * const.measurement_noise_pct() / 100.0
        self.sigma_w = np.abs(self.x_trim) * const.noise_pct_process / 100.0
        # compressor fouling tracked by the drift-free linear model, turbine
        # erosion by the exponential model (indices per HEALTH_PARAM_NAMES)
        evo = PerComponentEvolution(tuple(
            LinearEvolution(0.0, sc.sample_dt) if i in (0, 1, 4, 5)
            else ExponentialEvolution(sc.turbine_evo_alpha, 1.0, sc.sample_dt)
            for i in range(8)))
        plant = self.plant
        self.model = PlantModel(
            n_x=7, n_theta=8, n_z=8,
            f=lambda xb, th, uu: plant.step_state(xb, th, uu),
            g=lambda xb, th, uu: gte_measure(xb, th, uu, plant.const, plant.maps),
            h=evo,
            sqrt_q=np.diag(self.sigma_w),
            sqrt_r=np.diag(self.sigma_z),
            sqrt_tau=sc.sigma_tau * np.eye(8),
        )

    # -- truth ----------------------------------------------------------------
    def simulate_truth(self, run: int, faulted: bool = True) -> dict:
        sc = self.sc
        rng_w = _rng(sc.seed, run, ROLE_PROCESS)
        rng_v = _rng(sc.seed, run, ROLE_MEASUREMENT)
        fault = sc.fault if faulted else FaultSchedule()
        ucfg = sc.uncertainty if faulted else None
        x = self.x_trim.copy()
        times = np.arange(1, sc.n_steps + 1) * sc.sample_dt
        xs = np.empty((sc.n_steps, 7))
        zs = np.empty((sc.n_steps, 8))
        ths = np.empty((sc.n_steps, 8))
        for k, t in enumerate(times):
            th = fault.theta(t)
            x = self.plant.step_state(x, th, self.u) \
                + rng_w.standard_normal(7) * self.sigma_w
            noise = rng_v.standard_normal(8) * self.sigma_z
            zs[k] = self.plant.measure(x, th, self.u, ucfg=ucfg, noise=noise, t=t)
            xs[k] = x
            ths[k] = th
        return {"times": times, "x": xs, "z": zs, "theta": ths,
                "fault": fault, "run": run}

    # -- estimators -----------------------------------------------------------
    def initial_beliefs(self, run: int | None = None,
                        label: str = "") -> tuple[GaussianBelief, GaussianBelief]:
        """Prior beliefs; Monte-Carlo runs draw the initial means from the
        prior so estimation errors start at prior scale and decay."""
        sc = self.sc
        s0 = np.diag(np.abs(self.x_trim) * sc.p0_state_pct / 100.0)
        x0 = self.x_trim.copy()
        th0 = np.ones(8)
        if sc.init_perturb != "off" and run is not None:
            # one init draw per run, shared by every estimator (paired MC)
            rng = _rng(sc.seed, run, ROLE_FILTER, 0)
            dx = s0 @ rng.standard_normal(7)
            th0 = th0 + sc.p0_theta * rng.standard_normal(8)
            if sc.init_perturb == "full":
                x0 = x0 + dx
        return (GaussianBelief(x0, s0),
                GaussianBelief(th0, sc.p0_theta * np.eye(8)))

    def run_hybrid(self, spec: EstimatorSpec, truth: dict) -> dict:
        sc = self.sc
        cfg = HybridConfig(spec.state_kind, spec.param_kind,
                           modified_propagation=spec.modified_propagation,
                           lambda_max_theta=sc.lambda_max_theta,
                           on_divergence="freeze")
        est = DualEstimator(self.model, cfg)
        sb, pb = self.initial_beliefs(truth.get("run"), spec.label)
        ds = DualState(sb, pb)
        T = len(truth["times"])
        x_hat = np.empty((T, 7))
        th_hat = np.empty((T, 8))
        sx = np.empty((T, 7))
        sth = np.empty((T, 8))
        lam = np.empty(T)
        for k in range(T):
            ds = est.step(ds, self.u, truth["z"][k])
            x_hat[k] = ds.state_belief.mean
            th_hat[k] = ds.param_belief.mean
            sx[k] = np.sqrt(np.diag(ds.state_belief.cov()))
            sth[k] = np.sqrt(np.diag(ds.param_belief.cov()))
            lam[k] = float(np.max(np.linalg.eigvalsh(ds.param_belief.cov())))
        frozen = (ds.diagnostics.get("state_divergence_freeze", 0)
                  + ds.diagnostics.get("param_divergence_freeze", 0))
        return {"x_hat": x_hat, "theta_hat": th_hat, "sx": sx, "stheta": sth,
                "lambda_max": lam, "diagnostics": dict(ds.diagnostics),
                "diverged_steps": frozen}

    def run_dual_pf(self, spec: EstimatorSpec, truth: dict) -> dict:
        sc = self.sc
        rng_x = _rng(sc.seed, truth["run"], ROLE_FILTER,
                     _label_sub(spec.label, 0))
        rng_t = _rng(sc.seed, truth["run"], ROLE_FILTER,
                     _label_sub(spec.label, 1))
        npart = spec.particles
        sb, pb = self.initial_beliefs(truth.get("run"), spec.label)
        xp = sb.mean + rng_x.standard_normal((npart, 7)) @ sb.sqrt_cov.T
        tp = pb.mean + rng_t.standard_normal((npart, 8)) @ pb.sqrt_cov.T
        x_cloud = ParticleCloud(xp, np.full(npart, 1.0 / npart), rng_x)
        t_cloud = ParticleCloud(tp, np.full(npart, 1.0 / npart), rng_t)
        plant, model = self.plant, self.model
        sqrt_tau_pf = sc.sigma_tau_pf * np.eye(8)
        # the parameter particles see g(x_hat, theta) with an imperfect x_hat;
        # that error acts as extra measurement noise, so the likelihood runs
        # with an inflated R
        sqrt_r_pf = sc.pf_r_inflation * model.sqrt_r
        T = len(truth["times"])
        x_hat = np.empty((T, 7))
        th_hat = np.empty((T, 8))
        diverged = 0
        for k in range(T):
            z = truth["z"][k]
            theta_hat = t_cloud.estimate()
            fmod = TransitionModel(7, 7, lambda pts: model.f(pts, theta_hat, self.u))
            gmod = TransitionModel(7, 8, lambda pts: model.g(pts, theta_hat, self.u))
            try:
                x_cloud = pf_step(x_cloud, fmod, gmod, z, model.sqrt_q,
                                  model.sqrt_r)
            except (FilterDiverged, SimulationFault):
                diverged += 1
            xh = x_cloud.estimate()
            hmod = TransitionModel(
                8, 8, lambda th: np.clip(model.h.apply(th), 0.5, 1.5))
            gmod_t = TransitionModel(8, 8, lambda th: model.g(xh, th, self.u))
            try:
                t_cloud = pf_step(t_cloud, hmod, gmod_t, z, sqrt_tau_pf,
                                  sqrt_r_pf)
            except (FilterDiverged, SimulationFault):
                diverged += 1
            x_hat[k] = xh
            th_hat[k] = t_cloud.estimate()
        return {"x_hat": x_hat, "theta_hat": th_hat,
                "sx": np.zeros((T, 7)), "stheta": np.zeros((T, 8)),
                "lambda_max": np.zeros(T), "diagnostics": {},
                "diverged_steps": diverged}

    def run_estimator(self, spec: EstimatorSpec, truth: dict) -> dict:
        if spec.kind == "dual-pf":
            return self.run_dual_pf(spec, truth)
        return self.run_hybrid(spec, truth)

    def residual_trajectory(self, est_out: dict) -> np.ndarray:
        sc = self.sc
        ref = healthy_reference(est_out["theta_hat"], sc.burn_in_steps,
                                sc.healthy_window_steps)
        return np.array([residual(ref, th) for th in est_out["theta_hat"]])


def _label_sub(label: str, which: int) -> int:
    h = hashlib.sha256(f"{label}:{which}".encode()).digest()
    return int.from_bytes(h[:4], "big")


# ---------------------------------------------------------------------------
# calibration and full runs
# ---------------------------------------------------------------------------

def calibrate_scenario(sc: Scenario, engine: ScenarioEngine | None = None,
                       progress: bool = False) -> dict[str, Thresholds]:
    """Healthy Monte-Carlo calibration: thresholds per estimator label.

    Calibration runs use run indices offset by 10^6 so they never collide
    with evaluation runs of the same master seed.
    """
    if sc.calibration_horizon is not None and engine is None:
        sc_cal = copy.deepcopy(sc)
        sc_cal.horizon = sc.calibration_horizon
        return calibrate_scenario(sc_cal, ScenarioEngine(sc_cal), progress)
    engine = engine or ScenarioEngine(sc)
    n_steps = sc.n_steps
    if sc.calibration_horizon is not None:
        n_steps = round(sc.calibration_horizon / sc.sample_dt)
    residuals = {spec.label: [] for spec in sc.estimators}
    for i in range(sc.calibration_runs):
        truth = engine.simulate_truth(1_000_000 + i, faulted=False)
        truth = {**truth,
                 "times": truth["times"][:n_steps],
                 "x": truth["x"][:n_steps], "z": truth["z"][:n_steps],
                 "theta": truth["theta"][:n_steps]}
        for spec in sc.estimators:
            out = engine.run_estimator(spec, truth)
            residuals[spec.label].append(engine.residual_trajectory(out))
        if progress:
            print(f"  calibration run {i + 1}/{sc.calibration_runs}",
                  file=sys.stderr)
    return {
        label: calibrate_thresholds(
            runs, quantile=sc.quantile, safety=sc.safety,
            floor=sc.threshold_floor,
            burn_in_steps=sc.burn_in_steps + sc.healthy_window_steps,
            min_runs=min(sc.calibration_runs, 50), seed=sc.seed)
        for label, runs in residuals.items()
    }


def _thresholds_to_json(th: Thresholds) -> dict:
    return {"r_max": [format_float(v) for v in th.r_max],
            "run_count": th.run_count, "seed": th.seed,
            "quantile": th.quantile, "safety": th.safety,
            "burn_in_steps": th.burn_in_steps}


def _thresholds_from_json(d: dict) -> Thresholds:
    return Thresholds(np.array([float(v) for v in d["r_max"]]),
                      run_count=d.get("run_count", 0), seed=d.get("seed"),
                      quantile=d.get("quantile", 0.999),
                      safety=d.get("safety", 1.1),
                      burn_in_steps=d.get("burn_in_steps", 0))


def evaluate_run(sc: Scenario, engine: ScenarioEngine, spec: EstimatorSpec,
                 truth: dict, thresholds: Thresholds) -> dict:
    """Run one estimator over one truth realization and score it."""
    out = engine.run_estimator(spec, truth)
    res = engine.residual_trajectory(out)
    logic = DecisionLogic(thresholds, window=sc.window, smooth=sc.smooth)
    ref = healthy_reference(out["theta_hat"], sc.burn_in_steps,
                            sc.healthy_window_steps)
    times = truth["times"]
    # decisions start once the healthy reference window is complete
    k0 = min(sc.burn_in_steps + sc.healthy_window_steps, len(times) - 1)
    records = []
    for k in range(k0, len(times)):
        records.append(logic.step(times[k], res[k], out["theta_hat"][k] - ref))
    active = np.zeros((len(times) - k0, 8), dtype=bool)
    for k in range(k0, len(times)):
        for m in truth["fault"].active_modes(times[k]):
            active[k - k0, FAULT_MODES.index(m)] = True
    onsets = [e.onset for e in truth["fault"].events]
    onset = min(onsets) if onsets else None
    modes = tuple(dict.fromkeys(e.mode for e in truth["fault"].events))
    metrics = run_metrics(
        records, times[k0:], active, onset, modes,
        tail_steps=round(sc.mae_tail / sc.sample_dt),
        est_states=out["x_hat"], true_states=truth["x"],
        est_params=out["theta_hat"], true_params=truth["theta"],
        state_names=STATE_NAMES, param_names=HEALTH_PARAM_NAMES,
        diverged_steps=out["diverged_steps"])
    return {"out": out, "residuals": res, "records": records,
            "decision_start": k0, "metrics": metrics, "truth": truth}


def _eval_one_run(sc: Scenario, engine: ScenarioEngine, thresholds: dict,
                  run: int) -> tuple[dict, list]:
    """Truth + every estimator for one Monte-Carlo index.

    One diverged estimator never aborts the batch: its failure is recorded
    and the remaining estimators still run.
    """
    truth = engine.simulate_truth(run)
    per_label, errs = {}, []
    for spec in sc.estimators:
        try:
            per_label[spec.label] = evaluate_run(sc, engine, spec, truth,
                                                 thresholds[spec.label])
        except (FilterDiverged, SimulationFault) as e:
            errs.append({"run": run, "estimator": spec.label, "error": str(e)})
    return per_label, errs


_POOL_ENGINE: dict = {}


def _pool_eval_run(raw_config: dict, run: int, thresholds_ser: dict):
    """Worker-pool entry: rebuild (and cache) the engine per process."""
    key = json.dumps(raw_config, sort_keys=True, default=str)
    if _POOL_ENGINE.get("key") != key:
        sc = parse_scenario(raw_config)
        _POOL_ENGINE["key"] = key
        _POOL_ENGINE["sc"] = sc
        _POOL_ENGINE["engine"] = ScenarioEngine(sc)
    sc, engine = _POOL_ENGINE["sc"], _POOL_ENGINE["engine"]
    thresholds = {lbl: _thresholds_from_json(d)
                  for lbl, d in thresholds_ser.items()}
    per_label, errs = _eval_one_run(sc, engine, thresholds, run)
    return run, per_label, errs


def run_scenario(sc: Scenario, progress: bool = False,
                 workers: int = 1) -> dict:
    """Execute the full protocol and write all artifacts under out_dir/name."""
    t_start = time.time()
    engine = ScenarioEngine(sc)
    base = os.path.join(sc.out_dir, sc.name)
    os.makedirs(base, exist_ok=True)

    if sc.thresholds_file:
        with open(sc.thresholds_file, encoding="utf-8") as fh:
            data = json.load(fh)
        thresholds = {lbl: _thresholds_from_json(d)
                      for lbl, d in data["thresholds"].items()}
    else:
        thresholds = calibrate_scenario(sc, engine, progress)

    results = {spec.label: [] for spec in sc.estimators}
    partial = []
    run_ids = list(range(sc.runs))
    if workers > 1:
        th_ser = {lbl: _thresholds_to_json(t) for lbl, t in thresholds.items()}
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as ex:
            futs = {ex.submit(_pool_eval_run, sc.raw_config, run, th_ser): run
                    for run in run_ids}
            gathered = {}
            for fut in concurrent.futures.as_completed(futs):
                run, per_label, errs = fut.result()
                gathered[run] = (per_label, errs)
                if progress:
                    print(f"  run {run + 1}/{sc.runs}", file=sys.stderr)
        for run in run_ids:  # deterministic collection order
            per_label, errs = gathered[run]
            for spec in sc.estimators:
                if spec.label in per_label:
                    results[spec.label].append(per_label[spec.label])
            partial.extend(errs)
    else:
        for run in run_ids:
            per_label, errs = _eval_one_run(sc, engine, thresholds, run)
            for spec in sc.estimators:
                if spec.label in per_label:
                    results[spec.label].append(per_label[spec.label])
            partial.extend(errs)
            if progress:
                print(f"  run {run + 1}/{sc.runs}", file=sys.stderr)

    _write_artifacts(sc, engine, thresholds, results, partial, base)
    manifest = _write_manifest(sc, thresholds, results, partial, base,
                               time.time() - t_start)
    return {"thresholds": thresholds, "results": results,
            "manifest": manifest, "base": base}


def _write_truth_csvs(sc, results, base):
    """Shared truth trajectories, one file per Monte-Carlo run index."""
    seen = {}
    for runs in results.values():
        for r in runs:
            seen[r["truth"]["run"]] = r["truth"]
    for i, run in enumerate(sorted(seen)):
        truth = seen[run]
        rows = []
        for k, t in enumerate(truth["times"]):
            rows.append([t, *truth["x"][k], *truth["z"][k], *truth["theta"][k]])
        write_csv(os.path.join(base, f"truth_run{i:03d}.csv"),
                  ["t", *[f"x_{n}" for n in STATE_NAMES],
                   *[f"z_{n}" for n in MEASUREMENT_NAMES],
                   *[f"theta_{n}" for n in HEALTH_PARAM_NAMES]],
                  rows)


def _write_artifacts(sc, engine, thresholds, results, partial, base):
    if sc.save_truth:
        _write_truth_csvs(sc, results, base)
    with open(os.path.join(base, "thresholds.json"), "w", encoding="utf-8") as fh:
        json.dump({"config_hash": sc.config_hash(),
                   "thresholds": {lbl: _thresholds_to_json(t)
                                  for lbl, t in thresholds.items()}},
                  fh, indent=2, sort_keys=True)

    for spec in sc.estimators:
        d = os.path.join(base, spec.label)
        os.makedirs(d, exist_ok=True)
        rows_metrics = []
        for i, r in enumerate(results[spec.label]):
            times = r["truth"]["times"]
            k0 = r["decision_start"]
            res_rows = []
            for k, t in enumerate(times):
                if k >= k0:
                    rec = r["records"][k - k0]
                    trips = [int(v) for v in rec.decisions]
                    sev = list(rec.severity)
                    overall, decided = rec.overall, 1
                else:
                    trips, sev = [0] * 8, [0.0] * 8
                    overall, decided = "Healthy", 0
                res_rows.append([t, *r["residuals"][k], *trips, *sev,
                                 overall, decided])
            write_csv(os.path.join(d, f"residuals_run{i:03d}.csv"),
                      ["t", *[f"r_{m}" for m in FAULT_MODES],
                       *[f"trip_{m}" for m in FAULT_MODES],
                       *[f"sev_{m}" for m in FAULT_MODES], "overall", "decided"],
                      res_rows)
            out = r["out"]
            belief_rows = []
            for k, t in enumerate(times):
                belief_rows.append([t, *out["x_hat"][k], *out["sx"][k],
                                    *out["theta_hat"][k], *out["stheta"][k],
                                    out["lambda_max"][k]])
            write_csv(os.path.join(d, f"beliefs_run{i:03d}.csv"),
                      ["t", *[f"xhat_{n}" for n in STATE_NAMES],
                       *[f"sx_{n}" for n in STATE_NAMES],
                       *[f"thetahat_{n}" for n in HEALTH_PARAM_NAMES],
                       *[f"stheta_{n}" for n in HEALTH_PARAM_NAMES],
                       "lambda_max"],
                      belief_rows)
            m = r["metrics"]
            rows_metrics.append([
                spec.label, i, sc.seed,
                "+".join(m.isolated_modes) or "none",
                m.fdt if m.fdt is not None else math.nan,
                m.far, int(m.missed),
                "+".join(m.false_modes) or "none",
                m.diverged_steps,
                *[m.mae_pct.get(n, math.nan) for n in STATE_NAMES],
                *[m.mae_pct.get(n, math.nan) for n in HEALTH_PARAM_NAMES],
            ])
        write_csv(os.path.join(d, "metrics.csv"),
                  ["estimator", "run", "seed", "isolated", "fdt_s", "far",
                   "missed", "false_modes", "diverged_steps",
                   *[f"mae_pct_{n}" for n in STATE_NAMES],
                   *[f"mae_pct_{n}" for n in HEALTH_PARAM_NAMES]],
                  rows_metrics)


def _write_manifest(sc, thresholds, results, partial, base, elapsed):
    manifest = {
        "scenario": sc.name,
        "config_hash": sc.config_hash(),
        "seed": sc.seed,
        "runs": sc.runs,
        "version": __version__,
        "horizon_s": sc.horizon,
        "sample_dt_s": sc.sample_dt,
        "fault_onsets": {e.mode: e.onset for e in sc.fault.events},
        "estimators": [spec.label for spec in sc.estimators],
        "partial_failures": partial,
        "elapsed_s": round(elapsed, 3),
    }
    with open(os.path.join(base, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


# ---------------------------------------------------------------------------
# point-count / stability survey
# ---------------------------------------------------------------------------

def benchmark_points(n_min: int = 2, n_max: int = 8,
                     time_gte: bool = True) -> list[dict]:
    """Node counts and stability factors per kind/dimension, plus measured
    wall-clock per dual filter step on the engine benchmark."""
    rows = []
    for kind in RULE_KINDS:
        for n in range(n_min, n_max + 1):
            if kind == "CNF-VI" and not 2 <= n <= 7:
                continue
            r = make_rule(kind, n)
            rows.append({"kind": kind, "n": n, "points": r.size,
                         "stability_factor": stability_factor(r),
                         "degree": r.degree})
    if time_gte:
        sc_engine = ScenarioEngine(parse_scenario({
            "scenario": {"name": "bench", "horizon": 1.0, "seed": 0, "runs": 1},
            "estimators": {"b": {"state_kind": "CNF-I", "param_kind": "CNF-I"}},
        }))
        truth = sc_engine.simulate_truth(0, faulted=False)
        for kind in RULE_KINDS:
            spec = EstimatorSpec(label=f"t-{kind}", state_kind=kind,
                                 param_kind="CNF-I")
            t0 = time.perf_counter()
            sc_engine.run_estimator(spec, truth)
            per_step = (time.perf_counter() - t0) / len(truth["times"])
            rows.append({"kind": kind, "n": "gte-step", "points":
                         make_rule(kind, 7).size,
                         "stability_factor": stability_factor(make_rule(kind, 7)),
                         "ms_per_step": round(1000 * per_step, 3)})
    return rows
