"""Hybrid-degree dual estimation: a state filter and a parameter filter run
in lockstep, each freezing the other's latest estimate.

The state filter may use any rule from the catalog; the parameter filter is
restricted to the degree-3 (or mixture) rules.  An optional carried-deviation
update strategy transforms the parameter point deviations across steps
instead of redrawing them from the Gaussian posterior, which buys robustness
to measurement-model mismatch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .filters import (
    FilterDiverged,
    GaussianBelief,
    TransitionModel,
    propagate_points,
    predict,
    triangularize,
    update,
)
from .rules import CubatureRule, make_rule

__all__ = [
    "LinearEvolution",
    "ExponentialEvolution",
    "PerComponentEvolution",
    "param_predict_model",
    "PlantModel",
    "HybridConfig",
    "DualState",
    "DualEstimator",
    "dual_step",
    "StateFilterDiverged",
    "ParamFilterDiverged",
]

PARAM_KINDS = ("CNF-I", "CNF-III", "CNF-V", "UKF")


class StateFilterDiverged(FilterDiverged):
    pass


class ParamFilterDiverged(FilterDiverged):
    pass


# ---------------------------------------------------------------------------
# parameter evolution models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearEvolution:
    """theta' = theta + alpha * dt (drift-free random walk when alpha = 0)."""

    alpha: float = 0.0
    dt: float = 1.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    def apply(self, theta: np.ndarray) -> np.ndarray:
        return theta + self.alpha * self.dt


@dataclass(frozen=True)
class ExponentialEvolution:
    """theta' = exp(alpha dt) theta + beta (1 - exp(alpha dt)).

    For alpha < 0 this contracts toward the asymptote beta; beta itself is a
    fixed point for any alpha.
    """

    alpha: float
    beta: float = 1.0
    dt: float = 1.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    def apply(self, theta: np.ndarray) -> np.ndarray:
        a = math.exp(self.alpha * self.dt)
        return a * theta + self.beta * (1.0 - a)


@dataclass(frozen=True)
class PerComponentEvolution:
    """Independent evolution model per parameter component."""

    models: tuple

    def apply(self, theta: np.ndarray) -> np.ndarray:
        th = np.atleast_2d(np.asarray(theta, dtype=float))
        if th.shape[1] != len(self.models):
            raise ValueError("component count mismatch")
        out = np.empty_like(th)
        for j, m in enumerate(self.models):
            out[:, j] = m.apply(th[:, j])
        return out if np.ndim(theta) == 2 else out[0]


def param_predict_model(theta: np.ndarray, model) -> np.ndarray:
    """Apply a parameter evolution model to a vector (or batch of vectors)."""
    return model.apply(np.asarray(theta, dtype=float))


# ---------------------------------------------------------------------------
# plant bundle and configuration
# ---------------------------------------------------------------------------

@dataclass
class PlantModel:
    """Discrete-time callable bundle the dual estimator runs against.

    f(x_batch, theta, u): state transition over one sample interval
    g(x, theta, u):       measurement map; must broadcast a batch on either
                          the state side or the parameter side
    h:                    parameter evolution model (.apply on batches)
    """

    n_x: int
    n_theta: int
    n_z: int
    f: Callable
    g: Callable
    h: object
    sqrt_q: np.ndarray
    sqrt_r: np.ndarray
    sqrt_tau: np.ndarray


@dataclass(frozen=True)
class HybridConfig:
    """Rule selection and options for the dual scheme.

    state_kind may be any catalog rule; param_kind only the degree-3 family
    (higher-degree parameter rules cost more without improving the nearly
    linear degradation dynamics, and the carried-deviation strategy requires
    degree 3).
    """

    state_kind: str = "CNF-VI"
    param_kind: str = "CNF-I"
    modified_propagation: bool = False
    ukf_kappa_state: float | None = None
    ukf_kappa_param: float | None = None
    lambda_max_theta: float | None = None
    on_divergence: str = "raise"  # or "freeze"
    trace_deviations: bool = False

    def __post_init__(self):
        if self.param_kind.upper() not in PARAM_KINDS:
            raise ValueError(
                f"parameter filter kind must be one of {PARAM_KINDS}, "
                f"got {self.param_kind!r}")
        if self.on_divergence not in ("raise", "freeze"):
            raise ValueError("on_divergence must be 'raise' or 'freeze'")


@dataclass
class DualState:
    """Beliefs of both filters plus per-run diagnostics."""

    state_belief: GaussianBelief
    param_belief: GaussianBelief
    step_index: int = 0
    carried_dev: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def note(self, key: str, inc: int = 1) -> None:
        self.diagnostics[key] = self.diagnostics.get(key, 0) + inc


class DualEstimator:
    """Lockstep state/parameter filtering against a PlantModel."""

    def __init__(self, plant: PlantModel, cfg: HybridConfig):
        self.plant = plant
        self.cfg = cfg
        self.state_rule = self._rule(cfg.state_kind, plant.n_x, cfg.ukf_kappa_state)
        if plant.n_theta > 0:
            self.param_rule = self._rule(cfg.param_kind, plant.n_theta,
                                         cfg.ukf_kappa_param)
            if cfg.modified_propagation and self.param_rule.degree != 3:
                raise ValueError("carried-deviation propagation needs a "
                                 "degree-3 parameter rule")
        else:
            self.param_rule = None

    @staticmethod
    def _rule(kind: str, n: int, kappa: float | None) -> CubatureRule:
        if kind.upper() == "UKF" and kappa is not None:
            from .rules import ukf_sigma_set
            return ukf_sigma_set(n, kappa)
        return make_rule(kind, n)

    # -- filters -------------------------------------------------------------

    def _state_step(self, ds: DualState, u, z) -> GaussianBelief:
        theta_hat = ds.param_belief.mean if self.plant.n_theta else np.zeros(0)
        plant = self.plant
        fmodel = TransitionModel(plant.n_x, plant.n_x,
                                 lambda pts: plant.f(pts, theta_hat, u))
        gmodel = TransitionModel(plant.n_x, plant.n_z,
                                 lambda pts: plant.g(pts, theta_hat, u))
        try:
            pred, _ = predict(ds.state_belief, fmodel, self.state_rule,
                              plant.sqrt_q, ds.diagnostics)
            pts = propagate_points(pred, self.state_rule)
            post, innov, s_zz, _ = update(pred, pts, z, gmodel,
                                          self.state_rule, plant.sqrt_r,
                                          ds.diagnostics)
        except RuntimeError as e:
            # FilterDiverged and plant-evaluation faults both abort the step
            raise StateFilterDiverged(str(e)) from e
        return post

    def _param_step(self, ds: DualState, x_hat, u, z) -> tuple[GaussianBelief, np.ndarray | None]:
        plant = self.plant
        rule = self.param_rule
        hmodel = TransitionModel(plant.n_theta, plant.n_theta,
                                 lambda th: plant.h.apply(th))
        gmodel = TransitionModel(plant.n_theta, plant.n_z,
                                 lambda th: plant.g(x_hat, th, u))
        belief = ds.param_belief
        try:
            if not self.cfg.modified_propagation or ds.carried_dev is None:
                dev_prior = propagate_points(belief, rule) - belief.mean
            else:
                dev_prior = ds.carried_dev
            points = dev_prior + belief.mean
            pred, images = predict(belief, hmodel, rule, plant.sqrt_tau,
                                   ds.diagnostics, points=points)
            dev_pred = images - pred.mean
            if self.cfg.modified_propagation:
                upd_points = dev_pred + pred.mean
                if self.cfg.trace_deviations:
                    ds.diagnostics.setdefault("mp_trace", []).append(
                        {"dev_pred": dev_pred.copy(),
                         "pred_cov": pred.cov(),
                         "fallback": ds.carried_dev is None
                                     and ds.step_index > 0})
            else:
                upd_points = propagate_points(pred, rule)
            post, innov, s_zz, gain = update(pred, upd_points, z, gmodel,
                                             rule, plant.sqrt_r, ds.diagnostics)
        except RuntimeError as e:
            raise ParamFilterDiverged(str(e)) from e

        carried = None
        if self.cfg.modified_propagation:
            carried = self._transform_deviations(ds, dev_pred, pred, post, gain)
        return post, carried

    def _transform_deviations(self, ds: DualState, dev_pred: np.ndarray,
                              pred: GaussianBelief, post: GaussianBelief,
                              gain: np.ndarray) -> np.ndarray | None:
        """Carried-deviation transform: dev' = dev L^+ (L^-)^-1 transposed.

        L^- factors the predicted covariance minus the process noise (exactly
        the weighted deviation Gram), L^+ the updated covariance minus the
        measurement-noise inflation term scaled by the largest posterior
        eigenvalue.  Falls back to fresh Gaussian sampling when the inflated
        subtraction is not positive definite.
        """
        w = self.param_rule.weights
        plant = self.plant
        l_minus = triangularize(dev_pred.T * np.sqrt(w)[None, :])
        if np.any(np.diag(l_minus) < 1e-14):
            ds.note("factorization_fallback")
            return None
        p_post = post.cov()
        lam = float(np.max(sla.eigvalsh(p_post)))
        ds.diagnostics.setdefault("lambda_history", []).append(lam)
        r_cov = plant.sqrt_r @ plant.sqrt_r.T
        delta_e = lam * gain @ r_cov @ gain.T
        try:
            l_plus = np.linalg.cholesky(p_post - delta_e)
        except np.linalg.LinAlgError:
            ds.note("factorization_fallback")
            return None
        upsilon = sla.solve_triangular(l_minus, l_plus.T, lower=True,
                                       trans="T").T
        return dev_pred @ upsilon.T

    # -- public stepping -----------------------------------------------------

    def init_state(self, state_belief: GaussianBelief,
                   param_belief: GaussianBelief) -> DualState:
        return DualState(state_belief, param_belief)

    def step(self, ds: DualState, u, z) -> DualState:
        """One measurement epoch: state filter first, then parameter filter."""
        z = np.asarray(z, dtype=float)
        try:
            state_post = self._state_step(ds, u, z)
        except StateFilterDiverged:
            if self.cfg.on_divergence == "raise":
                raise
            ds.note("state_divergence_freeze")
            return replace_step(ds)
        if self.plant.n_theta == 0:
            return DualState(state_post, ds.param_belief, ds.step_index + 1,
                             None, ds.diagnostics)
        try:
            param_post, carried = self._param_step(ds, state_post.mean, u, z)
        except ParamFilterDiverged:
            if self.cfg.on_divergence == "raise":
                raise
            ds.note("param_divergence_freeze")
            return DualState(state_post, ds.param_belief, ds.step_index + 1,
                             None, ds.diagnostics)
        new = DualState(state_post, param_post, ds.step_index + 1,
                        carried, ds.diagnostics)
        if self.cfg.lambda_max_theta is not None:
            lam = float(np.max(sla.eigvalsh(param_post.cov())))
            if lam > self.cfg.lambda_max_theta:
                new.note("lambda_bound_exceeded")
        return new


def replace_step(ds: DualState) -> DualState:
    """Freeze-and-flag: advance the step counter, hold both beliefs."""
    return DualState(ds.state_belief, ds.param_belief, ds.step_index + 1,
                     None, ds.diagnostics)


def dual_step(ds: DualState, u, z, plant: PlantModel,
              cfg: HybridConfig) -> DualState:
    """Functional one-shot step (builds the estimator each call)."""
    return DualEstimator(plant, cfg).step(ds, u, z)
