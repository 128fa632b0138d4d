"""Twin-spool engine truth simulator: volume/rotor dynamics with eight
multiplicative health parameters, an eight-channel sensor model, fault
injection and parametric modeling-uncertainty signals.

All evaluation functions are vectorized over a leading batch axis so the
filters can push whole cubature point clouds through the plant at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gte_constants import (
    EngineConstants,
    PerformanceMaps,
    FAULT_MODES,
    default_constants,
    default_maps,
)

__all__ = [
    "SimulationFault",
    "GasPath",
    "gte_deriv",
    "gte_measure",
    "rk4_step",
    "trim_solve",
    "FaultEvent",
    "FaultSchedule",
    "inject_fault",
    "UncertaintyConfig",
    "uncertainty_zeta",
    "GtePlant",
]

RPM = (math.pi / 30.0) ** 2  # (rad/s per rpm)^2 for the rotor power balance

# state indices
I_TCC, I_N1, I_N2, I_PLT, I_PCC, I_PLC, I_PHT = range(7)
# health parameter indices
I_ETA_HC, I_M_HC, I_ETA_HT, I_M_HT, I_ETA_LC, I_M_LC, I_ETA_LT, I_M_LT = range(8)


class SimulationFault(RuntimeError):
    """State left the sanity envelope or an evaluation went non-finite."""


def _batch(a, width) -> tuple[np.ndarray, bool]:
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:
        return arr[None, :], True
    if arr.shape[1] != width:
        raise ValueError(f"expected width {width}, got {arr.shape}")
    return arr, False


def check_envelope(x: np.ndarray, c: EngineConstants) -> None:
    x2, _ = _batch(x, 7)
    if not np.all(np.isfinite(x2)):
        raise SimulationFault("non-finite state")
    if np.any(x2 <= 0.0):
        raise SimulationFault("non-positive state component")
    if np.any(x2[:, I_TCC] < c.temp_min) or np.any(x2[:, I_TCC] > c.temp_max):
        raise SimulationFault("combustor temperature outside sanity envelope")
    if (np.any(x2[:, I_N1] > c.speed_factor_max * c.N1_des)
            or np.any(x2[:, I_N2] > c.speed_factor_max * c.N2_des)):
        raise SimulationFault("spool speed outside sanity envelope")


@dataclass
class GasPath:
    """Quasi-static station quantities along the gas path (batched arrays).

    mdot_* are the effective (theta-scaled) flows; map_mdot_* the raw map
    outputs before the health multipliers.
    """

    T_LC: np.ndarray
    T_HC: np.ndarray
    T_HT: np.ndarray
    T_LT: np.ndarray
    T_M: np.ndarray
    mdot_LC: np.ndarray
    mdot_HC: np.ndarray
    mdot_HT: np.ndarray
    mdot_LT: np.ndarray
    mdot_n: np.ndarray
    map_mdot_LC: np.ndarray
    map_mdot_HC: np.ndarray
    map_mdot_HT: np.ndarray
    map_mdot_LT: np.ndarray


def gas_path(x, theta, c: EngineConstants, maps: PerformanceMaps) -> GasPath:
    """Evaluate flows and station temperatures for a batch of states/params."""
    x2, _ = _batch(x, 7)
    th, _ = _batch(theta, 8)
    if th.shape[0] == 1 and x2.shape[0] > 1:
        th = np.broadcast_to(th, (x2.shape[0], 8))
    if x2.shape[0] == 1 and th.shape[0] > 1:
        x2 = np.broadcast_to(x2, (th.shape[0], 7))

    T_CC, N1, N2 = x2[:, I_TCC], x2[:, I_N1], x2[:, I_N2]
    P_LT, P_CC, P_LC, P_HT = (x2[:, I_PLT], x2[:, I_PCC],
                              x2[:, I_PLC], x2[:, I_PHT])

    PR_LC = P_LC / c.P_d
    m_LC, e_LC = maps.lpc(PR_LC, N2)
    eta_LC = np.clip(th[:, I_ETA_LC] * e_LC, 1e-3, None)
    T_LC = c.T_d * (1.0 + (PR_LC ** c.kappa_cold - 1.0) / eta_LC)

    PR_HC = P_CC / P_LC
    m_HC, e_HC = maps.hpc(PR_HC, N1, T_LC)
    eta_HC = np.clip(th[:, I_ETA_HC] * e_HC, 1e-3, None)
    T_HC = T_LC * (1.0 + (PR_HC ** c.kappa_cold - 1.0) / eta_HC)

    ER_HT = P_CC / P_HT
    m_HT, e_HT = maps.hpt(ER_HT, P_CC, T_CC)
    eta_HT = th[:, I_ETA_HT] * e_HT
    T_HT = T_CC * (1.0 - eta_HT * (1.0 - ER_HT ** (-c.kappa_hot)))

    ER_LT = P_HT / P_LT
    m_LT, e_LT = maps.lpt(ER_LT, P_HT, T_HT)
    eta_LT = th[:, I_ETA_LT] * e_LT
    T_LT = T_HT * (1.0 - eta_LT * (1.0 - ER_LT ** (-c.kappa_hot)))

    f_LC = th[:, I_M_LC] * m_LC
    f_HC = th[:, I_M_HC] * m_HC
    f_HT = th[:, I_M_HT] * m_HT
    f_LT = th[:, I_M_LT] * m_LT
    bypass = c.beta / (1.0 + c.beta) * f_LC
    T_M = (f_LT * T_LT + bypass * T_LC) / (f_LT + bypass)
    m_n = maps.nozzle(P_LT, T_M)

    gp = GasPath(T_LC=T_LC, T_HC=T_HC, T_HT=T_HT, T_LT=T_LT, T_M=T_M,
                 mdot_LC=f_LC, mdot_HC=f_HC, mdot_HT=f_HT, mdot_LT=f_LT,
                 mdot_n=m_n, map_mdot_LC=m_LC, map_mdot_HC=m_HC,
                 map_mdot_HT=m_HT, map_mdot_LT=m_LT)
    return gp


def gte_deriv(x, theta, u, c: EngineConstants, maps: PerformanceMaps,
              envelope_check: bool = True) -> np.ndarray:
    """Right-hand side of the seven volume/rotor/heat ODEs (batched).

    u is the fuel mass flow in kg/s (scalar or per-row).  The state must
    carry the batch axis when theta does; parameter batches reuse the
    measurement path instead.
    """
    x2, x_flat = _batch(x, 7)
    squeeze = x_flat and np.ndim(theta) == 1
    if envelope_check:
        check_envelope(x2, c)
    gp = gas_path(x2, theta, c, maps)
    if gp.T_LC.shape[0] != x2.shape[0]:
        raise ValueError("state derivative needs the batch on the state side")
    mf = float(u) if np.ndim(u) == 0 else np.asarray(u, dtype=float)

    T_CC = x2[:, I_TCC]
    N1 = x2[:, I_N1]
    N2 = x2[:, I_N2]
    P_LT = x2[:, I_PLT]
    P_CC = x2[:, I_PCC]
    P_LC = x2[:, I_PLC]
    P_HT = x2[:, I_PHT]

    R = c.R
    # combustor gas mass from the ideal-gas law (P in kPa -> factor 1000)
    m_CC = 1000.0 * P_CC * c.V_CC / (R * T_CC)
    dm = gp.mdot_HC + mf - gp.mdot_HT
    dT_CC = ((c.c_p * gp.T_HC * gp.mdot_HC + c.eta_CC * c.H_u * mf
              - c.c_p * T_CC * gp.mdot_HT) - c.c_v * T_CC * dm) / (c.c_v * m_CC)

    dN1 = (c.eta_mech1 * gp.mdot_HT * c.c_p * (T_CC - gp.T_HT)
           - gp.mdot_HC * c.c_p * (gp.T_HC - gp.T_LC)) / (c.J1 * N1 * RPM)
    dN2 = (c.eta_mech2 * gp.mdot_LT * c.c_p * (gp.T_HT - gp.T_LT)
           - gp.mdot_LC * c.c_p * (gp.T_LC - c.T_d)) / (c.J2 * N2 * RPM)

    bypass = c.beta / (1.0 + c.beta) * gp.mdot_LC
    dP_LT = R * gp.T_M / c.V_M * (gp.mdot_LT + bypass - gp.mdot_n) / 1000.0
    dP_CC = (P_CC / T_CC) * dT_CC + c.gamma * R * T_CC / c.V_CC * dm / 1000.0
    dP_LC = R * gp.T_LC / c.V_LC * (gp.mdot_LC / (1.0 + c.beta) - gp.mdot_HC) / 1000.0
    dP_HT = R * gp.T_HT / c.V_HT * (gp.mdot_HT - gp.mdot_LT) / 1000.0

    out = np.stack([dT_CC, dN1, dN2, dP_LT, dP_CC, dP_LC, dP_HT], axis=1)
    if not np.all(np.isfinite(out)):
        raise SimulationFault("non-finite state derivative")
    return out[0] if squeeze else out


def _velocity_head(flow, flow_des, head_des, P, P_des, T, T_des):
    # sensed total-temperature rise ~ v^2/(2cp) with v ~ mdot T / (P A)
    return head_des * (flow / flow_des) ** 2 * ((P_des / P) * (T / T_des)) ** 2


def gte_measure(x, theta, u, c: EngineConstants, maps: PerformanceMaps,
                ucfg: "UncertaintyConfig | None" = None,
                noise: np.ndarray | None = None,
                t: float | None = None) -> np.ndarray:
    """Eight-channel sensor model: [N1, N2, P_HC, T_HC, T_LC, P_LC, T_LT, T_HT].

    Speeds and the LPC exit pressure read the state directly.  The derived
    channels come from the gas-path relations plus surrogate sensor physics:
    velocity heads on the temperature probes, cooling-bleed dilution on the
    turbine exit probes, and a flow-dependent combustor pressure rise for the
    burner inlet tap.
    """
    x2, x_flat = _batch(x, 7)
    th, th_flat = _batch(theta, 8)
    squeeze = x_flat and th_flat
    gp = gas_path(x2, theta, c, maps)
    B = gp.T_LC.shape[0]
    x2b = np.broadcast_to(x2, (B, 7)) if x2.shape[0] != B else x2
    thb = np.broadcast_to(th, (B, 8)) if th.shape[0] != B else th

    P_CC, P_LC, P_LT, P_HT = (x2b[:, I_PCC], x2b[:, I_PLC],
                              x2b[:, I_PLT], x2b[:, I_PHT])

    p_hc = P_CC * (1.0 + c.c_dp * (gp.mdot_HC / c.mdot_HC_des) ** 2)

    t_lc = gp.T_LC + _velocity_head(gp.mdot_LC, c.mdot_LC_des, c.head_LC,
                                    P_LC, c.P_LC_des, gp.T_LC, c.T_LC_des)
    t_hc = gp.T_HC + _velocity_head(gp.mdot_HC, c.mdot_HC_des, c.head_HC,
                                    P_CC, c.P_CC_des, gp.T_HC, c.T_HC_des)
    # turbine exit probes sit in bleed-cooled flow: dilution scales with the
    # compressor-side bleed over the local turbine flow
    eps_ht = c.bleed_HT * (gp.mdot_HC / c.mdot_HC_des) / (gp.mdot_HT / c.mdot_HT_des)
    eps_lt = c.bleed_LT * (gp.mdot_LC / c.mdot_LC_des) / (gp.mdot_LT / c.mdot_LT_des)
    t_ht_core = gp.T_HT + _velocity_head(gp.mdot_HT, c.mdot_HT_des, c.head_HT,
                                         P_HT, c.P_HT_des, gp.T_HT, c.T_HT_des)
    t_lt_core = gp.T_LT + _velocity_head(gp.mdot_LT, c.mdot_LT_des, c.head_LT,
                                         P_LT, c.P_LT_des, gp.T_LT, c.T_LT_des)
    t_ht = (1.0 - eps_ht) * t_ht_core + eps_ht * gp.T_HC
    t_lt = (1.0 - eps_lt) * t_lt_core + eps_lt * gp.T_LC

    z = np.stack([x2b[:, I_N1], x2b[:, I_N2], p_hc, t_hc, t_lc,
                  x2b[:, I_PLC], t_lt, t_ht], axis=1)
    if ucfg is not None and ucfg.active(t):
        z = z + uncertainty_zeta(x2b, u, ucfg, c, maps)
    if noise is not None:
        z = z + noise
    if not np.all(np.isfinite(z)):
        raise SimulationFault("non-finite measurement")
    return z[0] if squeeze else z


def rk4_step(x, theta, u, dt: float, c: EngineConstants,
             maps: PerformanceMaps) -> np.ndarray:
    """Classical four-stage Runge-Kutta advance of the engine state."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    k1 = gte_deriv(x, theta, u, c, maps)
    k2 = gte_deriv(x + (0.5 * dt) * k1, theta, u, c, maps, envelope_check=False)
    k3 = gte_deriv(x + (0.5 * dt) * k2, theta, u, c, maps, envelope_check=False)
    k4 = gte_deriv(x + dt * k3, theta, u, c, maps, envelope_check=False)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def trim_solve(c: EngineConstants, maps: PerformanceMaps, u: float,
               x0: np.ndarray | None = None, tol: float = 1e-10,
               max_iter: int = 80) -> np.ndarray:
    """Damped Newton solve of gte_deriv(x, 1, u) = 0 from the design point."""
    x = np.array(c.design_state() if x0 is None else x0, dtype=float)
    theta = np.ones(8)
    scale = np.abs(c.design_state())

    def f(xx):
        return gte_deriv(xx, theta, u, c, maps)

    fx = f(x)
    for _ in range(max_iter):
        if np.max(np.abs(fx) / scale) < tol:
            return x
        J = np.empty((7, 7))
        for j in range(7):
            h = 1e-6 * scale[j]
            xp = x.copy()
            xp[j] += h
            J[:, j] = (f(xp) - fx) / h
        step = np.linalg.solve(J, -fx)
        lam = 1.0
        best = None
        for _ in range(30):
            try:
                cand = x + lam * step
                fc = f(cand)
            except SimulationFault:
                lam *= 0.5
                continue
            if np.max(np.abs(fc) / scale) < np.max(np.abs(fx) / scale):
                best = (cand, fc)
                break
            lam *= 0.5
        if best is None:
            raise SimulationFault("trim Newton iteration stalled")
        x, fx = best
    raise SimulationFault(
        f"trim did not converge: residual {np.max(np.abs(fx) / scale):.3e}")


# ---------------------------------------------------------------------------
# faults
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FaultEvent:
    """A timed multiplicative change to one health parameter.

    profile: ("abrupt", delta) steps the multiplier to 1 + delta;
             ("ramp", rate) accumulates rate per second after onset;
             ("exp", alpha, beta) relaxes the multiplier from 1 toward beta
             with rate alpha (alpha < 0).
    """

    mode: str
    onset: float
    profile: tuple

    def multiplier(self, t: float) -> float:
        if t < self.onset:
            return 1.0
        kind = self.profile[0]
        dt = t - self.onset
        if kind == "abrupt":
            return 1.0 + self.profile[1]
        if kind == "ramp":
            return 1.0 + self.profile[1] * dt
        if kind == "exp":
            alpha, beta = self.profile[1], self.profile[2]
            return beta + (1.0 - beta) * math.exp(alpha * dt)
        raise ValueError(f"unknown fault profile {kind!r}")


@dataclass(frozen=True)
class FaultSchedule:
    """Ordered fault events; overlapping events on a mode compose multiplicatively."""

    events: tuple[FaultEvent, ...] = ()

    def __post_init__(self):
        onsets = [e.onset for e in self.events]
        if any(b < a for a, b in zip(onsets, onsets[1:])):
            raise ValueError("fault onsets must be nondecreasing")
        for e in self.events:
            if e.mode not in FAULT_MODES:
                raise ValueError(f"unknown fault mode {e.mode!r}")
            if e.profile[0] == "abrupt" and abs(e.profile[1]) > 0.2:
                raise ValueError("abrupt fault magnitude above 20% is outside scope")

    def theta(self, t: float) -> np.ndarray:
        th = np.ones(8)
        for e in self.events:
            th[FAULT_MODES.index(e.mode)] *= e.multiplier(t)
        return th

    def active_modes(self, t: float) -> set[str]:
        return {e.mode for e in self.events if t >= e.onset}


def inject_fault(theta_healthy: np.ndarray, schedule: FaultSchedule,
                 t: float) -> np.ndarray:
    """Health-parameter vector at time t (multiplies the healthy baseline)."""
    return np.asarray(theta_healthy, dtype=float) * schedule.theta(t)


# ---------------------------------------------------------------------------
# modeling uncertainty
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UncertaintyConfig:
    """Relative perturbations of the heat-capacity ratio and spool inertias,
    switched on at ``onset`` seconds, plus the assumed bias bound."""

    d_gamma: float = 0.0
    d_j1: float = 0.0
    d_j2: float = 0.0
    onset: float = 0.0
    zeta_bar: float = 0.05

    def __post_init__(self):
        for v in (self.d_gamma, self.d_j1, self.d_j2):
            if not 0.0 <= abs(v) <= 0.1:
                raise ValueError("relative perturbations limited to [0, 0.1]")

    def active(self, t: float | None) -> bool:
        if t is None:
            return True
        return t >= self.onset

    def any_nonzero(self) -> bool:
        return any(v != 0.0 for v in (self.d_gamma, self.d_j1, self.d_j2))


def uncertainty_zeta(x, u, ucfg: UncertaintyConfig, c: EngineConstants,
                     maps: PerformanceMaps) -> np.ndarray:
    """Structured measurement bias from inertia/gamma mismatch.

    The spool terms carry the net shaft power divided by the rotor term and
    the reciprocal inertia difference 1/J' - 1/J (zero when the perturbation
    vanishes); the gamma term perturbs the combustor pressure-rate relation.
    Returned as an 8-vector aligned with the measurement channels (first
    three nonzero).
    """
    x2, squeeze = _batch(x, 7)
    th = np.ones(8)
    gp = gas_path(x2, th, c, maps)
    T_CC, N1, N2 = x2[:, I_TCC], x2[:, I_N1], x2[:, I_N2]
    mf = float(u)

    k1 = c.eta_mech1 * gp.map_mdot_HT * c.c_p
    k2 = gp.map_mdot_HC * c.c_p
    k3 = c.eta_mech2 * gp.map_mdot_LT * c.c_p
    k4 = gp.map_mdot_LC * c.c_p

    inv_dj1 = 1.0 / (c.J1 * (1.0 + ucfg.d_j1)) - 1.0 / c.J1
    inv_dj2 = 1.0 / (c.J2 * (1.0 + ucfg.d_j2)) - 1.0 / c.J2

    z1 = (k1 * (T_CC - gp.T_HT) - k2 * (gp.T_HC - gp.T_LC)) / (N2 * RPM) * inv_dj1
    z2 = (k3 * (gp.T_HT - gp.T_LT) - k4 * (gp.T_LC - c.T_d)) / (N1 * RPM) * inv_dj2
    z3 = (ucfg.d_gamma * c.gamma) * c.R * T_CC * (
        gp.map_mdot_HC + mf - gp.map_mdot_HT) / c.V_CC / 1000.0

    out = np.zeros((x2.shape[0], 8))
    out[:, 0] = z1
    out[:, 1] = z2
    out[:, 2] = z3
    return out[0] if squeeze else out


# ---------------------------------------------------------------------------
# bundled plant
# ---------------------------------------------------------------------------

@dataclass
class GtePlant:
    """Callable bundle of the engine model pieces used by the estimators."""

    const: EngineConstants = field(default_factory=default_constants)
    maps: PerformanceMaps = None
    dt_truth: float = 0.01       # integrator substep, s
    sample_dt: float = 0.1       # measurement/filter interval, s

    def __post_init__(self):
        if self.maps is None:
            self.maps = default_maps(self.const)
        if self.sample_dt < self.dt_truth:
            raise ValueError("sample_dt must be >= dt_truth")
        self.substeps = max(1, round(self.sample_dt / self.dt_truth))

    @property
    def n_x(self) -> int:
        return 7

    @property
    def n_theta(self) -> int:
        return 8

    @property
    def n_z(self) -> int:
        return 8

    def fuel_flow(self, pla: float) -> float:
        return pla * self.const.fuel_gain

    def trim(self, u: float | None = None) -> np.ndarray:
        return trim_solve(self.const, self.maps,
                          self.fuel_flow(self.const.pla) if u is None else u)

    def step_state(self, x, theta, u) -> np.ndarray:
        """Advance one measurement interval with RK4 substeps (batched)."""
        out = np.asarray(x, dtype=float)
        for _ in range(self.substeps):
            out = rk4_step(out, theta, u, self.dt_truth, self.const, self.maps)
        return out

    def measure(self, x, theta, u, ucfg=None, noise=None, t=None) -> np.ndarray:
        return gte_measure(x, theta, u, self.const, self.maps, ucfg, noise, t)

    def nominal_measurement(self, x_trim: np.ndarray) -> np.ndarray:
        return self.measure(x_trim, np.ones(8), self.fuel_flow(self.const.pla))
