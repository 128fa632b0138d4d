"""Engine constants and the analytic performance-map surrogate.

Single versioned source for every number the twin-spool simulator uses.
The cycle design point below is constructed so the healthy engine is an
exact equilibrium of the volume/rotor dynamics: dependent quantities
(combustor temperature, fuel/air ratio, spool-2 mechanical efficiency,
nozzle constant, map anchors) are derived from the primary constants via
the steady power and mass balances rather than quoted separately.

None of these values claim to match any particular production engine; they
form a reproducible cruise-like operating point (flight Mach 0.74, standard
ambient, power-lever fraction 0.9) with plausible magnitudes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

__all__ = [
    "EngineConstants",
    "PerformanceMaps",
    "default_constants",
    "default_maps",
    "STATE_NAMES",
    "MEASUREMENT_NAMES",
    "HEALTH_PARAM_NAMES",
    "FAULT_MODES",
]

STATE_NAMES = ("T_CC", "N1", "N2", "P_LT", "P_CC", "P_LC", "P_HT")
MEASUREMENT_NAMES = ("N1", "N2", "P_HC", "T_HC", "T_LC", "P_LC", "T_LT", "T_HT")
# multiplicative health parameters, healthy value 1; order fixes mode labels
HEALTH_PARAM_NAMES = ("eta_HC", "mdot_HC", "eta_HT", "mdot_HT",
                      "eta_LC", "mdot_LC", "eta_LT", "mdot_LT")
FAULT_MODES = ("M1", "M2", "M3", "M4", "M5", "M6", "M7", "M8")

T_STD = 288.15      # K
P_STD = 101.325     # kPa


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


@dataclass(frozen=True)
class EngineConstants:
    """Gas properties, geometry and the derived cycle design point."""

    # gas properties (single working gas for the volume dynamics)
    c_p: float = 1004.5          # J/(kg K)
    c_v: float = 717.5           # J/(kg K)
    gamma_hot: float = 1.33      # expansion exponent for turbine temperature drops

    # shafts and volumes
    J1: float = 8.0              # kg m^2, HP spool
    J2: float = 14.0             # kg m^2, LP spool
    V_CC: float = 0.30           # m^3
    V_LC: float = 0.70
    V_HT: float = 0.25
    V_M: float = 1.20

    # combustion and mechanics
    eta_CC: float = 0.98
    eta_mech1: float = 0.99
    H_u: float = 43.0e6          # J/kg
    beta: float = 2.0            # bypass ratio

    # flight condition (inlet totals from Mach 0.74, standard day)
    mach: float = 0.74
    pla: float = 0.9             # power-lever fraction at the design point

    # design-point anchors (primary choices)
    N1_des: float = 12000.0      # rpm
    N2_des: float = 8000.0
    P_LC_des: float = 250.0      # kPa
    P_CC_des: float = 1600.0
    P_HT_des: float = 450.0
    P_LT_des: float = 170.0
    mdot_HC_des: float = 22.0    # kg/s core flow

    # peak component efficiencies at the design point
    eta_LC_pk: float = 0.86
    eta_HC_pk: float = 0.85
    eta_HT_pk: float = 0.88
    eta_LT_pk: float = 0.89

    # measurement surrogate: combustor dynamic pressure loss factor,
    # sensor velocity heads (K at design flow) and turbine cooling-bleed
    # dilution fractions
    c_dp: float = 0.10
    head_LC: float = 18.0
    head_HC: float = 22.0
    head_HT: float = 28.0
    head_LT: float = 25.0
    bleed_HT: float = 0.08
    bleed_LT: float = 0.07

    # default sensor noise, percent of the nominal cruise value per channel
    # class (tachometers, pressure taps, thermocouples), and process noise
    noise_pct_speed: float = 0.10
    noise_pct_pressure: float = 0.25
    noise_pct_temperature: float = 0.50
    noise_pct_process: float = 0.05

    def measurement_noise_pct(self) -> np.ndarray:
        """Per-channel noise percentages for [N1,N2,P_HC,T_HC,T_LC,P_LC,T_LT,T_HT]."""
        s, p, t = (self.noise_pct_speed, self.noise_pct_pressure,
                   self.noise_pct_temperature)
        return np.array([s, s, p, t, t, p, t, t])

    # state sanity envelope
    temp_min: float = 200.0
    temp_max: float = 2500.0
    speed_factor_max: float = 1.5

    @cached_property
    def gamma(self) -> float:
        return self.c_p / self.c_v

    @cached_property
    def R(self) -> float:
        return self.c_p - self.c_v

    @cached_property
    def kappa_cold(self) -> float:
        return (self.gamma - 1.0) / self.gamma

    @cached_property
    def kappa_hot(self) -> float:
        return (self.gamma_hot - 1.0) / self.gamma_hot

    # ---- inlet totals -----------------------------------------------------
    @cached_property
    def T_d(self) -> float:
        return T_STD * (1.0 + 0.5 * (self.gamma - 1.0) * self.mach ** 2)

    @cached_property
    def P_d(self) -> float:
        return P_STD * (1.0 + 0.5 * (self.gamma - 1.0) * self.mach ** 2) ** (
            self.gamma / (self.gamma - 1.0))

    # ---- derived cycle design point ----------------------------------------
    @cached_property
    def mdot_LC_des(self) -> float:
        # LPC volume balance: core receives 1/(1+beta) of the inlet flow
        return (1.0 + self.beta) * self.mdot_HC_des

    @cached_property
    def PR_LC_des(self) -> float:
        return self.P_LC_des / self.P_d

    @cached_property
    def PR_HC_des(self) -> float:
        return self.P_CC_des / self.P_LC_des

    @cached_property
    def ER_HT_des(self) -> float:
        return self.P_CC_des / self.P_HT_des

    @cached_property
    def ER_LT_des(self) -> float:
        return self.P_HT_des / self.P_LT_des

    @cached_property
    def T_LC_des(self) -> float:
        return self.T_d * (1.0 + (self.PR_LC_des ** self.kappa_cold - 1.0)
                           / self.eta_LC_pk)

    @cached_property
    def T_HC_des(self) -> float:
        return self.T_LC_des * (1.0 + (self.PR_HC_des ** self.kappa_cold - 1.0)
                                / self.eta_HC_pk)

    @cached_property
    def hpt_drop_des(self) -> float:
        """1 - T_HT/T_CC across the HPT at the design expansion ratio."""
        return self.eta_HT_pk * (1.0 - self.ER_HT_des ** (-self.kappa_hot))

    @cached_property
    def T_CC_des(self) -> float:
        # closed-form solve of the combined spool-1 power balance
        #   eta_mech1 (1 + far) T_CC hpt_drop = T_HC - T_LC
        # and the combustor energy balance (far as in far_des)
        a = (self.T_HC_des - self.T_LC_des) / (self.eta_mech1 * self.hpt_drop_des)
        h = self.eta_CC * self.H_u / self.c_p
        return a * h / (h - self.T_HC_des + a)

    @cached_property
    def far_des(self) -> float:
        """Design fuel/air ratio from the combustor energy balance."""
        h = self.eta_CC * self.H_u / self.c_p
        return (self.T_CC_des - self.T_HC_des) / (h - self.T_CC_des)

    @cached_property
    def mdot_f_des(self) -> float:
        return self.far_des * self.mdot_HC_des

    @cached_property
    def fuel_gain(self) -> float:
        """Fuel flow per unit power-lever angle: u = pla * fuel_gain."""
        return self.mdot_f_des / self.pla

    @cached_property
    def mdot_HT_des(self) -> float:
        return self.mdot_HC_des + self.mdot_f_des

    @cached_property
    def mdot_LT_des(self) -> float:
        return self.mdot_HT_des

    @cached_property
    def T_HT_des(self) -> float:
        return self.T_CC_des * (1.0 - self.hpt_drop_des)

    @cached_property
    def T_LT_des(self) -> float:
        drop = self.eta_LT_pk * (1.0 - self.ER_LT_des ** (-self.kappa_hot))
        return self.T_HT_des * (1.0 - drop)

    @cached_property
    def eta_mech2(self) -> float:
        # spool-2 mechanical efficiency closes the LP power balance at design
        lhs = self.mdot_LC_des * (self.T_LC_des - self.T_d)
        rhs = self.mdot_LT_des * (self.T_HT_des - self.T_LT_des)
        return lhs / rhs

    @cached_property
    def bypass_flow_des(self) -> float:
        return self.beta / (1.0 + self.beta) * self.mdot_LC_des

    @cached_property
    def mdot_n_des(self) -> float:
        return self.mdot_LT_des + self.bypass_flow_des

    @cached_property
    def T_M_des(self) -> float:
        hot = self.mdot_LT_des * self.T_LT_des
        cold = self.bypass_flow_des * self.T_LC_des
        return (hot + cold) / self.mdot_n_des

    @cached_property
    def nozzle_constant(self) -> float:
        """Choked-nozzle flow constant: mdot_n = k_n P_LT / sqrt(T_M)."""
        return self.mdot_n_des * math.sqrt(self.T_M_des) / self.P_LT_des

    def design_state(self) -> np.ndarray:
        return np.array([self.T_CC_des, self.N1_des, self.N2_des,
                         self.P_LT_des, self.P_CC_des, self.P_LC_des,
                         self.P_HT_des])

    def with_overrides(self, **kw) -> "EngineConstants":
        return replace(self, **kw)


@dataclass(frozen=True)
class PerformanceMaps:
    """Analytic component maps anchored at the cycle design point.

    Compressors:  mdot = mdot_des * (Nc/Nc_des) * (1 - b*(PR/PR_ref(Nc) - 1))
                  eta  = eta_pk * (1 - c*(PR - PR_ref(Nc))^2)
                  with PR_ref(Nc) = 1 + (PR_des - 1)*(Nc/Nc_des)^2.
    Turbines:     mdot = mdot_des * sqrt(P_in/P_des) * sqrt(T_des/T_in)
                         * psi(ER)/psi(ER_des),  psi(ER) = sqrt(1 - ER^-2)
                  eta  = eta_pk * (1 - c*(ER - ER_des)^2).
    All maps are smooth on the admissible envelope and return the design
    value exactly at the design point.
    """

    const: EngineConstants
    b_LC: float = 1.5
    b_HC: float = 1.2
    c_LC: float = 0.35
    c_HC: float = 0.30
    c_HT: float = 0.03
    c_LT: float = 0.03
    # choke knee: smooth bounded flow rolloff above the speedline pressure
    # ratio (logistic step of depth knee_depth centered knee_y0 above the
    # reference).  The step is shifted so the design-point flow is exact;
    # depth is bounded, so an overdriven point cloud sees strong curvature
    # without collapsing the flow solution
    knee_depth: float = 0.0
    knee_k: float = 120.0
    knee_y0: float = 0.015

    def _speedline(self, y, b):
        # y = PR/PR_ref - 1: monotone-decreasing flow factor with choke knee
        s = 1.0 - b * y
        if self.knee_depth:
            z = self.knee_k * (y - self.knee_y0)
            z0 = -self.knee_k * self.knee_y0
            knee = self.knee_depth * (_sigmoid(z) - _sigmoid(z0))
            s = s - knee
        return s

    # -- low pressure compressor (inlet at T_d, speed N2) --------------------
    def lpc(self, PR, N2):
        c = self.const
        nc = N2 / c.N2_des  # inlet temperature is the constant T_d
        pr_ref = 1.0 + (c.PR_LC_des - 1.0) * nc ** 2
        mdot = c.mdot_LC_des * nc * self._speedline(PR / pr_ref - 1.0, self.b_LC)
        eta = c.eta_LC_pk * (1.0 - self.c_LC * (PR - pr_ref) ** 2)
        return mdot, eta

    # -- high pressure compressor (inlet at T_LC, speed N1) ------------------
    def hpc(self, PR, N1, T_in):
        c = self.const
        nc = (N1 / np.sqrt(T_in / c.T_LC_des)) / c.N1_des
        pr_ref = 1.0 + (c.PR_HC_des - 1.0) * nc ** 2
        mdot = c.mdot_HC_des * nc * self._speedline(PR / pr_ref - 1.0, self.b_HC)
        eta = c.eta_HC_pk * (1.0 - self.c_HC * (PR - pr_ref) ** 2)
        return mdot, eta

    # -- turbines (choked-flow surrogate) ------------------------------------
    @staticmethod
    def _psi(ER):
        return np.sqrt(np.clip(1.0 - ER ** (-2.0), 1e-6, None))

    def hpt(self, ER, P_in, T_in):
        c = self.const
        mdot = (c.mdot_HT_des * np.sqrt(P_in / c.P_CC_des)
                * np.sqrt(c.T_CC_des / T_in)
                * self._psi(ER) / self._psi(c.ER_HT_des))
        eta = c.eta_HT_pk * (1.0 - self.c_HT * (ER - c.ER_HT_des) ** 2)
        return mdot, eta

    def lpt(self, ER, P_in, T_in):
        c = self.const
        mdot = (c.mdot_LT_des * np.sqrt(P_in / c.P_HT_des)
                * np.sqrt(c.T_HT_des / T_in)
                * self._psi(ER) / self._psi(c.ER_LT_des))
        eta = c.eta_LT_pk * (1.0 - self.c_LT * (ER - c.ER_LT_des) ** 2)
        return mdot, eta

    def nozzle(self, P_LT, T_M):
        return self.const.nozzle_constant * P_LT / np.sqrt(T_M)


def default_constants(**overrides) -> EngineConstants:
    return EngineConstants(**overrides)


def default_maps(const: EngineConstants | None = None) -> PerformanceMaps:
    return PerformanceMaps(const or default_constants())
