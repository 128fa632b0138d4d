"""Hybrid-degree dual cubature filtering for gas-turbine health monitoring."""

__version__ = "0.1.0"

from . import dual, fdii, filters, gte, gte_constants, rules, scenario  # noqa: E402,F401
from .rules import CubatureRule, make_rule, stability_factor  # noqa: F401
from .filters import GaussianBelief, TransitionModel  # noqa: F401
from .dual import DualEstimator, DualState, HybridConfig, PlantModel  # noqa: F401
from .gte import FaultEvent, FaultSchedule, GtePlant, UncertaintyConfig  # noqa: F401
