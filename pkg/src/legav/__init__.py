"""Averaging of nearby Legendrian curves in 3-dimensional contact models."""

from .averaging import (
    AverageConfig,
    AverageResult,
    contact_moser_average,
    epsilon_gate,
    prepare,
    symplectization_average,
    weinstein_average,
)
from .curves import (
    DiscreteCurve,
    DiscreteLegendrian,
    FamilyInput,
    Isometry,
    apply_map,
    lift_front_cylinder,
    lift_planar_heisenberg,
    perturb,
    read_curve_csv,
    write_curve_csv,
)
from .distances import d0, d1, gentleness_report
from .errors import LegavError
from .models import Cylinder, Heisenberg, get_model

__all__ = [
    "AverageConfig",
    "AverageResult",
    "Cylinder",
    "DiscreteCurve",
    "DiscreteLegendrian",
    "FamilyInput",
    "Heisenberg",
    "Isometry",
    "LegavError",
    "apply_map",
    "contact_moser_average",
    "d0",
    "d1",
    "epsilon_gate",
    "gentleness_report",
    "get_model",
    "lift_front_cylinder",
    "lift_planar_heisenberg",
    "perturb",
    "prepare",
    "read_curve_csv",
    "symplectization_average",
    "weinstein_average",
    "write_curve_csv",
]
