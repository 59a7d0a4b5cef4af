"""Core analysis modules."""

from core.carleson import (
    CarlesonReport,
    CubeTerm,
    beta3_cube,
    beta3_enlarged,
    carleson_sum_balls,
    carleson_sum_cubes,
)
from core.config import AnalysisConfig, ConfigManager, EstimatorConfig
from core.cubes import Cube, Filtration, build_filtration, build_nets
from core.errors import CarlesonError
from core.jns import JNSInstance, JNSReport, verify_jns
from core.metric_space import MetricKind, MetricMeasureSpace

__all__ = [
    "AnalysisConfig",
    "CarlesonError",
    "CarlesonReport",
    "ConfigManager",
    "Cube",
    "CubeTerm",
    "EstimatorConfig",
    "Filtration",
    "JNSInstance",
    "JNSReport",
    "MetricKind",
    "MetricMeasureSpace",
    "beta3_cube",
    "beta3_enlarged",
    "build_filtration",
    "build_nets",
    "carleson_sum_balls",
    "carleson_sum_cubes",
    "verify_jns",
]
