"""Perception-and-energy-aware trajectory planning for UAVs on 2-D feature maps."""

from pep.core import (
    Bounds,
    FeatureMap,
    GoalRegion,
    PlannerParams,
    Trajectory,
    TrajectorySegment,
    UavState,
    arc_length,
    load_scenario,
    save_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "Bounds",
    "FeatureMap",
    "GoalRegion",
    "PlannerParams",
    "Trajectory",
    "TrajectorySegment",
    "UavState",
    "arc_length",
    "load_scenario",
    "save_scenario",
    "__version__",
]
