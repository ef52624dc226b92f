"""
Per-frame tile and model planning for object detection on steerable (PTZ)
cameras.

The bootstrap phase profiles a detector family over relative object sizes,
collects an object history at the rest pose, and estimates planning
overhead. At runtime every frame re-projects that history into the current
view, solves a tree-constrained knapsack over candidate tiles and models
within the latency budget, and runs the chosen tiles.
"""

from .geometry import ActuationDelta, BoundingBox, CameraPose, accumulate, reproject_box
from .profile import ModelFamily, ModelProfile, SizeBinning, build_profile, default_binning, relative_area
from .distribution import LocalDistribution, ObjectHistory, extract_history, localize, plan_estimated_accuracy
from .planner import (
    CONSERVATIVE,
    NON_CONSERVATIVE,
    PlanningInstance,
    SpaceTree,
    TilePlan,
    assemble_instance,
    brute_force_plan,
    build_tree,
    dp_dp,
    elect,
    uniform_plans,
)
from .detector import SimulatedDetector, nms_merge
from .runtime import RuntimeConfig, SequenceMetrics, estimate_plan_overhead, run_frame, run_sequence

__version__ = "0.1.0"

__all__ = [
    "ActuationDelta",
    "BoundingBox",
    "CameraPose",
    "accumulate",
    "reproject_box",
    "ModelFamily",
    "ModelProfile",
    "SizeBinning",
    "build_profile",
    "default_binning",
    "relative_area",
    "LocalDistribution",
    "ObjectHistory",
    "extract_history",
    "localize",
    "plan_estimated_accuracy",
    "CONSERVATIVE",
    "NON_CONSERVATIVE",
    "PlanningInstance",
    "SpaceTree",
    "TilePlan",
    "assemble_instance",
    "brute_force_plan",
    "build_tree",
    "dp_dp",
    "elect",
    "uniform_plans",
    "SimulatedDetector",
    "nms_merge",
    "RuntimeConfig",
    "SequenceMetrics",
    "estimate_plan_overhead",
    "run_frame",
    "run_sequence",
]
