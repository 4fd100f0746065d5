"""Depth-robustness evaluation harness.

Aligns monocular depth predictions to a reference, computes standard depth
error metrics, and aggregates per-perturbation-group robustness statistics
(average error, accuracy instability, self-inconsistency). Ships analytic
perturbation oracles and a ray-cast fixture generator for verification at
desk scale, plus ingestion of published result tables for ranking.
"""

__version__ = "0.1.0"

from .align import AlignMode, AlignParams, ClipRange
from .depthio import (
    CameraModel,
    DepthMap,
    Mask,
    ModelEntry,
    PerturbationKind,
    PerturbationMeta,
    SceneGroup,
    SceneRecord,
    ValueKind,
)
from .metrics import DEFAULT_METRICS, EvalConfig, MaskScope, MetricKind, MetricRow
from .robust import RobustnessRow

__all__ = [
    "AlignMode",
    "AlignParams",
    "CameraModel",
    "ClipRange",
    "DEFAULT_METRICS",
    "DepthMap",
    "EvalConfig",
    "Mask",
    "MaskScope",
    "MetricKind",
    "MetricRow",
    "ModelEntry",
    "PerturbationKind",
    "PerturbationMeta",
    "RobustnessRow",
    "SceneGroup",
    "SceneRecord",
    "ValueKind",
]
