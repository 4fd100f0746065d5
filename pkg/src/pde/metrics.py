"""Per-image depth error metrics and the per-record evaluation pipeline.

Metric outputs use the reporting scales directly: absolute relative error
and delta scores are percentages (x100), RMSE is in centimeters, log10 is
unscaled. Every metric considers only pixels that are inside the mask and
valid in both rasters.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import align, depthio
from .align import ClipRange
from .depthio import DepthMap, Mask, ModelEntry, SceneRecord, ValueKind
from .errors import DataError, EmptyMaskError


def _pairs(pred: DepthMap, ref: DepthMap, mask: Mask) -> tuple[np.ndarray, np.ndarray]:
    p, r = align.joint_pixels(pred, ref, mask)
    if p.size == 0:
        raise EmptyMaskError("no jointly valid pixels inside the evaluation mask")
    return p, r


def abs_rel(pred: DepthMap, ref: DepthMap, mask: Mask) -> float:
    """Mean |pred - ref| / ref over the mask, as a percentage."""
    p, r = _pairs(pred, ref, mask)
    if np.any(r <= 0):
        raise DataError("reference must be strictly positive for absolute relative error")
    return float(100.0 * np.mean(np.abs(p - r) / r))


def log10_err(pred: DepthMap, ref: DepthMap, mask: Mask) -> float:
    """Mean |log10(pred) - log10(ref)| over the mask."""
    p, r = _pairs(pred, ref, mask)
    if np.any(p <= 0) or np.any(r <= 0):
        raise DataError("log10 error needs strictly positive values on both sides")
    return float(np.mean(np.abs(np.log10(p) - np.log10(r))))


def rmse(pred: DepthMap, ref: DepthMap, mask: Mask) -> float:
    """Root mean squared difference, reported in centimeters."""
    p, r = _pairs(pred, ref, mask)
    return float(100.0 * np.sqrt(np.mean((p - r) ** 2)))


def delta_threshold(pred: DepthMap, ref: DepthMap, mask: Mask, t: float) -> float:
    """Percentage of pixels with max(pred/ref, ref/pred) < t."""
    if not t > 1:
        raise ValueError("delta threshold must exceed 1")
    p, r = _pairs(pred, ref, mask)
    if np.any(p <= 0) or np.any(r <= 0):
        raise DataError("delta scores need strictly positive values on both sides")
    ratio = np.maximum(p / r, r / p)
    return float(100.0 * np.mean(ratio < t))


@dataclass(frozen=True)
class MetricKind:
    """One scoring rule: identifier, optional ratio threshold, direction."""

    key: str
    family: str  # absrel | log10 | rmse | delta
    t: Optional[float] = None
    higher_better: bool = False

    def __post_init__(self):
        if self.family == "delta" and not (self.t and self.t > 1):
            raise ValueError("delta kinds require t > 1")

    def compute(self, pred: DepthMap, ref: DepthMap, mask: Mask) -> float:
        if self.family == "absrel":
            return abs_rel(pred, ref, mask)
        if self.family == "log10":
            return log10_err(pred, ref, mask)
        if self.family == "rmse":
            return rmse(pred, ref, mask)
        return delta_threshold(pred, ref, mask, self.t)


ABSREL = MetricKind("absrel", "absrel")
LOG10 = MetricKind("log10", "log10")
RMSE = MetricKind("rmse", "rmse")
DELTA_1 = MetricKind("delta1", "delta", t=1.25, higher_better=True)
DELTA_2 = MetricKind("delta2", "delta", t=1.25**2, higher_better=True)
DELTA_3 = MetricKind("delta3", "delta", t=1.25**3, higher_better=True)
DELTA_0125 = MetricKind("delta0125", "delta", t=1.25**0.125, higher_better=True)

DEFAULT_METRICS = (ABSREL, LOG10, RMSE, DELTA_1, DELTA_2, DELTA_3, DELTA_0125)
METRICS_BY_KEY = {m.key: m for m in DEFAULT_METRICS}


class MaskScope(str, enum.Enum):
    OBJECT = "object"
    SCENE = "scene"  # everything except the background


class Reference(str, enum.Enum):
    GROUND_TRUTH = "ground-truth"
    BASE_PREDICTION = "base-prediction"


@dataclass(frozen=True)
class EvalConfig:
    """Choices of mask, alignment, erosion, clipping, and metric set."""

    mask_scope: MaskScope = MaskScope.OBJECT
    align_mode: str = "scale-shift"  # "scale-shift" or "scale"
    erosion_radius: int = 1
    clip: ClipRange = field(default_factory=ClipRange)
    metrics: tuple = DEFAULT_METRICS

    def __post_init__(self):
        if self.align_mode not in ("scale-shift", "scale"):
            raise ValueError("align_mode must be 'scale-shift' or 'scale'")
        if self.erosion_radius < 0:
            raise ValueError("erosion radius must be non-negative")

    def replace(self, **kwargs) -> "EvalConfig":
        from dataclasses import replace

        return replace(self, **kwargs)


@dataclass(frozen=True)
class MetricRow:
    """All metric values for one (model, scene variant, mask, alignment)."""

    model: str
    group_id: str
    variant_index: int  # 0 = base
    mask_scope: MaskScope
    align_mode: str
    values: dict  # metric key -> scalar
    pixel_count: int
    negative_scale_flag: bool = False
    n_invalidated: int = 0  # pixels dropped by the alignment itself

    def __post_init__(self):
        if self.pixel_count < 1:
            raise ValueError("a metric row must rest on at least one pixel")
        for key, value in self.values.items():
            if not np.isfinite(value):
                raise ValueError(f"metric {key} is not finite: {value}")
            kind = METRICS_BY_KEY.get(key)
            if kind and kind.family == "delta" and not (0.0 <= value <= 100.0):
                raise ValueError(f"delta score out of range: {value}")


def build_eval_mask(record: SceneRecord, gt: DepthMap, config: EvalConfig) -> Mask:
    """Evaluation mask per scope: eroded object mask, or scene minus background."""
    if config.mask_scope is MaskScope.OBJECT:
        return depthio.erode_mask(depthio.read_mask(record.object_mask), config.erosion_radius)
    if record.background_mask is not None:
        background = depthio.read_mask(record.background_mask)
    else:
        background = depthio.background_mask(gt, record.background_threshold_m)
    return ~background


def fit_for_model(pred: DepthMap, ref: DepthMap, mask: Mask, model: ModelEntry,
                  config: EvalConfig) -> align.AlignParams:
    """Pick the fit domain from the model's output kind and the config mode."""
    shift = config.align_mode == "scale-shift"
    if model.output_kind is ValueKind.AFFINE_DISPARITY:
        return align.fit_disparity(pred, ref, mask, shift=shift)
    if shift:
        return align.fit_scale_shift_depth(pred, ref, mask)
    return align.fit_scale_depth(pred, ref, mask)


def evaluate_record(
    record: SceneRecord,
    model: ModelEntry,
    config: EvalConfig,
    *,
    group_id: str = "",
    variant_index: int = 0,
    reference: Reference = Reference.GROUND_TRUTH,
    base_record: Optional[SceneRecord] = None,
) -> MetricRow:
    """Mask, align, clip, and score one prediction against its reference.

    With ``reference=BASE_PREDICTION`` the record must be a variant and
    ``base_record`` supplies the unperturbed prediction; that path (median
    normalization, roll compensation, no clamp) lives in :mod:`pde.robust`.

    Raises EmptyMaskError / DegenerateFitError when the record cannot be
    scored; callers treat those as skips with diagnostics.
    """
    if reference is Reference.BASE_PREDICTION:
        from . import robust  # runtime import; robust builds on this module

        if base_record is None:
            raise ValueError("base-prediction reference requires base_record")
        return robust.evaluate_self_consistency_record(
            record, base_record, model, config, group_id=group_id, variant_index=variant_index
        )

    gt = depthio.read_depth_raster(record.gt, ValueKind.METRIC_DEPTH)
    pred_path = record.predictions.get(model.name)
    if pred_path is None:
        raise FileNotFoundError(f"record has no prediction for model {model.name!r}")
    pred = depthio.read_depth_raster(pred_path, model.output_kind)
    if pred.values.shape != gt.values.shape:
        raise DataError(
            f"prediction {pred.values.shape} and ground truth {gt.values.shape} shapes differ"
        )
    mask = build_eval_mask(record, gt, config)
    if not np.any(mask.bits & pred.valid & gt.valid):
        raise EmptyMaskError(
            f"evaluation mask empty for model={model.name} group={group_id} "
            f"variant={variant_index}"
        )
    params = fit_for_model(pred, gt, mask, model, config)
    aligned = align.apply_alignment(pred, params, config.clip)
    usable_before = mask.bits & pred.valid & gt.valid
    usable_after = mask.bits & aligned.valid & gt.valid
    values = {kind.key: kind.compute(aligned, gt, mask) for kind in config.metrics}
    return MetricRow(
        model=model.name,
        group_id=group_id,
        variant_index=variant_index,
        mask_scope=config.mask_scope,
        align_mode=config.align_mode,
        values=values,
        pixel_count=int(usable_after.sum()),
        negative_scale_flag=params.a < 0,
        n_invalidated=int(usable_before.sum() - usable_after.sum()),
    )
