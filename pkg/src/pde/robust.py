"""Group-level robustness statistics and self-consistency machinery.

For one scene group (base + N variants of one perturbation type) and one
model, three statistics are computed per metric kind:

* ``mu`` — the metric against ground truth, averaged over base + variants.
* ``sigma`` — the sample variance (divisor N) of those N+1 metric values.
* ``kappa`` — the mean squared difference between each variant prediction
  and the base prediction, ground truth not consulted. Only defined when
  the perturbation leaves the object's depth image unchanged (modulo a
  rigid in-plane transform for camera roll, modulo depth scale for object
  resizing) and the model predicts metric or scale depth.

The self-consistency comparison normalizes BOTH predictions to a masked
median of 1 before the least-squares fit. The fitted scale absorbs any
pre-scaling, so this changes nothing mathematically; numerically it makes
identical (or exactly depth-scaled) predictions cancel exactly instead of
leaving last-ulp residue. No depth clamp applies on this path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import align, depthio, metrics
from .align import ClipRange
from .depthio import DepthMap, Mask, ModelEntry, PerturbationMeta, SceneGroup, SceneRecord, ValueKind
from .errors import DataError, DegenerateFitError, EmptyMaskError, GroupEvalError
from .metrics import EvalConfig, MaskScope, MetricRow

SELF_CONSISTENCY_OUTPUT_KINDS = frozenset({ValueKind.METRIC_DEPTH, ValueKind.SCALE_DEPTH})


def average_error(errors) -> float:
    """Unweighted mean of per-scene metric values (base + variants)."""
    if len(errors) == 0:
        raise ValueError("average of an empty error list")
    return float(np.mean(np.asarray(errors, dtype=np.float64)))


def accuracy_instability(errors) -> float:
    """Sample variance with divisor N over the N+1 values."""
    if len(errors) < 2:
        raise ValueError("instability needs at least two error values")
    values = np.asarray(errors, dtype=np.float64)
    mu = values.mean()
    return float(np.sum((values - mu) ** 2) / (values.size - 1))


def self_inconsistency(deltas) -> float:
    """Mean of squared per-variant deltas against the base prediction."""
    if len(deltas) == 0:
        raise ValueError("self-inconsistency of an empty delta list")
    values = np.asarray(deltas, dtype=np.float64)
    return float(np.mean(values * values))


def eligibility(meta: PerturbationMeta, model: ModelEntry) -> bool:
    """Self-consistency applies iff the perturbation preserves the depth
    image and the model's output is not affine-ambiguous."""
    return meta.self_consistency_eligible and model.output_kind in SELF_CONSISTENCY_OUTPUT_KINDS


# ---------------------------------------------------------------------------
# SE(2) compensation for camera roll


def _snap_exact(value: float, tol: float = 4e-16) -> float:
    for target in (-1.0, -0.5, 0.0, 0.5, 1.0):
        if abs(value - target) <= tol:
            return target
    return value


def snapped_trig(angle: float) -> tuple[float, float]:
    """cos/sin with values snapped at exact multiples of 90 degrees.

    cos(pi/2) evaluates to ~6e-17 in floats; snapping it to zero makes
    quarter-turn rolls exact grid permutations, which the self-consistency
    comparison relies on.
    """
    return _snap_exact(math.cos(angle)), _snap_exact(math.sin(angle))


def _gather(array: np.ndarray, ii: np.ndarray, jj: np.ndarray, fill) -> tuple[np.ndarray, np.ndarray]:
    h, w = array.shape
    inside = (ii >= 0) & (ii < h) & (jj >= 0) & (jj < w)
    ic = np.clip(ii, 0, h - 1)
    jc = np.clip(jj, 0, w - 1)
    out = np.where(inside, array[ic, jc], fill)
    return out, inside


def compensate_roll(
    pred_variant: DepthMap,
    mask_variant: Mask,
    angle: float,
    principal_point: tuple[float, float],
) -> tuple[DepthMap, Mask]:
    """Undo a camera roll by resampling the variant onto the base frame.

    Rolling the camera by ``angle`` moves the image content of a point from
    base pixel p to variant pixel ``c + R(angle) @ (p - c)`` about the
    principal point c (square pixels assumed). The output samples the
    variant there with bilinear interpolation; depth values themselves are
    carried unchanged because camera-frame z is invariant under rotation
    about the optical axis.

    A target pixel is kept only if every contributing source pixel is
    inside bounds, valid, and mask-true (edges alias otherwise). Source
    coordinates within 1e-9 of a grid point collapse to that grid point, so
    exact quarter-turn rolls copy pixels bitwise.
    """
    if not math.isfinite(angle):
        raise ValueError("roll angle must be finite")
    h, w = pred_variant.values.shape
    cx, cy = principal_point
    if not (0.0 <= cx <= w and 0.0 <= cy <= h):
        raise ValueError(f"principal point ({cx}, {cy}) outside the {w}x{h} image")
    cos_t, sin_t = snapped_trig(angle)

    jj, ii = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    dx = (jj + 0.5) - cx
    dy = (ii + 0.5) - cy
    src_x = cx + cos_t * dx - sin_t * dy
    src_y = cy + sin_t * dx + cos_t * dy

    fx = src_x - 0.5
    fy = src_y - 0.5
    rx = np.round(fx)
    ry = np.round(fy)
    fx = np.where(np.abs(fx - rx) < 1e-9, rx, fx)
    fy = np.where(np.abs(fy - ry) < 1e-9, ry, fy)

    j0 = np.floor(fx).astype(np.int64)
    i0 = np.floor(fy).astype(np.int64)
    wx = fx - j0
    wy = fy - i0

    usable = mask_variant.bits & pred_variant.valid
    value = np.zeros((h, w), dtype=np.float64)
    keep = np.ones((h, w), dtype=bool)
    for di, dj, weight in (
        (0, 0, (1.0 - wy) * (1.0 - wx)),
        (0, 1, (1.0 - wy) * wx),
        (1, 0, wy * (1.0 - wx)),
        (1, 1, wy * wx),
    ):
        contributes = weight > 0.0
        vals, inside = _gather(pred_variant.values, i0 + di, j0 + dj, 0.0)
        ok, _ = _gather(usable, i0 + di, j0 + dj, False)
        keep &= ~contributes | (inside & ok)
        value = value + weight * np.where(contributes & inside & ok, vals, 0.0)

    out_values = np.where(keep, value, np.nan)
    return DepthMap(out_values, pred_variant.kind, keep), Mask(keep)


# ---------------------------------------------------------------------------
# Self-consistency comparison for one variant


def _scene_mask(record: SceneRecord, gt: DepthMap) -> Mask:
    if record.background_mask is not None:
        return ~depthio.read_mask(record.background_mask)
    return ~depthio.background_mask(gt, record.background_threshold_m)


def _record_mask(record: SceneRecord, config: EvalConfig) -> Mask:
    if config.mask_scope is MaskScope.OBJECT:
        return depthio.erode_mask(depthio.read_mask(record.object_mask), config.erosion_radius)
    gt = depthio.read_depth_raster(record.gt, ValueKind.METRIC_DEPTH)
    return _scene_mask(record, gt)


def _read_prediction(record: SceneRecord, model: ModelEntry) -> DepthMap:
    path = record.predictions.get(model.name)
    if path is None:
        raise FileNotFoundError(f"record has no prediction for model {model.name!r}")
    return depthio.read_depth_raster(path, model.output_kind)


def evaluate_self_consistency_record(
    variant_record: SceneRecord,
    base_record: SceneRecord,
    model: ModelEntry,
    config: EvalConfig,
    *,
    group_id: str = "",
    variant_index: int = 0,
) -> MetricRow:
    """Score one variant prediction against the base prediction.

    The returned row's values are self-consistency deltas: raw metric
    values for lower-better metrics, ``1 - score/100`` for the delta
    family (so deltas always shrink toward zero as predictions agree).
    """
    meta = variant_record.perturbation
    if meta is None:
        raise ValueError("variant record carries no perturbation metadata")
    if model.output_kind not in SELF_CONSISTENCY_OUTPUT_KINDS:
        raise ValueError(f"self-consistency undefined for {model.output_kind.value} output")
    base_pred = _read_prediction(base_record, model)
    variant_pred = _read_prediction(variant_record, model)
    if base_pred.values.shape != variant_pred.values.shape:
        raise DataError("base and variant predictions have different shapes")

    variant_mask = _record_mask(variant_record, config)
    if meta.se2_compensation_required:
        camera = base_record.camera
        if camera is not None:
            principal_point = (camera.cx, camera.cy)
        else:
            principal_point = (variant_pred.width / 2.0, variant_pred.height / 2.0)
        variant_pred, variant_mask = compensate_roll(
            variant_pred, variant_mask, meta.roll_angle, principal_point
        )
    mask = _record_mask(base_record, config) & variant_mask
    if not np.any(mask.bits & base_pred.valid & variant_pred.valid):
        raise EmptyMaskError(
            f"self-consistency mask empty for model={model.name} group={group_id} "
            f"variant={variant_index}"
        )

    # Both sides to median 1; for object resizing this is exactly the
    # depth-scale alignment the perturbation construction calls for.
    base_norm = align.normalize_median(base_pred, mask)
    variant_norm = align.normalize_median(variant_pred, mask)
    if config.align_mode == "scale-shift":
        params = align.fit_scale_shift_depth(variant_norm, base_norm, mask)
    else:
        params = align.fit_scale_depth(variant_norm, base_norm, mask)
    aligned = align.apply_alignment(variant_norm, params, ClipRange.disabled())

    values = {}
    for kind in config.metrics:
        score = kind.compute(aligned, base_norm, mask)
        values[kind.key] = (1.0 - score / 100.0) if kind.higher_better else score
    usable = mask.bits & aligned.valid & base_norm.valid
    return MetricRow(
        model=model.name,
        group_id=group_id,
        variant_index=variant_index,
        mask_scope=config.mask_scope,
        align_mode=config.align_mode,
        values=values,
        pixel_count=int(usable.sum()),
        negative_scale_flag=params.a < 0,
    )


# ---------------------------------------------------------------------------
# Group evaluation


@dataclass(frozen=True)
class RobustnessRow:
    """mu/sigma/kappa for one (model, group, metric kind)."""

    model: str
    group_id: str
    perturbation: str
    metric: str
    mu: float
    sigma: float
    kappa: Optional[float] = None
    kappa_abs: Optional[float] = None  # mean |delta| diagnostic
    n_variants: int = 0
    n_skipped: int = 0
    n_kappa: Optional[int] = None

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma is a variance and cannot be negative")
        if self.kappa is not None and self.kappa < 0:
            raise ValueError("kappa is a mean of squares and cannot be negative")


@dataclass(frozen=True)
class GroupResult:
    robustness_rows: list
    metric_rows: list  # ground-truth MetricRows, base first
    skips: list  # human-readable skip diagnostics


def evaluate_group_full(group: SceneGroup, model: ModelEntry, config: EvalConfig) -> GroupResult:
    """Evaluate base + variants for one model and reduce to robustness rows."""
    skips = []
    try:
        base_row = metrics.evaluate_record(
            group.base, model, config, group_id=group.group_id, variant_index=0
        )
    except (EmptyMaskError, DegenerateFitError, DataError) as exc:
        raise GroupEvalError(
            f"base record unusable for model={model.name} group={group.group_id}: {exc}"
        ) from exc

    variant_rows = []
    for index, record in enumerate(group.variants, start=1):
        try:
            variant_rows.append(
                metrics.evaluate_record(
                    record, model, config, group_id=group.group_id, variant_index=index
                )
            )
        except (EmptyMaskError, DegenerateFitError, DataError) as exc:
            skips.append(
                f"model={model.name} group={group.group_id} variant={index}: {exc}"
            )
    if not variant_rows:
        raise GroupEvalError(
            f"all variants skipped for model={model.name} group={group.group_id}"
        )

    meta = group.variants[0].perturbation
    kappa_deltas: dict = {kind.key: [] for kind in config.metrics}
    n_kappa = None
    if eligibility(meta, model):
        n_kappa = 0
        for index, record in enumerate(group.variants, start=1):
            try:
                delta_row = evaluate_self_consistency_record(
                    record, group.base, model, config,
                    group_id=group.group_id, variant_index=index,
                )
            except (EmptyMaskError, DegenerateFitError, DataError) as exc:
                skips.append(
                    f"model={model.name} group={group.group_id} variant={index} "
                    f"(self-consistency): {exc}"
                )
                continue
            n_kappa += 1
            for key, delta in delta_row.values.items():
                kappa_deltas[key].append(delta)

    rows = []
    for kind in config.metrics:
        errors = [base_row.values[kind.key]] + [r.values[kind.key] for r in variant_rows]
        deltas = kappa_deltas[kind.key]
        rows.append(
            RobustnessRow(
                model=model.name,
                group_id=group.group_id,
                perturbation=meta.ptype.value,
                metric=kind.key,
                mu=average_error(errors),
                sigma=accuracy_instability(errors),
                kappa=self_inconsistency(deltas) if deltas else None,
                kappa_abs=float(np.mean(np.abs(deltas))) if deltas else None,
                n_variants=len(variant_rows),
                n_skipped=len(group.variants) - len(variant_rows),
                n_kappa=n_kappa,
            )
        )
    return GroupResult(robustness_rows=rows, metric_rows=[base_row] + variant_rows, skips=skips)


def evaluate_group(group: SceneGroup, model: ModelEntry, config: EvalConfig) -> list:
    """Robustness rows only; see evaluate_group_full for the diagnostics."""
    return evaluate_group_full(group, model, config).robustness_rows
