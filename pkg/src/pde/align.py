"""Least-squares alignment of predictions to a reference raster.

Depth-domain fits solve ``min_a,b sum_mask (a*pred + b - ref)^2`` in closed
form; disparity-domain fits do the same against the reference disparity
``1/ref`` and the aligned depth is later recovered as ``1/(a*rho + b)``.
Sums use numpy's pairwise summation, which keeps the two-parameter normal
equations well conditioned without an iterative solver.

All fits use exactly the pixels of the evaluation mask (intersected with
both rasters' validity); the same pixels are later scored.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .depthio import DepthMap, Mask, ValueKind
from .errors import DataError, DegenerateFitError


class AlignMode(str, enum.Enum):
    SCALE_SHIFT_DEPTH = "scale-shift-depth"
    SCALE_DEPTH = "scale-depth"
    SCALE_SHIFT_DISPARITY = "scale-shift-disparity"
    SCALE_DISPARITY = "scale-disparity"
    MEDIAN_NORMALIZE = "median-normalize"

    @property
    def in_disparity(self) -> bool:
        return self in (AlignMode.SCALE_SHIFT_DISPARITY, AlignMode.SCALE_DISPARITY)


@dataclass(frozen=True)
class AlignParams:
    """Scale/shift of a fit plus the mode that produced it."""

    a: float
    b: float
    mode: AlignMode

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ValueError("alignment parameters must be finite")
        if self.mode in (AlignMode.SCALE_DEPTH, AlignMode.SCALE_DISPARITY) and self.b != 0.0:
            raise ValueError("scale-only modes require b == 0")


@dataclass(frozen=True)
class ClipRange:
    """Post-alignment depth clamp. Defaults to the 0.1 m .. 1000 m range."""

    min: float = 0.1
    max: float = 1000.0
    enabled: bool = True

    def __post_init__(self):
        if self.enabled and not (0 < self.min < self.max):
            raise ValueError("clip range requires 0 < min < max")

    @staticmethod
    def disabled() -> "ClipRange":
        return ClipRange(enabled=False)


def joint_pixels(pred: DepthMap, ref: DepthMap, mask: Mask) -> tuple[np.ndarray, np.ndarray]:
    """Masked pixel pairs valid in both rasters, as flat float64 arrays."""
    if pred.values.shape != ref.values.shape or mask.bits.shape != pred.values.shape:
        raise ValueError("prediction, reference, and mask shapes differ")
    keep = mask.bits & pred.valid & ref.valid
    return pred.values[keep], ref.values[keep]


def fit_scale_shift_depth(pred: DepthMap, ref: DepthMap, mask: Mask) -> AlignParams:
    """Closed-form normal-equation fit of a*pred + b to ref over the mask."""
    x, y = joint_pixels(pred, ref, mask)
    if x.size < 2:
        raise DegenerateFitError(f"scale-shift fit needs >= 2 pixels, got {x.size}")
    xm = x.mean()
    ym = y.mean()
    dx = x - xm
    dy = y - ym
    sxx = float(np.sum(dx * dx))
    if sxx == 0.0:
        raise DegenerateFitError("prediction is constant over the mask")
    a = float(np.sum(dx * dy)) / sxx
    b = float(ym - a * xm)
    return AlignParams(a=a, b=b, mode=AlignMode.SCALE_SHIFT_DEPTH)


def fit_scale_depth(pred: DepthMap, ref: DepthMap, mask: Mask) -> AlignParams:
    """Scale-only fit: a = sum(pred*ref) / sum(pred^2) over the mask."""
    x, y = joint_pixels(pred, ref, mask)
    if x.size < 1:
        raise DegenerateFitError("scale fit needs at least one pixel")
    sxx = float(np.sum(x * x))
    if sxx == 0.0:
        raise DegenerateFitError("prediction is zero over the mask")
    a = float(np.sum(x * y)) / sxx
    return AlignParams(a=a, b=0.0, mode=AlignMode.SCALE_DEPTH)


def fit_disparity(pred_disp: DepthMap, ref: DepthMap, mask: Mask,
                  shift: bool = True) -> AlignParams:
    """Fit a*rho + b (or a*rho) to the reference disparity 1/ref."""
    x, y = joint_pixels(pred_disp, ref, mask)
    if np.any(y <= 0):
        raise DataError("reference depth must be strictly positive for disparity fits")
    ref_disp = DepthMap(
        np.where(ref.valid, 1.0 / np.where(ref.valid, ref.values, 1.0), np.nan),
        ValueKind.AFFINE_DISPARITY,
        ref.valid,
    )
    if shift:
        fit = fit_scale_shift_depth(pred_disp, ref_disp, mask)
        return AlignParams(fit.a, fit.b, AlignMode.SCALE_SHIFT_DISPARITY)
    fit = fit_scale_depth(pred_disp, ref_disp, mask)
    return AlignParams(fit.a, 0.0, AlignMode.SCALE_DISPARITY)


def apply_alignment(pred: DepthMap, params: AlignParams, clip: ClipRange) -> DepthMap:
    """Apply fitted parameters and the depth clamp.

    Depth modes compute ``a*d + b``; disparity modes compute
    ``1/(a*rho + b)`` and invalidate pixels whose adjusted disparity is
    non-positive (they have no depth). With clipping disabled, non-positive
    aligned depths are likewise invalidated rather than clamped.
    """
    if params.mode.in_disparity:
        adj = params.a * pred.values + params.b
        ok = pred.valid & (adj > 0)
        out = np.where(ok, 1.0 / np.where(ok, adj, 1.0), np.nan)
        valid = ok
    else:
        out = params.a * pred.values + params.b
        valid = pred.valid
    if clip.enabled:
        out = np.clip(out, clip.min, clip.max)
    kind = (
        ValueKind.NORMALIZED_DEPTH
        if pred.kind is ValueKind.NORMALIZED_DEPTH or params.mode is AlignMode.MEDIAN_NORMALIZE
        else ValueKind.METRIC_DEPTH
    )
    return DepthMap(out, kind, valid)


def normalize_median(pred: DepthMap, mask: Mask) -> DepthMap:
    """Rescale so the masked median becomes exactly 1.

    Used by the self-consistency path, where predictions are compared with
    each other instead of metric ground truth; no depth clamp applies
    afterwards. Even pixel counts take the mean of the two central order
    statistics.
    """
    vals = pred.values[mask.bits & pred.valid]
    if vals.size < 1:
        raise DegenerateFitError("median normalization needs at least one pixel")
    med = float(np.median(vals))
    if not med > 0:
        raise DegenerateFitError(f"masked median {med} is not positive")
    return DepthMap(pred.values / med, ValueKind.NORMALIZED_DEPTH, pred.valid)
