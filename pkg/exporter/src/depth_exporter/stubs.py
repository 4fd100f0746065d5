"""Deterministic stand-in models for wiring and contract tests.

Real model adapters follow the same shape: expose ``name``,
``output_kind``, and ``predict(image_path)``, run the model's default
inference, and let the exporter handle resolution and file format.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rasters


@dataclass(frozen=True)
class ConstantDepthModel:
    """Predicts one depth everywhere, optionally at reduced resolution."""

    value: float = 2.0
    resolution_divisor: int = 1
    name: str = "stub-constant"
    output_kind: str = "metric-depth"

    def predict(self, image_path) -> np.ndarray:
        width, height = rasters.image_size(image_path)
        h = max(1, height // self.resolution_divisor)
        w = max(1, width // self.resolution_divisor)
        return np.full((h, w), self.value, dtype=np.float64)


@dataclass(frozen=True)
class RampDepthModel:
    """Left-to-right depth ramp; varies per pixel but stays deterministic."""

    near: float = 1.0
    far: float = 5.0
    name: str = "stub-ramp"
    output_kind: str = "metric-depth"

    def predict(self, image_path) -> np.ndarray:
        width, height = rasters.image_size(image_path)
        row = np.linspace(self.near, self.far, width)
        return np.tile(row, (height, 1))


def from_spec(spec: str):
    """Parse ``stub-constant[:value[:divisor]]`` / ``stub-ramp[:near:far]``."""
    parts = spec.split(":")
    if parts[0] == "stub-constant":
        value = float(parts[1]) if len(parts) > 1 else 2.0
        divisor = int(parts[2]) if len(parts) > 2 else 1
        return ConstantDepthModel(value=value, resolution_divisor=divisor)
    if parts[0] == "stub-ramp":
        near = float(parts[1]) if len(parts) > 1 else 1.0
        far = float(parts[2]) if len(parts) > 2 else 5.0
        return RampDepthModel(near=near, far=far)
    raise ValueError(f"unknown stub model spec {spec!r}")
