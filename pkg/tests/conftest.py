"""Shared fixture builders for the test suite."""

import numpy as np
import pytest

from pde import geom
from pde.depthio import CameraModel, DepthMap, Mask, ValueKind


def depth_of(values, kind=ValueKind.METRIC_DEPTH, valid=None) -> DepthMap:
    """DepthMap from a nested list; 1-D input becomes a single row."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    return DepthMap(arr, kind, None if valid is None else np.asarray(valid, bool).reshape(arr.shape))


def full_mask(shape_or_map) -> Mask:
    shape = getattr(shape_or_map, "values", shape_or_map)
    if hasattr(shape, "shape"):
        shape = shape.shape
    return Mask(np.ones(shape, dtype=bool))


def square_camera(size: int = 96, f: float = 96.0) -> CameraModel:
    """Square image, centered principal point, square pixels, identity pose."""
    return CameraModel(fx=f, fy=f, cx=size / 2.0, cy=size / 2.0)


def sphere_scene(size: int = 96, seed: int = 1) -> geom.SceneSpec:
    """Unit sphere 4m ahead of the camera over an off-axis floor plane."""
    return geom.SceneSpec(
        primitives=(
            geom.Sphere((0.0, 0.0, 4.0), 1.0, geom.OBJECT),
            geom.Plane((0.0, -1.0, 0.0), -1.8, geom.BACKGROUND),
        ),
        camera=square_camera(size),
        width=size,
        height=size,
        rng_seed=seed,
    )


@pytest.fixture
def scene():
    return sphere_scene()


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
