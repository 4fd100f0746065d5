"""Analytic scene fixtures: a pinhole ray caster plus perturbation oracles.

Scenes are small collections of spheres, axis-aligned boxes, and planes,
each tagged as the object of interest or as background. Rendering casts
one ray per pixel through the pinhole model and records the camera-frame
z of the first intersection (z-depth, not ray length, so rotating the
camera about its optical axis leaves every per-point depth unchanged).
Pixels that hit nothing are at infinite distance.

The perturbation constructors mirror the benchmark's camera/object
perturbations closely enough to serve as oracles: a camera roll must equal
an in-plane rotation of the base render, a dolly zoom must preserve the
object's 2-D extent while scaling its depth, and an object resize must
keep the object's pixels fixed while scaling its depth values.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import depthio
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
from .errors import HarnessError
from .robust import snapped_trig

_EPS = 1e-9

OBJECT = "object"
BACKGROUND = "background"


class PerturbationRejected(HarnessError):
    """The requested perturbation produces an invalid scene."""


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float
    tag: str = OBJECT


@dataclass(frozen=True)
class Box:
    bmin: tuple
    bmax: tuple
    tag: str = OBJECT


@dataclass(frozen=True)
class Plane:
    normal: tuple  # points X with normal . X == offset
    offset: float
    tag: str = BACKGROUND


@dataclass(frozen=True)
class SceneSpec:
    """Deterministic description of one renderable fixture scene."""

    primitives: tuple
    camera: CameraModel
    width: int
    height: int
    rng_seed: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("image must be at least 1x1")
        if not any(p.tag == OBJECT for p in self.primitives):
            raise ValueError("scene needs at least one object primitive")
        center = self.camera.center()
        for prim in self.primitives:
            if _contains(prim, center):
                raise ValueError(f"camera center {center} is inside {prim}")


def _contains(prim, point: np.ndarray) -> bool:
    if isinstance(prim, Sphere):
        return float(np.sum((point - np.asarray(prim.center)) ** 2)) <= prim.radius**2
    if isinstance(prim, Box):
        return bool(
            np.all(point >= np.asarray(prim.bmin)) and np.all(point <= np.asarray(prim.bmax))
        )
    return False  # planes are infinitely thin


# ---------------------------------------------------------------------------
# Rendering


def _ray_grid(spec: SceneSpec) -> tuple[np.ndarray, np.ndarray]:
    """World-space ray origin and per-pixel directions with camera-z == 1.

    With the direction's camera-frame z fixed at 1, the ray parameter of a
    hit equals its z-depth directly.
    """
    cam = spec.camera
    jj, ii = np.meshgrid(
        np.arange(spec.width, dtype=np.float64), np.arange(spec.height, dtype=np.float64)
    )
    vx = ((jj + 0.5) - cam.cx) / cam.fx
    vy = ((ii + 0.5) - cam.cy) / cam.fy
    v = np.stack([vx, vy, np.ones_like(vx)], axis=-1)
    dirs = v @ cam.rotation  # row-vector convention for R^T @ v
    return cam.center(), dirs


def _hit_sphere(origin, dirs, sphere: Sphere) -> np.ndarray:
    oc = np.asarray(sphere.center, np.float64) - origin
    b = dirs @ oc
    a = np.sum(dirs * dirs, axis=-1)
    c = float(oc @ oc) - sphere.radius**2
    disc = b * b - a * c
    hit = disc >= 0.0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t_near = (b - sq) / a
    t_far = (b + sq) / a
    t = np.where(t_near > _EPS, t_near, np.where(t_far > _EPS, t_far, np.inf))
    return np.where(hit, t, np.inf)


def _hit_box(origin, dirs, box: Box) -> np.ndarray:
    bmin = np.asarray(box.bmin, np.float64)
    bmax = np.asarray(box.bmax, np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        t0 = (bmin - origin) / dirs
        t1 = (bmax - origin) / dirs
    near = np.fmin(t0, t1)  # fmin/fmax drop the NaNs from 0/0 slabs
    far = np.fmax(t0, t1)
    t_near = np.max(np.where(np.isnan(near), -np.inf, near), axis=-1)
    t_far = np.min(np.where(np.isnan(far), np.inf, far), axis=-1)
    hit = (t_far >= t_near) & (t_far > _EPS)
    t = np.where(t_near > _EPS, t_near, t_far)
    return np.where(hit, t, np.inf)


def _hit_plane(origin, dirs, plane: Plane) -> np.ndarray:
    normal = np.asarray(plane.normal, np.float64)
    denom = dirs @ normal
    num = plane.offset - float(normal @ origin)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = num / denom
    return np.where((np.abs(denom) > 1e-300) & (t > _EPS), t, np.inf)


def render_depth(spec: SceneSpec) -> tuple[DepthMap, Mask, Mask]:
    """Render z-depth plus the object mask and the (infinite) background mask."""
    origin, dirs = _ray_grid(spec)
    ts = []
    for prim in spec.primitives:
        if isinstance(prim, Sphere):
            ts.append(_hit_sphere(origin, dirs, prim))
        elif isinstance(prim, Box):
            ts.append(_hit_box(origin, dirs, prim))
        elif isinstance(prim, Plane):
            ts.append(_hit_plane(origin, dirs, prim))
        else:
            raise TypeError(f"unknown primitive {type(prim).__name__}")
    stack = np.stack(ts, axis=0)
    depth = stack.min(axis=0)
    nearest = stack.argmin(axis=0)
    hit_any = np.isfinite(depth)
    object_tags = np.asarray([p.tag == OBJECT for p in spec.primitives])
    object_bits = hit_any & object_tags[nearest]
    gt = DepthMap(np.where(hit_any, depth, np.inf), ValueKind.METRIC_DEPTH)
    return gt, Mask(object_bits), Mask(~hit_any)


# ---------------------------------------------------------------------------
# Perturbation constructors


def _snap_matrix(m: np.ndarray, tol: float = 1e-15) -> np.ndarray:
    out = m.copy()
    for target in (-1.0, 0.0, 1.0):
        out[np.abs(out - target) <= tol] = target
    return out


def _rot_z(angle: float) -> np.ndarray:
    c, s = snapped_trig(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rot_y(angle: float) -> np.ndarray:
    c, s = snapped_trig(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rot_x(angle: float) -> np.ndarray:
    c, s = snapped_trig(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _with_camera_rotation(spec: SceneSpec, rotation: np.ndarray) -> SceneSpec:
    """New spec with the given world-to-camera rotation, camera center fixed."""
    center = spec.camera.center()
    camera = CameraModel(
        fx=spec.camera.fx,
        fy=spec.camera.fy,
        cx=spec.camera.cx,
        cy=spec.camera.cy,
        rotation=rotation,
        translation=-(rotation @ center),
    )
    return replace(spec, camera=camera)


def perturb_roll(spec: SceneSpec, angle: float) -> SceneSpec:
    """Rotate the camera about its optical axis, center fixed.

    The perturbed render equals the base render resampled by an in-plane
    rotation by ``angle`` about the principal point (square pixels).
    """
    if not abs(angle) < math.pi:
        raise ValueError("roll angle must satisfy |angle| < pi")
    rotation = _snap_matrix(_rot_z(angle) @ spec.camera.rotation)
    return _with_camera_rotation(spec, rotation)


def _object_pixels_world(spec: SceneSpec) -> np.ndarray:
    """World points of the object's visible surface in the base render."""
    gt, obj_mask, _ = render_depth(spec)
    origin, dirs = _ray_grid(spec)
    pts = origin + gt.values[..., None] * dirs
    return pts[obj_mask.bits & gt.valid]


def perturb_pan_tilt(spec: SceneSpec, pan: float, tilt: float) -> SceneSpec:
    """Rotate the camera about its Y axis (pan) then X axis (tilt).

    Image coordinates of static points move by the pure-rotation homography
    K @ R_rel @ K^-1. Rejected if any visible object pixel would leave the
    image, checked by reprojecting the base render's object surface.
    """
    r_rel = _snap_matrix(_rot_x(tilt) @ _rot_y(pan))
    rotation = _snap_matrix(r_rel @ spec.camera.rotation)
    perturbed = _with_camera_rotation(spec, rotation)
    pts = _object_pixels_world(spec)
    cam = perturbed.camera
    in_cam = pts @ cam.rotation.T + cam.translation
    z = in_cam[:, 2]
    if np.any(z <= 0):
        raise PerturbationRejected("object moves behind the camera")
    u = cam.fx * in_cam[:, 0] / z + cam.cx
    v = cam.fy * in_cam[:, 1] / z + cam.cy
    if np.any((u < 0) | (u > spec.width) | (v < 0) | (v > spec.height)):
        raise PerturbationRejected("object leaves the frustum under pan/tilt")
    return perturbed


def _object_anchor(spec: SceneSpec) -> np.ndarray:
    """Centroid of the bounded object primitives, in world coordinates."""
    centers = []
    for prim in spec.primitives:
        if prim.tag != OBJECT:
            continue
        if isinstance(prim, Sphere):
            centers.append(np.asarray(prim.center, np.float64))
        elif isinstance(prim, Box):
            centers.append(
                (np.asarray(prim.bmin, np.float64) + np.asarray(prim.bmax, np.float64)) / 2.0
            )
    if not centers:
        raise PerturbationRejected("object has no bounded primitive to anchor on")
    return np.mean(centers, axis=0)


def anchor_depth(spec: SceneSpec) -> float:
    """Camera-frame z of the object anchor."""
    cam = spec.camera
    return float((cam.rotation @ _object_anchor(spec) + cam.translation)[2])


def perturb_dolly_zoom(spec: SceneSpec, focal_ratio: float) -> SceneSpec:
    """Scale the focal length and back the camera off along its axis.

    The anchor depth becomes ``focal_ratio`` times the base anchor depth,
    which keeps the object's projected size roughly constant (exactly so
    for the anchor plane).
    """
    if not focal_ratio > 0:
        raise ValueError("focal ratio must be positive")
    z_anchor = anchor_depth(spec)
    cam = spec.camera
    axis_world = cam.rotation.T @ np.array([0.0, 0.0, 1.0])
    new_center = cam.center() - (focal_ratio - 1.0) * z_anchor * axis_world
    camera = CameraModel(
        fx=cam.fx * focal_ratio,
        fy=cam.fy * focal_ratio,
        cx=cam.cx,
        cy=cam.cy,
        rotation=cam.rotation,
        translation=-(cam.rotation @ new_center),
    )
    try:
        return replace(spec, camera=camera)
    except ValueError as exc:
        raise PerturbationRejected(str(exc)) from None


def _scale_about(point: np.ndarray, anchor: np.ndarray, s: float) -> np.ndarray:
    return anchor + s * (point - anchor)


def perturb_resize_object(spec: SceneSpec, s: float) -> SceneSpec:
    """Scale the object by ``s`` and retreat the camera to keep its pixels.

    The object is scaled about the anchor point on the central viewing ray
    at the object's depth, and the camera center moves to
    ``s*C + (1-s)*anchor``. Every object surface point then lies on the
    same ray from the camera at ``s`` times the distance: identical object
    pixels, depth values scaled by exactly ``s``.
    """
    if not s > 0:
        raise ValueError("resize scale must be positive")
    cam = spec.camera
    center = cam.center()
    axis_world = cam.rotation.T @ np.array([0.0, 0.0, 1.0])
    anchor = center + anchor_depth(spec) * axis_world
    prims = []
    for prim in spec.primitives:
        if prim.tag != OBJECT:
            prims.append(prim)
        elif isinstance(prim, Sphere):
            prims.append(
                replace(
                    prim,
                    center=tuple(_scale_about(np.asarray(prim.center, float), anchor, s)),
                    radius=prim.radius * s,
                )
            )
        elif isinstance(prim, Box):
            prims.append(
                replace(
                    prim,
                    bmin=tuple(_scale_about(np.asarray(prim.bmin, float), anchor, s)),
                    bmax=tuple(_scale_about(np.asarray(prim.bmax, float), anchor, s)),
                )
            )
        else:
            normal = np.asarray(prim.normal, float)
            prims.append(replace(prim, offset=s * prim.offset + (1.0 - s) * float(normal @ anchor)))
    new_center = s * center + (1.0 - s) * anchor
    camera = CameraModel(
        fx=cam.fx, fy=cam.fy, cx=cam.cx, cy=cam.cy,
        rotation=cam.rotation, translation=-(cam.rotation @ new_center),
    )
    try:
        return replace(spec, primitives=tuple(prims), camera=camera)
    except ValueError as exc:
        raise PerturbationRejected(str(exc)) from None


def _translate_object(spec: SceneSpec, offset) -> SceneSpec:
    off = np.asarray(offset, np.float64)
    prims = []
    for prim in spec.primitives:
        if prim.tag != OBJECT:
            prims.append(prim)
        elif isinstance(prim, Sphere):
            prims.append(replace(prim, center=tuple(np.asarray(prim.center) + off)))
        elif isinstance(prim, Box):
            prims.append(
                replace(
                    prim,
                    bmin=tuple(np.asarray(prim.bmin) + off),
                    bmax=tuple(np.asarray(prim.bmax) + off),
                )
            )
        else:
            normal = np.asarray(prim.normal, float)
            prims.append(replace(prim, offset=prim.offset + float(normal @ off)))
    try:
        return replace(spec, primitives=tuple(prims))
    except ValueError as exc:
        raise PerturbationRejected(str(exc)) from None


def _rotate_object(spec: SceneSpec, angle: float) -> SceneSpec:
    """Rotate object sphere centers about the object centroid (world z-axis)."""
    rot = _rot_z(angle)
    anchor = _object_anchor(spec)
    prims = []
    for prim in spec.primitives:
        if prim.tag != OBJECT:
            prims.append(prim)
        elif isinstance(prim, Sphere):
            moved = anchor + rot @ (np.asarray(prim.center, float) - anchor)
            prims.append(replace(prim, center=tuple(moved)))
        else:
            raise PerturbationRejected("object rotation fixtures need sphere-only objects")
    return replace(spec, primitives=tuple(prims))


def _deform_object(spec: SceneSpec, radius_scale: float) -> SceneSpec:
    prims = []
    deformed = False
    for prim in spec.primitives:
        if prim.tag == OBJECT and isinstance(prim, Sphere) and not deformed:
            prims.append(replace(prim, radius=prim.radius * radius_scale))
            deformed = True
        else:
            prims.append(prim)
    if not deformed:
        raise PerturbationRejected("deformation fixtures need an object sphere")
    return replace(spec, primitives=tuple(prims))


def _occlude_object(spec: SceneSpec, count: int, thickness: float) -> SceneSpec:
    """Thin vertical bars between camera and object, tagged background."""
    anchor = _object_anchor(spec)
    cam = spec.camera
    center = cam.center()
    axis_world = cam.rotation.T @ np.array([0.0, 0.0, 1.0])
    z_bar = 0.7 * anchor_depth(spec)
    bar_center = center + z_bar * axis_world
    radius = max(
        (p.radius if isinstance(p, Sphere) else 0.5)
        for p in spec.primitives
        if p.tag == OBJECT
    )
    half_span = radius * z_bar / anchor_depth(spec)
    xs = np.linspace(-half_span, half_span, count + 2)[1:-1]
    prims = list(spec.primitives)
    for x in xs:
        prims.append(
            Box(
                bmin=(bar_center[0] + x - thickness / 2, bar_center[1] - 2 * half_span, bar_center[2] - thickness / 2),
                bmax=(bar_center[0] + x + thickness / 2, bar_center[1] + 2 * half_span, bar_center[2] + thickness / 2),
                tag=BACKGROUND,
            )
        )
    return replace(spec, primitives=tuple(prims))


def _swap_background(spec: SceneSpec, shift: float) -> SceneSpec:
    prims = []
    for prim in spec.primitives:
        if prim.tag == BACKGROUND and isinstance(prim, Plane):
            prims.append(replace(prim, offset=prim.offset + shift))
        else:
            prims.append(prim)
    return replace(spec, primitives=tuple(prims))


def apply_perturbation(spec: SceneSpec, kind: PerturbationKind, params: dict) -> tuple[SceneSpec, PerturbationMeta]:
    """Build the perturbed spec and the metadata the evaluation needs back.

    Material and lighting changes leave geometry untouched, so their
    fixtures re-render the identical spec; the remaining content
    perturbations move, deform, occlude, or re-background the primitives
    with no claim of matching any particular benchmark's scene content.
    """
    if kind is PerturbationKind.CAM_ROLL:
        angle = float(params["angle"])
        return perturb_roll(spec, angle), PerturbationMeta(kind, roll_angle=angle)
    if kind is PerturbationKind.CAM_PAN_TILT:
        return (
            perturb_pan_tilt(spec, float(params.get("pan", 0.0)), float(params.get("tilt", 0.0))),
            PerturbationMeta(kind),
        )
    if kind is PerturbationKind.CAM_DOLLY_ZOOM:
        ratio = float(params["focal_ratio"])
        return perturb_dolly_zoom(spec, ratio), PerturbationMeta(kind, focal_ratio=ratio)
    if kind is PerturbationKind.OBJ_RESIZING:
        s = float(params["scale"])
        return perturb_resize_object(spec, s), PerturbationMeta(kind, resize_scale=s)
    if kind in (
        PerturbationKind.LIGHTING,
        PerturbationKind.OBJ_MATERIAL_SWAP,
        PerturbationKind.SCENE_MATERIAL_SWAP,
    ):
        return spec, PerturbationMeta(kind)
    if kind is PerturbationKind.OBJ_TRANSLATION:
        return _translate_object(spec, params.get("offset", (0.1, 0.0, 0.0))), PerturbationMeta(kind)
    if kind is PerturbationKind.OBJ_ROTATION:
        return _rotate_object(spec, float(params.get("angle", 0.2))), PerturbationMeta(kind)
    if kind is PerturbationKind.NONRIGID_DEFORM:
        return _deform_object(spec, float(params.get("radius_scale", 1.1))), PerturbationMeta(kind)
    if kind is PerturbationKind.OBJ_OCCLUSION:
        return (
            _occlude_object(spec, int(params.get("count", 3)), float(params.get("thickness", 0.05))),
            PerturbationMeta(kind),
        )
    if kind is PerturbationKind.OOD_BACKGROUND_SWAP:
        return _swap_background(spec, float(params.get("shift", 1.0))), PerturbationMeta(kind)
    raise ValueError(f"unsupported perturbation {kind}")


# ---------------------------------------------------------------------------
# Fixture benchmark writer


@dataclass(frozen=True)
class PseudoPrediction:
    """Affine transform plus optional noise applied to ground truth.

    Depth-output models get ``scale*gt + shift``; disparity models get
    ``scale/gt + shift``. Noise is pixel-independent multiplicative
    log-normal (keeps values positive). Pixels without ground truth
    (infinite background) predict ``far_value`` before the transform.
    """

    scale: float = 1.0
    shift: float = 0.0
    noise: float = 0.0
    far_value: float = 1000.0


def synthesize_prediction(
    gt: DepthMap, model: ModelEntry, pseudo: PseudoPrediction, rng: np.random.Generator
) -> DepthMap:
    base = np.where(gt.valid, gt.values, pseudo.far_value)
    if model.output_kind is ValueKind.AFFINE_DISPARITY:
        base = 1.0 / base
    out = pseudo.scale * base + pseudo.shift
    if pseudo.noise > 0:
        out = out * rng.lognormal(mean=0.0, sigma=pseudo.noise, size=out.shape)
    return DepthMap(out, model.output_kind)


def _camera_dict(cam: CameraModel) -> dict:
    return {
        "fx": cam.fx,
        "fy": cam.fy,
        "cx": cam.cx,
        "cy": cam.cy,
        "rotation": cam.rotation.tolist(),
        "translation": cam.translation.tolist(),
    }


def _meta_dict(meta: PerturbationMeta) -> dict:
    out = {"type": meta.ptype.value}
    for key in ("roll_angle", "focal_ratio", "resize_scale"):
        value = getattr(meta, key)
        if value is not None:
            out[key] = value
    return out


def make_fixture_group(
    spec: SceneSpec,
    plan: list,
    out_dir,
    models: Optional[list] = None,
    group_id: str = "g0",
    category: str = "desk",
) -> tuple[SceneGroup, dict]:
    """Render base + planned variants and write a benchmark group to disk.

    ``plan`` holds ``(PerturbationKind, params)`` pairs; ``models`` holds
    ``(ModelEntry, PseudoPrediction)`` pairs for optional pseudo-prediction
    files that exercise the full pipeline. Returns the in-memory group and
    its manifest fragment (paths relative to ``out_dir``).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    models = models or []

    scenes = [(spec, None)]
    for kind, params in plan:
        kind = PerturbationKind(kind)
        scenes.append(apply_perturbation(spec, kind, params))

    records, record_dicts = [], []
    for index, (scene, meta) in enumerate(scenes):
        stem = f"{group_id}_base" if meta is None else f"{group_id}_v{index}"
        gt, obj_mask, _ = render_depth(scene)
        gt_name = f"{stem}_gt.pdepth"
        mask_name = f"{stem}_objmask.pdepth"
        depthio.write_depth_raster(gt, out_dir / gt_name)
        depthio.write_mask(obj_mask, out_dir / mask_name)
        predictions, pred_dict = {}, {}
        for model_index, (model, pseudo) in enumerate(models):
            seq = np.random.SeedSequence(
                entropy=spec.rng_seed, spawn_key=(index, model_index)
            )
            pred = synthesize_prediction(gt, model, pseudo, np.random.default_rng(seq))
            pred_name = f"{stem}_pred_{model.name}.pdepth"
            depthio.write_depth_raster(pred, out_dir / pred_name)
            predictions[model.name] = out_dir / pred_name
            pred_dict[model.name] = pred_name
        record = SceneRecord(
            gt=out_dir / gt_name,
            object_mask=out_dir / mask_name,
            camera=scene.camera,
            predictions=predictions,
            perturbation=meta,
        )
        records.append(record)
        record_dicts.append(
            {
                "gt": gt_name,
                "object_mask": mask_name,
                "camera": _camera_dict(scene.camera),
                "predictions": pred_dict,
                **({"perturbation": _meta_dict(meta)} if meta is not None else {}),
            }
        )

    group = SceneGroup(
        group_id=group_id, category=category, base=records[0], variants=tuple(records[1:])
    )
    fragment = {
        "group_id": group_id,
        "category": category,
        "base": record_dicts[0],
        "variants": record_dicts[1:],
    }
    return group, fragment


# ---------------------------------------------------------------------------
# Synth-spec JSON (consumed by the CLI's synth command)


def _parse_primitive(obj: dict) -> object:
    kind = obj.get("type")
    tag = obj.get("tag", OBJECT)
    if tag not in (OBJECT, BACKGROUND):
        raise ValueError(f"primitive tag must be object or background, got {tag!r}")
    if kind == "sphere":
        return Sphere(center=tuple(obj["center"]), radius=float(obj["radius"]), tag=tag)
    if kind == "box":
        return Box(bmin=tuple(obj["min"]), bmax=tuple(obj["max"]), tag=tag)
    if kind == "plane":
        return Plane(normal=tuple(obj["normal"]), offset=float(obj["offset"]), tag=tag)
    raise ValueError(f"unknown primitive type {kind!r}")


def load_synth_spec(path, seed_override: Optional[int] = None) -> tuple[list, list]:
    """Parse a synth-spec JSON file.

    Returns ``(group_plans, models)`` where each group plan is
    ``(group_id, category, SceneSpec, plan)`` and each model is
    ``(ModelEntry, PseudoPrediction)``.
    """
    doc = json.loads(Path(path).read_text())
    seed = int(doc.get("seed", 0)) if seed_override is None else int(seed_override)
    image = doc["image"]
    camera = CameraModel(
        fx=float(image["fx"]),
        fy=float(image["fy"]),
        cx=float(image["cx"]),
        cy=float(image["cy"]),
    )
    models = []
    for entry in doc.get("models", []):
        model = ModelEntry(name=entry["name"], output_kind=ValueKind(entry["output_kind"]))
        pseudo_raw = entry.get("pseudo", {})
        models.append((model, PseudoPrediction(**pseudo_raw)))
    group_plans = []
    for gobj in doc["groups"]:
        spec = SceneSpec(
            primitives=tuple(_parse_primitive(p) for p in gobj["primitives"]),
            camera=camera,
            width=int(image["width"]),
            height=int(image["height"]),
            rng_seed=seed,
        )
        # A group holds one perturbation type; a scene listing several types
        # fans out into one group per type, in first-appearance order.
        by_type: dict = {}
        for pobj in gobj.get("perturbations", []):
            kind = PerturbationKind(pobj["type"])
            params = {k: v for k, v in pobj.items() if k != "type"}
            by_type.setdefault(kind, []).append((kind, params))
        base_id = gobj["group_id"]
        category = gobj.get("category", "desk")
        for kind, plan in by_type.items():
            group_id = base_id if len(by_type) == 1 else f"{base_id}-{kind.value}"
            group_plans.append((group_id, category, spec, plan))
    return group_plans, models


def example_synth_spec(seed: int = 7) -> dict:
    """A small ready-to-run synth spec: sphere object over a ground plane."""
    return {
        "seed": seed,
        "image": {"width": 96, "height": 96, "fx": 96.0, "fy": 96.0, "cx": 48.0, "cy": 48.0},
        "models": [
            {"name": "exact", "output_kind": "metric-depth",
             "pseudo": {"scale": 1.0, "shift": 0.0, "noise": 0.0}},
            {"name": "affine", "output_kind": "affine-depth",
             "pseudo": {"scale": 1.3, "shift": 0.2, "noise": 0.0}},
            {"name": "noisy-disparity", "output_kind": "affine-disparity",
             "pseudo": {"scale": 0.8, "shift": 0.05, "noise": 0.01}},
        ],
        "groups": [
            {
                "group_id": "sphere-desk",
                "category": "desk",
                "primitives": [
                    {"type": "sphere", "center": [0.0, 0.0, 4.0], "radius": 1.0, "tag": "object"},
                    {"type": "plane", "normal": [0.0, -1.0, 0.0], "offset": -1.8,
                     "tag": "background"},
                ],
                "perturbations": [
                    {"type": "cam_roll", "angle": 0.3},
                    {"type": "lighting"},
                    {"type": "obj_resizing", "scale": 1.5},
                    {"type": "cam_dolly_zoom", "focal_ratio": 2.0},
                    {"type": "obj_translation", "offset": [0.2, 0.0, 0.0]},
                ],
            }
        ],
    }
