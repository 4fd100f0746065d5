"""Data model, raster file formats, manifest loading, and mask morphology.

Two raster formats are supported:

* PDEPTH01 — the native exchange format. Layout: bytes 0-7 ASCII magic
  ``PDEPTH01``; bytes 8-11 width (u32, little-endian); bytes 12-15 height;
  byte 16 a kind code (0 = depth, 1 = disparity, 2 = mask-u8); then the
  row-major payload (f32 little-endian for codes 0-1, one byte per pixel
  for code 2).
* PFM — grayscale ``Pf`` portable float maps, negative scale line meaning
  little-endian, scanlines stored bottom-to-top. Accepted for interchange.

Values are promoted to float64 in memory; files store float32. Reductions
over ~1M pixels need the extra precision, file size does not.
"""

from __future__ import annotations

import enum
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import ndimage

from .errors import ManifestError, RasterFormatError

_MAGIC = b"PDEPTH01"
_HEADER = struct.Struct("<8sIIB")
_MAX_PIXELS = 1 << 26  # bounds guard against corrupt headers


class ValueKind(str, enum.Enum):
    """What the per-pixel floats mean."""

    METRIC_DEPTH = "metric-depth"
    AFFINE_DEPTH = "affine-depth"
    AFFINE_DISPARITY = "affine-disparity"
    SCALE_DEPTH = "scale-depth"
    NORMALIZED_DEPTH = "normalized-depth"

    @property
    def is_depth(self) -> bool:
        return self is not ValueKind.AFFINE_DISPARITY


DEPTH_KINDS = frozenset(k for k in ValueKind if k.is_depth)


@dataclass(frozen=True)
class DepthMap:
    """Single-channel float raster with a validity mask.

    Valid pixels are always finite; for depth kinds they are also strictly
    positive. Validity is re-derived in the constructor so the invariant
    cannot be violated by construction. Arrays are locked read-only.
    """

    values: np.ndarray  # (h, w) float64, row-major
    kind: ValueKind
    valid: np.ndarray = None  # (h, w) bool; None = derive from values

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f"depth raster must be 2-D, got shape {values.shape}")
        usable = np.isfinite(values)
        if self.kind in DEPTH_KINDS:
            usable &= values > 0.0
        valid = usable if self.valid is None else (np.asarray(self.valid, bool) & usable)
        if valid.shape != values.shape:
            raise ValueError("validity mask shape does not match values")
        values.setflags(write=False)
        valid.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def with_kind(self, kind: ValueKind) -> "DepthMap":
        """Same raster re-tagged (e.g. after the manifest names the model)."""
        return DepthMap(self.values, kind, self.valid)


@dataclass(frozen=True)
class Mask:
    """Per-pixel boolean raster gating another raster of the same shape."""

    bits: np.ndarray  # (h, w) bool

    def __post_init__(self):
        bits = np.ascontiguousarray(self.bits, dtype=bool)
        if bits.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {bits.shape}")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    def count(self) -> int:
        return int(self.bits.sum())

    def __and__(self, other: "Mask") -> "Mask":
        return Mask(self.bits & other.bits)

    def __invert__(self) -> "Mask":
        return Mask(~self.bits)


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera: intrinsics in pixels plus a world-to-camera pose.

    A world point X maps to camera coordinates ``R @ X + t``; pixel
    coordinates are ``(fx * x/z + cx, fy * y/z + cy)``. Image points use
    the continuous convention where pixel (row i, col j) is centered at
    (j + 0.5, i + 0.5).
    """

    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray = None  # (3, 3) orthonormal, det +1
    translation: np.ndarray = None  # (3,) meters

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        r = np.eye(3) if self.rotation is None else np.asarray(self.rotation, float)
        t = np.zeros(3) if self.translation is None else np.asarray(self.translation, float)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValueError("rotation must be 3x3 and translation length 3")
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-9):
            raise ValueError("rotation is not orthonormal within 1e-9")
        if np.linalg.det(r) < 0:
            raise ValueError("rotation determinant must be +1")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    def center(self) -> np.ndarray:
        """Camera center in world coordinates: -R^T @ t."""
        return -(self.rotation.T @ self.translation)


class PerturbationKind(str, enum.Enum):
    CAM_DOLLY_ZOOM = "cam_dolly_zoom"
    CAM_ROLL = "cam_roll"
    CAM_PAN_TILT = "cam_pan_tilt"
    OBJ_MATERIAL_SWAP = "obj_material_swap"
    SCENE_MATERIAL_SWAP = "scene_material_swap"
    LIGHTING = "lighting"
    OBJ_ROTATION = "obj_rotation"
    OBJ_RESIZING = "obj_resizing"
    OBJ_TRANSLATION = "obj_translation"
    OBJ_OCCLUSION = "obj_occlusion"
    NONRIGID_DEFORM = "nonrigid_deform"
    OOD_BACKGROUND_SWAP = "ood_background_swap"


# Perturbations that leave the object's ground-truth depth image unchanged
# (possibly modulo a rigid image transform or a depth rescale) and are
# therefore usable for self-consistency scoring.
SELF_CONSISTENCY_ELIGIBLE = frozenset(
    {
        PerturbationKind.CAM_ROLL,
        PerturbationKind.OBJ_MATERIAL_SWAP,
        PerturbationKind.SCENE_MATERIAL_SWAP,
        PerturbationKind.LIGHTING,
        PerturbationKind.OBJ_RESIZING,
    }
)

# Perturbations that alter the object's depth image beyond a rigid
# in-plane transform (so only accuracy statistics apply).
GT_OBJECT_DEPTH_CHANGED = frozenset(
    {
        PerturbationKind.CAM_DOLLY_ZOOM,
        PerturbationKind.CAM_PAN_TILT,
        PerturbationKind.OBJ_ROTATION,
        PerturbationKind.OBJ_TRANSLATION,
        PerturbationKind.OBJ_OCCLUSION,
        PerturbationKind.NONRIGID_DEFORM,
    }
)


@dataclass(frozen=True)
class PerturbationMeta:
    """Perturbation tag plus the parameters the evaluation needs back."""

    ptype: PerturbationKind
    roll_angle: Optional[float] = None  # radians, camera roll only
    focal_ratio: Optional[float] = None  # f'/f, dolly zoom only
    resize_scale: Optional[float] = None  # object resizing only

    def __post_init__(self):
        need = {
            PerturbationKind.CAM_ROLL: ("roll_angle", self.roll_angle),
            PerturbationKind.CAM_DOLLY_ZOOM: ("focal_ratio", self.focal_ratio),
            PerturbationKind.OBJ_RESIZING: ("resize_scale", self.resize_scale),
        }
        if self.ptype in need:
            name, value = need[self.ptype]
            if value is None or not math.isfinite(value):
                raise ValueError(f"{self.ptype.value} requires finite {name}")

    @property
    def self_consistency_eligible(self) -> bool:
        return self.ptype in SELF_CONSISTENCY_ELIGIBLE

    @property
    def se2_compensation_required(self) -> bool:
        return self.ptype is PerturbationKind.CAM_ROLL

    @property
    def gt_object_depth_changed(self) -> bool:
        return self.ptype in GT_OBJECT_DEPTH_CHANGED


CATEGORIES = ("chair", "desk", "cabinet", "fish", "cactus")


@dataclass(frozen=True)
class SceneRecord:
    """File-level description of one rendered scene (base or variant)."""

    gt: Path
    object_mask: Path
    background_mask: Optional[Path] = None
    background_threshold_m: Optional[float] = None
    camera: Optional[CameraModel] = None
    predictions: dict = field(default_factory=dict)  # model name -> Path
    perturbation: Optional[PerturbationMeta] = None  # None for the base


@dataclass(frozen=True)
class SceneGroup:
    """One base scene plus its perturbed variants (all one perturbation type)."""

    group_id: str
    category: str
    base: SceneRecord
    variants: tuple  # tuple[SceneRecord, ...], each with perturbation set

    def __post_init__(self):
        if len(self.variants) < 1:
            raise ValueError(f"group {self.group_id}: needs at least one variant")
        kinds = set()
        for i, v in enumerate(self.variants):
            if v.perturbation is None:
                raise ValueError(f"group {self.group_id}: variant {i} lacks perturbation")
            kinds.add(v.perturbation.ptype)
        if len(kinds) > 1:
            raise ValueError(
                f"group {self.group_id}: variants mix perturbation types "
                f"{sorted(k.value for k in kinds)}"
            )


@dataclass(frozen=True)
class ModelEntry:
    name: str
    output_kind: ValueKind
    flops: Optional[float] = None  # teraflops, report metadata only


# ---------------------------------------------------------------------------
# Raster I/O


def write_depth_raster(depth_map: DepthMap, path, fmt: str = "pdepth") -> None:
    """Write a depth/disparity raster.

    Valid pixels round-trip bit-exactly at float32 precision. Pixels that
    were explicitly invalidated but hold a finite value are stored as NaN so
    the validity mask survives the round trip; non-finite values (e.g. +inf
    background) are stored as-is.
    """
    path = Path(path)
    payload = np.array(depth_map.values, dtype=np.float64)
    finite = np.isfinite(payload)
    payload[~depth_map.valid & finite] = np.nan
    data32 = payload.astype("<f4")
    if fmt == "pdepth":
        code = 0 if depth_map.kind.is_depth else 1
        header = _HEADER.pack(_MAGIC, depth_map.width, depth_map.height, code)
        path.write_bytes(header + data32.tobytes())
    elif fmt == "pfm":
        header = f"Pf\n{depth_map.width} {depth_map.height}\n-1.0\n".encode("ascii")
        path.write_bytes(header + data32[::-1].tobytes())  # bottom-to-top rows
    else:
        raise ValueError(f"unknown raster format {fmt!r}")


def read_depth_raster(path, kind: Optional[ValueKind] = None) -> DepthMap:
    """Read a PDEPTH01 or PFM raster into a DepthMap.

    ``kind`` refines the header's depth/disparity code (e.g. to tag a depth
    file as affine-depth per the manifest); it must agree with the header.
    PFM carries no kind, so ``kind`` defaults to metric depth there.
    """
    path = Path(path)
    if kind is ValueKind.NORMALIZED_DEPTH:
        raise RasterFormatError(f"{path}: normalized depth is never read from disk")
    blob = path.read_bytes()
    if blob[:8] == _MAGIC:
        return _read_pdepth(blob, kind, path)
    if blob[:2] == b"Pf":
        return _read_pfm(blob, kind or ValueKind.METRIC_DEPTH, path)
    if blob[:2] == b"PF":
        raise RasterFormatError(f"{path}: color PFM not supported, use grayscale 'Pf'")
    raise RasterFormatError(f"{path}: unrecognized raster magic {blob[:8]!r}")


def _check_dims(width: int, height: int, path: Path) -> None:
    if width < 1 or height < 1 or width * height > _MAX_PIXELS:
        raise RasterFormatError(f"{path}: implausible dimensions {width}x{height}")


def _read_pdepth(blob: bytes, kind: Optional[ValueKind], path: Path) -> DepthMap:
    if len(blob) < _HEADER.size:
        raise RasterFormatError(f"{path}: truncated header")
    _, width, height, code = _HEADER.unpack_from(blob)
    _check_dims(width, height, path)
    if code == 2:
        raise RasterFormatError(f"{path}: raster holds a mask, use read_mask")
    if code not in (0, 1):
        raise RasterFormatError(f"{path}: unknown kind code {code}")
    expected = _HEADER.size + 4 * width * height
    if len(blob) != expected:
        raise RasterFormatError(
            f"{path}: payload is {len(blob) - _HEADER.size} bytes, "
            f"header implies {expected - _HEADER.size}"
        )
    if kind is None:
        kind = ValueKind.METRIC_DEPTH if code == 0 else ValueKind.AFFINE_DISPARITY
    elif kind.is_depth != (code == 0):
        raise RasterFormatError(f"{path}: kind {kind.value} conflicts with header code {code}")
    values = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).reshape(height, width)
    return DepthMap(values.astype(np.float64), kind)


def _read_pfm(blob: bytes, kind: ValueKind, path: Path) -> DepthMap:
    # Header: three whitespace-terminated tokens ("Pf", "W H", scale).
    tokens, pos = [], 0
    while len(tokens) < 4 and pos < len(blob):
        end = pos
        while end < len(blob) and blob[end] not in b" \t\r\n":
            end += 1
        if end > pos:
            tokens.append(blob[pos:end])
        pos = end + 1
    if len(tokens) < 4:
        raise RasterFormatError(f"{path}: truncated PFM header")
    try:
        width, height = int(tokens[1]), int(tokens[2])
        scale = float(tokens[3])
    except ValueError as exc:
        raise RasterFormatError(f"{path}: bad PFM header: {exc}") from None
    _check_dims(width, height, path)
    expected = 4 * width * height
    data = blob[pos : pos + expected]
    if len(data) != expected:
        raise RasterFormatError(f"{path}: PFM payload is short ({len(data)}/{expected} bytes)")
    dtype = "<f4" if scale < 0 else ">f4"
    values = np.frombuffer(data, dtype=dtype).reshape(height, width)[::-1]
    return DepthMap(values.astype(np.float64), kind)


def write_mask(mask: Mask, path) -> None:
    header = _HEADER.pack(_MAGIC, mask.width, mask.height, 2)
    Path(path).write_bytes(header + mask.bits.astype(np.uint8).tobytes())


def read_mask(path) -> Mask:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:8] != _MAGIC:
        raise RasterFormatError(f"{path}: unrecognized mask magic {blob[:8]!r}")
    _, width, height, code = _HEADER.unpack_from(blob)
    if code != 2:
        raise RasterFormatError(f"{path}: expected mask kind code 2, got {code}")
    _check_dims(width, height, path)
    expected = _HEADER.size + width * height
    if len(blob) != expected:
        raise RasterFormatError(f"{path}: mask payload truncated")
    bits = np.frombuffer(blob, dtype=np.uint8, offset=_HEADER.size)
    if not np.all((bits == 0) | (bits == 1)):
        raise RasterFormatError(f"{path}: mask bytes must be 0 or 1")
    return Mask(bits.reshape(height, width).astype(bool))


# ---------------------------------------------------------------------------
# Mask morphology and background derivation


def erode_mask(mask: Mask, radius: int) -> Mask:
    """Erode with an 8-connected square structuring element.

    A pixel survives iff every pixel within Chebyshev distance ``radius``
    is set; out-of-bounds neighbors count as unset, so the mask also
    shrinks at the image border. Radius 0 is the identity.
    """
    if radius < 0:
        raise ValueError("erosion radius must be non-negative")
    if radius == 0:
        return Mask(mask.bits.copy())
    eroded = ndimage.binary_erosion(
        mask.bits, structure=np.ones((3, 3), bool), iterations=radius, border_value=0
    )
    return Mask(eroded)


def background_mask(gt: DepthMap, threshold: Optional[float] = None) -> Mask:
    """Mark background pixels of a ground-truth raster.

    Background is anything invalid or at infinite distance; when a finite
    ``threshold`` is given (per-scene choice for murky scenes), pixels
    deeper than it also count as background.
    """
    bits = ~gt.valid
    if threshold is not None:
        if not threshold > 0:
            raise ValueError("background threshold must be positive")
        bits = bits | (gt.valid & (gt.values > threshold))
    return Mask(bits)


# ---------------------------------------------------------------------------
# Manifest


def _expect(condition: bool, location: str, message: str) -> None:
    if not condition:
        raise ManifestError(location, message)


def _parse_camera(obj: dict, loc: str) -> CameraModel:
    _expect(isinstance(obj, dict), loc, "camera must be an object")
    for key in ("fx", "fy", "cx", "cy"):
        _expect(isinstance(obj.get(key), (int, float)), f"{loc}.{key}", "must be a number")
    rotation = obj.get("rotation")
    translation = obj.get("translation")
    try:
        return CameraModel(
            fx=float(obj["fx"]),
            fy=float(obj["fy"]),
            cx=float(obj["cx"]),
            cy=float(obj["cy"]),
            rotation=None if rotation is None else np.asarray(rotation, float),
            translation=None if translation is None else np.asarray(translation, float),
        )
    except ValueError as exc:
        raise ManifestError(loc, str(exc)) from None


def _parse_perturbation(obj: dict, loc: str) -> PerturbationMeta:
    _expect(isinstance(obj, dict), loc, "perturbation must be an object")
    ptype_raw = obj.get("type")
    try:
        ptype = PerturbationKind(ptype_raw)
    except ValueError:
        known = ", ".join(k.value for k in PerturbationKind)
        raise ManifestError(f"{loc}.type", f"unknown perturbation {ptype_raw!r} (known: {known})")
    kwargs = {}
    for key in ("roll_angle", "focal_ratio", "resize_scale"):
        if key in obj:
            _expect(isinstance(obj[key], (int, float)), f"{loc}.{key}", "must be a number")
            kwargs[key] = float(obj[key])
    try:
        return PerturbationMeta(ptype, **kwargs)
    except ValueError as exc:
        raise ManifestError(loc, str(exc)) from None


def _parse_record(obj: dict, loc: str, root: Path, model_names: set,
                  perturbation: Optional[PerturbationMeta]) -> SceneRecord:
    _expect(isinstance(obj, dict), loc, "record must be an object")
    for key in ("gt", "object_mask"):
        _expect(isinstance(obj.get(key), str), f"{loc}.{key}", "required path string")
    _expect(
        not (obj.get("background_mask") and obj.get("background_threshold_m")),
        loc,
        "give background_mask or background_threshold_m, not both",
    )
    threshold = obj.get("background_threshold_m")
    if threshold is not None:
        _expect(
            isinstance(threshold, (int, float)) and threshold > 0,
            f"{loc}.background_threshold_m",
            "must be a positive number",
        )
    predictions = obj.get("predictions", {})
    _expect(isinstance(predictions, dict), f"{loc}.predictions", "must map model name to path")
    for name, pred_path in predictions.items():
        _expect(name in model_names, f"{loc}.predictions.{name}", "model not declared in models")
        _expect(isinstance(pred_path, str), f"{loc}.predictions.{name}", "must be a path string")
    camera = obj.get("camera")
    return SceneRecord(
        gt=root / obj["gt"],
        object_mask=root / obj["object_mask"],
        background_mask=(root / obj["background_mask"]) if obj.get("background_mask") else None,
        background_threshold_m=None if threshold is None else float(threshold),
        camera=None if camera is None else _parse_camera(camera, f"{loc}.camera"),
        predictions={n: root / p for n, p in predictions.items()},
        perturbation=perturbation,
    )


def load_manifest(path) -> tuple[list, list]:
    """Load and validate a benchmark manifest.

    Returns ``(groups, models)`` in file order; relative paths are resolved
    against the manifest's directory. Raises ManifestError with a dotted
    location on the first violation.
    """
    path = Path(path)
    root = path.parent
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError("<document>", f"not valid JSON: {exc}") from None
    _expect(isinstance(doc, dict), "<document>", "top level must be an object")

    models_raw = doc.get("models")
    _expect(isinstance(models_raw, list) and models_raw, "models", "non-empty list required")
    models, seen = [], set()
    for i, entry in enumerate(models_raw):
        loc = f"models[{i}]"
        _expect(isinstance(entry, dict), loc, "must be an object")
        name = entry.get("name")
        _expect(isinstance(name, str) and name, f"{loc}.name", "required string")
        _expect(name not in seen, f"{loc}.name", f"duplicate model {name!r}")
        seen.add(name)
        try:
            kind = ValueKind(entry.get("output_kind"))
        except ValueError:
            raise ManifestError(f"{loc}.output_kind",
                                f"unknown output_kind {entry.get('output_kind')!r}")
        _expect(kind is not ValueKind.NORMALIZED_DEPTH, f"{loc}.output_kind",
                "normalized-depth is internal and never read from disk")
        flops = entry.get("flops")
        if flops is not None:
            _expect(isinstance(flops, (int, float)) and flops > 0, f"{loc}.flops",
                    "must be a positive number")
        models.append(ModelEntry(name=name, output_kind=kind,
                                 flops=None if flops is None else float(flops)))
    model_names = {m.name for m in models}

    groups_raw = doc.get("groups")
    _expect(isinstance(groups_raw, list) and groups_raw, "groups", "non-empty list required")
    groups, seen_ids = [], set()
    for gi, gobj in enumerate(groups_raw):
        loc = f"groups[{gi}]"
        _expect(isinstance(gobj, dict), loc, "must be an object")
        gid = gobj.get("group_id")
        _expect(isinstance(gid, str) and gid, f"{loc}.group_id", "required string")
        _expect(gid not in seen_ids, f"{loc}.group_id", f"duplicate group_id {gid!r}")
        seen_ids.add(gid)
        category = gobj.get("category")
        _expect(category in CATEGORIES, f"{loc}.category",
                f"must be one of {', '.join(CATEGORIES)}")
        _expect(isinstance(gobj.get("base"), dict), f"{loc}.base", "required record")
        base = _parse_record(gobj["base"], f"{loc}.base", root, model_names, None)
        variants_raw = gobj.get("variants")
        _expect(isinstance(variants_raw, list) and variants_raw, f"{loc}.variants",
                "non-empty list required")
        variants = []
        for vi, vobj in enumerate(variants_raw):
            vloc = f"{loc}.variants[{vi}]"
            _expect(isinstance(vobj, dict), vloc, "must be an object")
            _expect("perturbation" in vobj, f"{vloc}.perturbation", "required")
            meta = _parse_perturbation(vobj["perturbation"], f"{vloc}.perturbation")
            variants.append(_parse_record(vobj, vloc, root, model_names, meta))
        try:
            groups.append(SceneGroup(group_id=gid, category=category, base=base,
                                     variants=tuple(variants)))
        except ValueError as exc:
            raise ManifestError(f"{loc}.variants", str(exc)) from None
    return groups, models
