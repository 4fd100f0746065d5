"""Run a depth model over images and emit harness predictions + fragments.

A model adapter is anything with ``name``, ``output_kind``, and
``predict(image_path) -> 2-D float array``. The adapter may return a map at
its native resolution; the exporter resizes it to the input resolution
(bilinear, the usual model postprocessing) before writing, so every
prediction file matches its image pixel-for-pixel.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rasters


@dataclass(frozen=True)
class ExportJob:
    model_id: str
    images: tuple
    out_dir: Path
    output_kind: str
    device: str = "cpu"  # hint only; stub adapters ignore it

    def __post_init__(self):
        rasters.kind_code(self.output_kind)  # validates early
        object.__setattr__(self, "images", tuple(Path(p) for p in self.images))
        object.__setattr__(self, "out_dir", Path(self.out_dir))


def bilinear_resize(values: np.ndarray, height: int, width: int) -> np.ndarray:
    """Resize by sampling source pixel centers; clamped at the borders."""
    src = np.asarray(values, dtype=np.float64)
    if src.shape == (height, width):
        return src
    sh, sw = src.shape
    ys = (np.arange(height) + 0.5) * sh / height - 0.5
    xs = (np.arange(width) + 0.5) * sw / width - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, sh - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, sw - 1)
    y1 = np.minimum(y0 + 1, sh - 1)
    x1 = np.minimum(x0 + 1, sw - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[:, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, :]
    top = src[np.ix_(y0, x0)] * (1 - wx) + src[np.ix_(y0, x1)] * wx
    bottom = src[np.ix_(y1, x0)] * (1 - wx) + src[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bottom * wy


def export_predictions(job: ExportJob, model) -> dict:
    """Write one prediction raster per image; failures are per-image.

    Returns the manifest fragment: the model entry plus an ordered
    image-to-prediction mapping. The order matches the job's image list, so
    merging pairs outputs with benchmark records positionally.
    """
    job.out_dir.mkdir(parents=True, exist_ok=True)
    outputs, errors = [], []
    for image in job.images:
        try:
            width, height = rasters.image_size(image)
            predicted = np.asarray(model.predict(image), dtype=np.float64)
            if predicted.ndim != 2:
                raise ValueError(f"model returned shape {predicted.shape}")
            resized = bilinear_resize(predicted, height, width)
            out_path = job.out_dir / f"{image.stem}_{job.model_id}.pdepth"
            rasters.write_raster(resized, out_path, job.output_kind)
            outputs.append({"image": str(image), "prediction": str(out_path)})
        except (OSError, ValueError) as exc:
            errors.append({"image": str(image), "error": str(exc)})
    return {
        "model": {"name": job.model_id, "output_kind": job.output_kind},
        "outputs": outputs,
        "errors": errors,
    }


def write_fragment(fragment: dict, path) -> None:
    Path(path).write_text(json.dumps(fragment, indent=2, sort_keys=True) + "\n")


def merge_fragment(manifest_doc: dict, fragment: dict, manifest_dir) -> dict:
    """Attach a fragment's predictions to a benchmark manifest.

    Records are matched positionally: the fragment's outputs must line up
    with the manifest's records in (base, variants...) group order, which
    is how the harness enumerates images in the first place.
    """
    manifest_dir = Path(manifest_dir)
    records = []
    for group in manifest_doc.get("groups", []):
        records.append(group["base"])
        records.extend(group.get("variants", []))
    outputs = fragment.get("outputs", [])
    if len(outputs) != len(records):
        raise ValueError(
            f"fragment has {len(outputs)} outputs but the manifest has "
            f"{len(records)} records"
        )
    merged = json.loads(json.dumps(manifest_doc))  # deep copy
    name = fragment["model"]["name"]
    models = merged.setdefault("models", [])
    if all(m.get("name") != name for m in models):
        models.append(dict(fragment["model"]))
    flat = []
    for group in merged["groups"]:
        flat.append(group["base"])
        flat.extend(group.get("variants", []))
    for record, output in zip(flat, outputs):
        prediction = Path(output["prediction"])
        try:
            rel = prediction.relative_to(manifest_dir)
        except ValueError:
            rel = prediction
        record.setdefault("predictions", {})[name] = str(rel)
    return merged
