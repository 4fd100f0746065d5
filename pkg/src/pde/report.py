"""Aggregation across groups and models, rankings, sweeps, and table I/O.

Result tables are flat collections of cells keyed by
(perturbation, model, metric, statistic), with optional category and
erosion-radius axes. The ``average`` perturbation row is the unweighted
mean over perturbation types, matching how per-type cells are unweighted
means over scene groups. CSV output prints two decimals (ingest is
round-trip safe to that precision); JSON keeps full precision.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .depthio import PerturbationKind
from .errors import GroupEvalError, RankingError, TableError
from .metrics import METRICS_BY_KEY

AVERAGE = "average"
STATISTICS = ("mu", "sigma", "kappa", "kappa_abs")
CSV_COLUMNS = ("perturbation", "model", "metric", "statistic", "value", "n_effective")
OPTIONAL_COLUMNS = ("category", "erosion_radius")

REPORTING_SCALES = {
    "absrel": "percent",
    "log10": "decades",
    "rmse": "centimeters",
    "delta1": "percent",
    "delta2": "percent",
    "delta3": "percent",
    "delta0125": "percent",
}

_PTYPE_ORDER = {kind.value: i for i, kind in enumerate(PerturbationKind)}
_PTYPE_ORDER[AVERAGE] = len(_PTYPE_ORDER)


@dataclass(frozen=True)
class TableCell:
    perturbation: str
    model: str
    metric: str
    statistic: str
    value: Optional[float]  # None encodes an inapplicable cell (e.g. kappa)
    n_effective: Optional[int] = None
    category: Optional[str] = None
    erosion_radius: Optional[int] = None

    @property
    def axis(self) -> tuple:
        return (
            self.perturbation,
            self.model,
            self.metric,
            self.statistic,
            self.category,
            self.erosion_radius,
        )


def _sort_key(cell: TableCell):
    return (
        cell.erosion_radius if cell.erosion_radius is not None else -1,
        _PTYPE_ORDER.get(cell.perturbation, len(_PTYPE_ORDER) + 1),
        cell.perturbation,
        cell.model,
        cell.metric,
        STATISTICS.index(cell.statistic) if cell.statistic in STATISTICS else len(STATISTICS),
        cell.category or "",
    )


@dataclass(frozen=True)
class ResultTable:
    cells: tuple
    source: str = "computed"  # or "external"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        ordered = tuple(sorted(self.cells, key=_sort_key))
        seen = set()
        for cell in ordered:
            if cell.axis in seen:
                raise TableError(f"duplicate table cell for axes {cell.axis}")
            seen.add(cell.axis)
        object.__setattr__(self, "cells", ordered)

    def get(self, perturbation, model, metric, statistic,
            category=None, erosion_radius=None) -> Optional[TableCell]:
        axis = (perturbation, model, metric, statistic, category, erosion_radius)
        for cell in self.cells:
            if cell.axis == axis:
                return cell
        return None

    def models(self) -> list:
        return sorted({c.model for c in self.cells})


# ---------------------------------------------------------------------------
# Aggregation


def _mean(values) -> float:
    return float(np.mean(np.asarray(values, dtype=np.float64)))


def _cells_for_statistic(rows, statistic: str, categories, category: Optional[str]) -> list:
    """Per-perturbation cells plus the average row for one statistic."""

    def stat_of(row):
        return {
            "mu": row.mu,
            "sigma": row.sigma,
            "kappa": row.kappa,
            "kappa_abs": row.kappa_abs,
        }[statistic]

    def weight_of(row):
        return row.n_kappa if statistic in ("kappa", "kappa_abs") else row.n_variants

    selected = [
        r for r in rows if category is None or categories.get(r.group_id) == category
    ]
    cells = []
    combos = sorted({(r.perturbation, r.model, r.metric) for r in selected})
    by_model_metric: dict = {}
    for ptype, model, metric in combos:
        here = [r for r in selected if (r.perturbation, r.model, r.metric) == (ptype, model, metric)]
        values = [stat_of(r) for r in here if stat_of(r) is not None]
        if values:
            value = _mean(values)
            n_eff = sum(weight_of(r) or 0 for r in here if stat_of(r) is not None)
        else:
            value, n_eff = None, None
        cells.append(
            TableCell(ptype, model, metric, statistic, value, n_eff, category=category)
        )
        by_model_metric.setdefault((model, metric), []).append(cells[-1])
    for (model, metric), per_type in sorted(by_model_metric.items()):
        present = [c for c in per_type if c.value is not None]
        if statistic in ("kappa", "kappa_abs") and not present:
            value, n_eff = None, None
        else:
            value = _mean([c.value for c in present]) if present else None
            n_eff = sum(c.n_effective or 0 for c in present) if present else None
        cells.append(
            TableCell(AVERAGE, model, metric, statistic, value, n_eff, category=category)
        )
    return cells


def aggregate(rows, categories: Optional[dict] = None, by_category: bool = False) -> ResultTable:
    """Reduce robustness rows to a result table.

    Within each (perturbation, model, metric, statistic) cell the value is
    the unweighted mean over scene groups; the ``average`` row is the
    unweighted mean over perturbation types. ``categories`` maps group_id
    to its object category and enables the optional per-category axis.
    """
    rows = list(rows)
    if not rows:
        raise TableError("no robustness rows to aggregate")
    categories = categories or {}
    cells = []
    for statistic in STATISTICS:
        cells.extend(_cells_for_statistic(rows, statistic, categories, category=None))
        if by_category:
            for category in sorted(set(categories.values())):
                cells.extend(_cells_for_statistic(rows, statistic, categories, category))
    return ResultTable(cells=tuple(cells), source="computed",
                       metadata={"scales": dict(REPORTING_SCALES)})


# ---------------------------------------------------------------------------
# Ranking


@dataclass(frozen=True)
class RankEntry:
    model: str
    value: float
    tied: bool = False


def rank_models(table: ResultTable, metric: str, statistic: str,
                perturbation: str = AVERAGE, category=None, erosion_radius=None) -> list:
    """Total order over the table's models for one metric/statistic.

    Lower is better except for the mean of higher-better metrics (the
    delta family). Ties break by model name and are flagged.
    """
    models = table.models()
    values, missing = {}, []
    for model in models:
        cell = table.get(perturbation, model, metric, statistic, category, erosion_radius)
        if cell is None or cell.value is None:
            missing.append(model)
        else:
            values[model] = cell.value
    if missing:
        raise RankingError(
            f"no {metric}/{statistic} cell for models: {', '.join(missing)}"
        )
    kind = METRICS_BY_KEY.get(metric)
    descending = bool(kind and kind.higher_better and statistic == "mu")
    ordered = sorted(values, key=lambda m: (-values[m] if descending else values[m], m))
    counts: dict = {}
    for model in ordered:
        counts[values[model]] = counts.get(values[model], 0) + 1
    return [RankEntry(m, values[m], tied=counts[values[m]] > 1) for m in ordered]


# ---------------------------------------------------------------------------
# Erosion sweep


def erosion_sweep(groups, models, radii, config) -> ResultTable:
    """Re-run the evaluation per erosion radius and tabulate the curves.

    Radii must be non-decreasing. A radius where nothing can be evaluated
    (all masks eroded away) is reported in metadata['skipped_radii'] rather
    than failing the sweep.
    """
    from . import robust  # runtime import keeps module load acyclic

    if list(radii) != sorted(radii):
        raise ValueError("erosion radii must be non-decreasing")
    cells, skipped = [], []
    categories = {g.group_id: g.category for g in groups}
    for radius in radii:
        rows = []
        for model in models:
            for group in groups:
                try:
                    rows.extend(robust.evaluate_group(group, model, config.replace(erosion_radius=radius)))
                except GroupEvalError:
                    continue
        if not rows:
            skipped.append(int(radius))
            continue
        for cell in aggregate(rows, categories).cells:
            cells.append(
                TableCell(
                    cell.perturbation, cell.model, cell.metric, cell.statistic,
                    cell.value, cell.n_effective, erosion_radius=int(radius),
                )
            )
    return ResultTable(
        cells=tuple(cells),
        source="computed",
        metadata={"scales": dict(REPORTING_SCALES), "skipped_radii": skipped},
    )


# ---------------------------------------------------------------------------
# Table I/O


def _format_value(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.2f}"


def emit(table: ResultTable, fmt: str, path) -> None:
    """Write a table as CSV (2-decimal, paper-style) or JSON (full precision)."""
    path = Path(path)
    extra = [
        name for name in OPTIONAL_COLUMNS
        if any(getattr(c, name) is not None for c in table.cells)
    ]
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(list(CSV_COLUMNS) + extra)
            for cell in table.cells:
                row = [
                    cell.perturbation, cell.model, cell.metric, cell.statistic,
                    _format_value(cell.value),
                    "" if cell.n_effective is None else str(cell.n_effective),
                ]
                for name in extra:
                    value = getattr(cell, name)
                    row.append("" if value is None else str(value))
                writer.writerow(row)
    elif fmt == "json":
        doc = {
            "metadata": {"source": table.source, **table.metadata},
            "cells": [
                {
                    "perturbation": c.perturbation,
                    "model": c.model,
                    "metric": c.metric,
                    "statistic": c.statistic,
                    "value": c.value,
                    "n_effective": c.n_effective,
                    **({"category": c.category} if c.category is not None else {}),
                    **({"erosion_radius": c.erosion_radius} if c.erosion_radius is not None else {}),
                }
                for c in table.cells
            ],
        }
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    else:
        raise ValueError(f"unknown table format {fmt!r}")


def _parse_csv(path: Path) -> ResultTable:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TableError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if tuple(header[: len(CSV_COLUMNS)]) != CSV_COLUMNS:
            raise TableError(
                f"{path}:1: header must start with {','.join(CSV_COLUMNS)}"
            )
        extras = header[len(CSV_COLUMNS):]
        unknown = [e for e in extras if e not in OPTIONAL_COLUMNS]
        if unknown:
            raise TableError(f"{path}:1: unknown columns {', '.join(unknown)}")
        cells = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not f.strip() for f in row):
                continue
            if len(row) != len(header):
                raise TableError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                value = float(row[4]) if row[4].strip() else None
                n_eff = int(row[5]) if row[5].strip() else None
                extra = dict(zip(extras, row[len(CSV_COLUMNS):]))
                category = extra.get("category", "").strip() or None
                radius_text = extra.get("erosion_radius", "").strip()
                radius = int(radius_text) if radius_text else None
            except ValueError as exc:
                raise TableError(f"{path}:{lineno}: {exc}") from None
            cells.append(
                TableCell(row[0], row[1], row[2], row[3], value, n_eff,
                          category=category, erosion_radius=radius)
            )
    if not cells:
        raise TableError(f"{path}: no data rows")
    return ResultTable(cells=tuple(cells), source="external")


def _parse_json(path: Path) -> ResultTable:
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise TableError(f"{path}: invalid JSON: {exc}") from None
    raw = doc.get("cells")
    if not isinstance(raw, list) or not raw:
        raise TableError(f"{path}: 'cells' must be a non-empty list")
    cells = []
    for i, obj in enumerate(raw):
        try:
            cells.append(
                TableCell(
                    obj["perturbation"], obj["model"], obj["metric"], obj["statistic"],
                    None if obj.get("value") is None else float(obj["value"]),
                    None if obj.get("n_effective") is None else int(obj["n_effective"]),
                    category=obj.get("category"),
                    erosion_radius=obj.get("erosion_radius"),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise TableError(f"{path}: cells[{i}]: {exc}") from None
    metadata = doc.get("metadata", {})
    metadata.pop("source", None)
    return ResultTable(cells=tuple(cells), source="external", metadata=metadata)


def ingest_external_results(path) -> ResultTable:
    """Load a published results table (CSV or JSON) for ranking/reporting.

    The result is interchangeable with a computed table and flagged
    external.
    """
    path = Path(path)
    if path.suffix.lower() == ".json":
        return _parse_json(path)
    return _parse_csv(path)


def verify_average_consistency(table: ResultTable, tol: float = 0.01) -> list:
    """Cross-check stated average rows against recomputed per-type means.

    Published tables carry rounded per-type values, so small gaps are
    expected; anything beyond ``tol`` is reported, never silently fixed.
    """
    findings = []
    combos = sorted(
        {
            (c.model, c.metric, c.statistic, c.category, c.erosion_radius)
            for c in table.cells
            if c.perturbation == AVERAGE
        }
    )
    for model, metric, statistic, category, radius in combos:
        stated = table.get(AVERAGE, model, metric, statistic, category, radius)
        parts = [
            c.value
            for c in table.cells
            if c.perturbation != AVERAGE
            and (c.model, c.metric, c.statistic, c.category, c.erosion_radius)
            == (model, metric, statistic, category, radius)
            and c.value is not None
        ]
        if stated is None or stated.value is None or not parts:
            continue
        recomputed = _mean(parts)
        if abs(recomputed - stated.value) > tol:
            findings.append(
                f"{model}/{metric}/{statistic}: stated average {stated.value:.4f} "
                f"vs recomputed {recomputed:.4f}"
            )
    return findings
