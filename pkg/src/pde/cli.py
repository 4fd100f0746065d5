"""Command-line entry points: evaluate, synth, report, erode-sweep, validate.

Standard output stays machine-parseable; progress and diagnostics go to
standard error. Evaluation outputs are deterministic byte-for-byte
regardless of the worker-thread count.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

from . import depthio, geom, report, robust
from .align import ClipRange
from .depthio import PerturbationKind
from .errors import HarnessError, ManifestError
from .metrics import DEFAULT_METRICS, METRICS_BY_KEY, EvalConfig, MaskScope


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _resolve_threads(value: int) -> int:
    if value == 0:
        env = os.environ.get("PDE_THREADS", "")
        if env.strip():
            value = int(env)
    if value <= 0:
        value = os.cpu_count() or 1
    return value


def _add_eval_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--mask", choices=["object", "scene"], default="object",
                        help="evaluation mask scope (default: object)")
    parser.add_argument("--align", choices=["scale-shift", "scale"], default="scale-shift",
                        help="alignment mode (default: scale-shift)")
    parser.add_argument("--erosion", type=int, default=1, metavar="N",
                        help="object-mask erosion radius in pixels (default: 1)")
    parser.add_argument("--no-clip", action="store_true",
                        help="disable the 0.1m..1000m post-alignment clamp")
    parser.add_argument("--metrics", default=None, metavar="A,B",
                        help="comma-separated metric keys (default: all)")
    parser.add_argument("--threads", type=int, default=0, metavar="N",
                        help="worker threads; 0 = auto / PDE_THREADS")
    parser.add_argument("--models", default=None, metavar="A,B",
                        help="restrict evaluation to these models")
    parser.add_argument("--perturbations", default=None, metavar="X,Y",
                        help="restrict evaluation to groups of these perturbation types")


def _config_from_args(args) -> EvalConfig:
    if args.metrics:
        keys = [k.strip() for k in args.metrics.split(",") if k.strip()]
        unknown = [k for k in keys if k not in METRICS_BY_KEY]
        if unknown:
            raise ValueError(f"unknown metrics: {', '.join(unknown)}")
        metrics = tuple(METRICS_BY_KEY[k] for k in keys)
    else:
        metrics = DEFAULT_METRICS
    return EvalConfig(
        mask_scope=MaskScope(args.mask),
        align_mode=args.align,
        erosion_radius=args.erosion,
        clip=ClipRange.disabled() if args.no_clip else ClipRange(),
        metrics=metrics,
    )


def _select(groups, models, args):
    if args.models:
        wanted = {m.strip() for m in args.models.split(",") if m.strip()}
        known = {m.name for m in models}
        missing = wanted - known
        if missing:
            raise ValueError(f"unknown models in --models: {', '.join(sorted(missing))}")
        models = [m for m in models if m.name in wanted]
    if args.perturbations:
        wanted = {p.strip() for p in args.perturbations.split(",") if p.strip()}
        known = {k.value for k in PerturbationKind}
        missing = wanted - known
        if missing:
            raise ValueError(f"unknown perturbations: {', '.join(sorted(missing))}")
        groups = [g for g in groups if g.variants[0].perturbation.ptype.value in wanted]
    return groups, models


def _config_digest(args, config: EvalConfig) -> dict:
    # Thread count deliberately excluded: outputs must not depend on it.
    return {
        "mask_scope": config.mask_scope.value,
        "align_mode": config.align_mode,
        "erosion_radius": config.erosion_radius,
        "clip": config.clip.enabled,
        "metrics": [m.key for m in config.metrics],
        "models": sorted(args.models.split(",")) if args.models else None,
        "perturbations": sorted(args.perturbations.split(",")) if args.perturbations else None,
    }


def _write_metric_rows(rows, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["model", "group_id", "variant_index", "perturbation", "mask_scope",
             "align_mode", "metric", "value", "pixel_count", "negative_scale",
             "n_invalidated"]
        )
        for row, ptype in rows:
            for key in sorted(row.values):
                writer.writerow(
                    [row.model, row.group_id, row.variant_index, ptype,
                     row.mask_scope.value, row.align_mode, key, repr(row.values[key]),
                     row.pixel_count, int(row.negative_scale_flag), row.n_invalidated]
                )


def _write_robustness_rows(rows, path: Path) -> None:
    def fmt(value):
        return "" if value is None else repr(value)

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["model", "group_id", "perturbation", "metric", "mu", "sigma",
             "kappa", "kappa_abs", "n_variants", "n_skipped", "n_kappa"]
        )
        for row in rows:
            writer.writerow(
                [row.model, row.group_id, row.perturbation, row.metric,
                 repr(row.mu), repr(row.sigma), fmt(row.kappa), fmt(row.kappa_abs),
                 row.n_variants, row.n_skipped,
                 "" if row.n_kappa is None else row.n_kappa]
            )


def cmd_evaluate(args) -> int:
    try:
        groups, models = depthio.load_manifest(args.manifest)
        groups, models = _select(groups, models, args)
        config = _config_from_args(args)
    except (HarnessError, ValueError, OSError) as exc:
        _log(f"error: {exc}")
        return 2
    if not groups or not models:
        _log("error: nothing to evaluate after filtering")
        return 2
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    tasks = [(model, group) for model in models for group in groups]
    results: dict = {}

    def run(task):
        model, group = task
        return robust.evaluate_group_full(group, model, config)

    threads = _resolve_threads(args.threads)
    _log(f"evaluating {len(tasks)} (model, group) pairs on {threads} threads")
    with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
        futures = {pool.submit(run, task): task for task in tasks}
        for future in concurrent.futures.as_completed(futures):
            model, group = futures[future]
            try:
                results[(model.name, group.group_id)] = future.result()
            except (HarnessError, OSError) as exc:
                results[(model.name, group.group_id)] = exc

    metric_rows, robustness_rows, skips, errors = [], [], [], []
    for model in models:
        for group in groups:
            outcome = results[(model.name, group.group_id)]
            if isinstance(outcome, Exception):
                errors.append(
                    {"model": model.name, "group": group.group_id, "error": str(outcome)}
                )
                continue
            ptype = group.variants[0].perturbation.ptype.value
            for row in outcome.metric_rows:
                metric_rows.append((row, ptype if row.variant_index > 0 else ""))
            robustness_rows.extend(outcome.robustness_rows)
            skips.extend(outcome.skips)

    _write_metric_rows(metric_rows, out_dir / "metric_rows.csv")
    _write_robustness_rows(robustness_rows, out_dir / "robustness.csv")
    if robustness_rows:
        categories = {g.group_id: g.category for g in groups}
        table = report.aggregate(robustness_rows, categories, by_category=args.by_category)
        report.emit(table, "csv", out_dir / "table.csv")
        report.emit(table, "json", out_dir / "table.json")

    digest = hashlib.sha256(Path(args.manifest).read_bytes()).hexdigest()
    run_doc = {
        "config": _config_digest(args, config),
        "manifest_sha256": digest,
        "skips": sorted(skips),
        "errors": sorted(errors, key=lambda e: (e["model"], e["group"])),
    }
    (out_dir / "run.json").write_text(json.dumps(run_doc, indent=2, sort_keys=True) + "\n")

    for entry in run_doc["errors"]:
        _log(f"error: model={entry['model']} group={entry['group']}: {entry['error']}")
    for entry in run_doc["skips"]:
        _log(f"skip: {entry}")
    if errors:
        return 1
    if skips and not args.allow_skips:
        return 1
    return 0


def cmd_synth(args) -> int:
    try:
        group_plans, models = geom.load_synth_spec(args.spec, seed_override=args.seed)
    except (OSError, ValueError, KeyError) as exc:
        _log(f"error: cannot load synth spec: {exc}")
        return 2
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    fragments = []
    status = 0
    for group_id, category, spec, plan in group_plans:
        try:
            _, fragment = geom.make_fixture_group(
                spec, plan, out_dir, models=models, group_id=group_id, category=category
            )
        except geom.PerturbationRejected as exc:
            _log(f"error: group {group_id}: {exc}")
            status = 1
            continue
        fragments.append(fragment)
        _log(f"wrote group {group_id} ({1 + len(fragment['variants'])} records)")
    if not fragments:
        return status or 1
    manifest = {
        "models": [
            {"name": m.name, "output_kind": m.output_kind.value} for m, _ in models
        ],
        "groups": fragments,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(out_dir / "manifest.json")
    return status


def cmd_report(args) -> int:
    try:
        table = report.ingest_external_results(args.table)
    except HarnessError as exc:
        _log(f"error: {exc}")
        return 2
    if args.models:
        wanted = {m.strip() for m in args.models.split(",") if m.strip()}
        missing = wanted - set(table.models())
        if missing:
            _log(f"error: models not in table: {', '.join(sorted(missing))}")
            return 2
        table = report.ResultTable(
            cells=tuple(c for c in table.cells if c.model in wanted),
            source=table.source, metadata=table.metadata,
        )
    for finding in report.verify_average_consistency(table):
        _log(f"warning: {finding}")
    try:
        ranking = report.rank_models(
            table, args.metric, args.statistic,
            perturbation=args.perturbation, category=args.category,
        )
    except HarnessError as exc:
        _log(f"error: {exc}")
        return 1
    writer = csv.writer(sys.stdout)
    writer.writerow(["rank", "model", "value", "tied"])
    for i, entry in enumerate(ranking, start=1):
        writer.writerow([i, entry.model, repr(entry.value), int(entry.tied)])
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["rank", "model", "value", "tied"])
            for i, entry in enumerate(ranking, start=1):
                w.writerow([i, entry.model, repr(entry.value), int(entry.tied)])
    return 0


def cmd_erode_sweep(args) -> int:
    try:
        radii = [int(r) for r in args.radii.split(",") if r.strip()]
        groups, models = depthio.load_manifest(args.manifest)
        groups, models = _select(groups, models, args)
        config = _config_from_args(args)
        table = report.erosion_sweep(groups, models, radii, config)
    except (HarnessError, ValueError, OSError) as exc:
        _log(f"error: {exc}")
        return 2
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report.emit(table, "csv", out_dir / "sweep.csv")
    report.emit(table, "json", out_dir / "sweep.json")
    for radius in table.metadata.get("skipped_radii", []):
        _log(f"skip: radius {radius} emptied every mask")
    print(out_dir / "sweep.csv")
    return 0


def _validate_record(record, group_id: str, where: str, models, violations) -> None:
    shape = None
    for label, path in (("gt", record.gt), ("object_mask", record.object_mask),
                        ("background_mask", record.background_mask)):
        if path is None:
            continue
        loc = f"{group_id}.{where}.{label}"
        if not Path(path).exists():
            violations.append(f"{loc}: missing file {path}")
            continue
        try:
            if label == "gt":
                raster = depthio.read_depth_raster(path)
                shape = raster.values.shape
            else:
                mask = depthio.read_mask(path)
                if shape and mask.bits.shape != shape:
                    violations.append(
                        f"{loc}: mask is {mask.bits.shape}, gt is {shape}"
                    )
        except HarnessError as exc:
            violations.append(f"{loc}: {exc}")
    for model in models:
        loc = f"{group_id}.{where}.predictions.{model.name}"
        path = record.predictions.get(model.name)
        if path is None:
            violations.append(f"{loc}: no prediction listed")
            continue
        if not Path(path).exists():
            violations.append(f"{loc}: missing file {path}")
            continue
        try:
            pred = depthio.read_depth_raster(path, model.output_kind)
            if shape and pred.values.shape != shape:
                violations.append(f"{loc}: prediction is {pred.values.shape}, gt is {shape}")
        except HarnessError as exc:
            violations.append(f"{loc}: {exc}")


def cmd_validate(args) -> int:
    try:
        groups, models = depthio.load_manifest(args.manifest)
    except ManifestError as exc:
        print(str(exc))
        return 1
    except (HarnessError, OSError) as exc:
        print(f"<manifest>: {exc}")
        return 1
    violations: list = []
    for group in groups:
        base_shape = None
        try:
            base_shape = depthio.read_depth_raster(group.base.gt).values.shape
        except (HarnessError, OSError):
            pass
        _validate_record(group.base, group.group_id, "base", models, violations)
        for i, variant in enumerate(group.variants, start=1):
            _validate_record(variant, group.group_id, f"variants[{i}]", models, violations)
            if base_shape is not None and Path(variant.gt).exists():
                try:
                    v_shape = depthio.read_depth_raster(variant.gt).values.shape
                    if v_shape != base_shape:
                        violations.append(
                            f"{group.group_id}.variants[{i}].gt: raster is {v_shape}, "
                            f"base is {base_shape}"
                        )
                except HarnessError:
                    pass
    for violation in violations:
        print(violation)
    if violations:
        _log(f"{len(violations)} violation(s)")
        return 1
    _log("manifest OK")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pde", description="Depth robustness evaluation harness"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_eval = sub.add_parser("evaluate", help="run a benchmark manifest end to end")
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--out", required=True, help="output directory")
    p_eval.add_argument("--allow-skips", action="store_true",
                        help="exit 0 even when records were skipped")
    p_eval.add_argument("--by-category", action="store_true",
                        help="add per-category cells to the aggregate table")
    _add_eval_flags(p_eval)
    p_eval.set_defaults(func=cmd_evaluate)

    p_synth = sub.add_parser("synth", help="write a synthetic fixture benchmark")
    p_synth.add_argument("--spec", required=True, help="synth-spec JSON file")
    p_synth.add_argument("--out", required=True, help="output directory")
    p_synth.add_argument("--seed", type=int, default=None,
                         help="override the seed in the synth-spec file")
    p_synth.set_defaults(func=cmd_synth)

    p_report = sub.add_parser("report", help="rank models from a results table")
    p_report.add_argument("--table", required=True, help="results CSV/JSON (computed or external)")
    p_report.add_argument("--metric", default="absrel")
    p_report.add_argument("--statistic", default="mu", choices=list(report.STATISTICS))
    p_report.add_argument("--perturbation", default=report.AVERAGE)
    p_report.add_argument("--category", default=None)
    p_report.add_argument("--models", default=None,
                          help="rank only these models (e.g. the kappa-capable subset)")
    p_report.add_argument("--out", default=None, help="also write the ranking CSV here")
    p_report.set_defaults(func=cmd_report)

    p_sweep = sub.add_parser("erode-sweep", help="re-run evaluation over erosion radii")
    p_sweep.add_argument("--manifest", required=True)
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--radii", required=True, help="comma-separated non-decreasing radii")
    _add_eval_flags(p_sweep)
    p_sweep.set_defaults(func=cmd_erode_sweep)

    p_val = sub.add_parser("validate", help="check a manifest without evaluating")
    p_val.add_argument("--manifest", required=True)
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
