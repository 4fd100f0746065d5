"""depth-export: run a model adapter over images, merge fragments."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import export, stubs


def cmd_run(args) -> int:
    model = stubs.from_spec(args.model)
    job = export.ExportJob(
        model_id=args.name or model.name,
        images=tuple(args.images),
        out_dir=Path(args.out),
        output_kind=args.output_kind or model.output_kind,
        device=args.device,
    )
    fragment = export.export_predictions(job, model)
    fragment_path = Path(args.out) / f"{job.model_id}_fragment.json"
    export.write_fragment(fragment, fragment_path)
    for failure in fragment["errors"]:
        print(f"error: {failure['image']}: {failure['error']}", file=sys.stderr)
    print(fragment_path)
    return 0 if not fragment["errors"] else 1


def cmd_merge(args) -> int:
    manifest_path = Path(args.manifest)
    manifest = json.loads(manifest_path.read_text())
    fragment = json.loads(Path(args.fragment).read_text())
    try:
        merged = export.merge_fragment(manifest, fragment, manifest_path.parent)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out = Path(args.out)
    out.write_text(json.dumps(merged, indent=2, sort_keys=True) + "\n")
    print(out)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="depth-export")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="export predictions for a list of images")
    p_run.add_argument("--model", required=True,
                       help="adapter spec, e.g. stub-constant:2.5 or stub-ramp:1:5")
    p_run.add_argument("--images", nargs="+", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--name", default=None, help="override the model name")
    p_run.add_argument("--output-kind", default=None,
                       help="override the declared output kind")
    p_run.add_argument("--device", default="cpu")
    p_run.set_defaults(func=cmd_run)

    p_merge = sub.add_parser("merge", help="merge a fragment into a manifest")
    p_merge.add_argument("--manifest", required=True)
    p_merge.add_argument("--fragment", required=True)
    p_merge.add_argument("--out", required=True)
    p_merge.set_defaults(func=cmd_merge)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
