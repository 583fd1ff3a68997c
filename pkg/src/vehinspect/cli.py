"""Command-line entry point.

Exit codes: 0 success or PASS, 1 FAIL verdict (``inspect`` only),
2 operational error (bad input, bad config).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .evidence import EvidenceError, load_evidence
from .geometry import rasterize_polygon
from .manifest import ManifestError, ingest
from .metrics import (
    DEFAULT_RASTER,
    LabeledBox,
    RasterMask,
    format_ablation,
    ablation_table,
    match_and_score,
    mean_average_precision,
    mean_iou,
    per_class_ap,
)
from .pipeline import MODE_ORDER, inspect_evidence
from .rules import InspectionReport, Verdict, render_text
from .simulation import ConfigError, ablate, load_bundle, pipeline_config, simulate, write_outputs

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_ERROR = 2

log = logging.getLogger("vehinspect")


class UsageError(Exception):
    pass


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_inspect(args) -> int:
    bundle = load_bundle(args.config).with_seed(args.seed)
    manifest = ingest(args.manifest, bundle.routing.vocabulary) if args.manifest else bundle.manifest
    if manifest is None:
        raise ConfigError("no manifest: pass --manifest or set 'manifest' in the config")
    evidence = load_evidence(args.evidence)
    config = pipeline_config(bundle, manifest, args.mode, jitter=False)
    report, _ = inspect_evidence(evidence, config)
    text = report.to_json() + "\n" if args.format == "structured" else render_text(report)
    _emit(text, args.out)
    return EXIT_OK if report.verdict is Verdict.PASS else EXIT_FAIL


def cmd_simulate(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    bundle = load_bundle(args.config).with_seed(args.seed)
    result = simulate(bundle, args.n, args.cadence_ms, mode=args.mode, jitter=not args.no_jitter)
    if args.out:
        write_outputs(result, Path(args.out))
    summary = json.dumps(result.summary, indent=2) + "\n"
    if args.format == "structured":
        sys.stdout.write(summary)
    else:
        s = result.summary
        recall = "n/a" if s["defect_recall"] is None else f"{s['defect_recall']:.3f}"
        sys.stdout.write(
            f"vehicles            {s['vehicles']}\n"
            f"system accuracy     {s['system_accuracy']:.3f}\n"
            f"defect recall       {recall}\n"
            f"throughput          {s['throughput_per_min']:.3f} vehicles/min\n"
            f"latency p50/p95/max {s['latency']['p50_ms']:.1f} / {s['latency']['p95_ms']:.1f} / "
            f"{s['latency']['max_ms']:.1f} ms\n"
        )
    return EXIT_OK


def cmd_ablate(args) -> int:
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    bad = [m for m in modes if m not in MODE_ORDER]
    if bad or not modes:
        raise UsageError(f"unknown mode(s) {', '.join(bad) or '(none)'}; choose from {', '.join(MODE_ORDER)}")
    bundle = load_bundle(args.config).with_seed(args.seed)
    rows = ablation_table(ablate(bundle, modes, args.n), MODE_ORDER)
    _emit(format_ablation(rows, "csv" if args.format == "structured" else "text"), args.out)
    return EXIT_OK


def _load_dump(path: str) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise UsageError(f"{path}: expected a JSON object")
    return data


def _dump_classes(data: dict) -> set[str]:
    if "classes" in data:
        return set(data["classes"])
    return {b["class"] for b in data.get("boxes", ())}


def _dump_masks(data: dict, size) -> list[RasterMask]:
    w, h = size
    return [
        RasterMask(str(m["class"]), rasterize_polygon(m["polygon"], w, h), str(m.get("image", "")))
        for m in data.get("masks", ())
    ]


def cmd_eval(args) -> int:
    pred, gt = _load_dump(args.pred), _load_dump(args.gt)
    if _dump_classes(pred) - _dump_classes(gt):
        raise UsageError(
            f"class vocabulary mismatch: prediction classes {sorted(_dump_classes(pred) - _dump_classes(gt))} "
            "are not in the ground truth"
        )
    if "classes" in pred and "classes" in gt and set(pred["classes"]) != set(gt["classes"]):
        raise UsageError("class vocabulary mismatch between prediction and ground-truth dumps")
    preds = [LabeledBox.from_dict(b) for b in pred.get("boxes", ())]
    gts = [LabeledBox.from_dict(b) for b in gt.get("boxes", ())]
    classes = sorted(_dump_classes(gt))
    aps = per_class_ap(preds, gts)
    rows = []
    for c in classes:
        m = match_and_score([p for p in preds if p.cls == c], [g for g in gts if g.cls == c])
        rows.append((c, m.precision, m.recall, m.f1, aps.get(c)))
    overall = match_and_score(preds, gts)
    result = {
        "classes": [
            {"class": c, "precision": p, "recall": r, "f1": f, "ap50": ap} for c, p, r, f, ap in rows
        ],
        "overall": {
            "precision": overall.precision,
            "recall": overall.recall,
            "f1": overall.f1,
            "map50": mean_average_precision(preds, gts),
        },
    }
    if "masks" in pred or "masks" in gt:
        size = tuple(gt.get("raster", DEFAULT_RASTER))
        result["miou"] = mean_iou(_dump_masks(pred, size), _dump_masks(gt, size))
    if args.format == "structured":
        text = json.dumps(result, indent=2) + "\n"
    else:
        fmt = lambda v: "n/a" if v is None else f"{v:.4f}"
        lines = ["class,precision,recall,f1,ap50"]
        lines += [f"{c},{fmt(p)},{fmt(r)},{fmt(f)},{fmt(ap)}" for c, p, r, f, ap in rows]
        o = result["overall"]
        lines.append(f"overall,{fmt(o['precision'])},{fmt(o['recall'])},{fmt(o['f1'])},{fmt(o['map50'])}")
        if "miou" in result:
            lines.append(f"miou,{fmt(result['miou'])}")
        text = "\n".join(lines) + "\n"
    _emit(text, args.out)
    return EXIT_OK


def cmd_report(args) -> int:
    raw = Path(args.report).read_text(encoding="utf-8")
    reports = []
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            reports.append(InspectionReport.from_json(line))
        except json.JSONDecodeError as exc:
            raise UsageError(f"{args.report}: line {lineno}: {exc.msg}") from None
    if args.format == "structured":
        text = "".join(r.to_json() + "\n" for r in reports)
    else:
        text = "\n".join(render_text(r) for r in reports)
    _emit(text, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run bundle YAML (default: packaged default.yaml)")
    common.add_argument("--seed", type=int, default=None, help="master seed for all randomness")
    common.add_argument("--out", help="output file (directory for simulate)")
    common.add_argument("--format", choices=("text", "structured"), default="text")

    parser = argparse.ArgumentParser(prog="vehinspect", description="Variant-aware vehicle inspection engine")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inspect", parents=[common], help="inspect one evidence file")
    p.add_argument("evidence")
    p.add_argument("--manifest", help="manifest JSONL (overrides the bundle's)")
    p.add_argument("--mode", choices=MODE_ORDER, default="Full")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("simulate", parents=[common], help="simulate a synthetic population")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--cadence-ms", type=float, default=None)
    p.add_argument("--mode", choices=MODE_ORDER, default="Full")
    p.add_argument("--no-jitter", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ablate", parents=[common], help="run ablation modes on one population")
    p.add_argument("--modes", default=",".join(MODE_ORDER))
    p.add_argument("--n", type=int, default=500)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("eval", parents=[common], help="score a prediction dump against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", parents=[common], help="render report JSON/JSONL")
    p.add_argument("report")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, ManifestError, EvidenceError, ValueError, KeyError, OSError) as exc:
        sys.stderr.write(f"vehinspect {args.command}: error: {exc}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
