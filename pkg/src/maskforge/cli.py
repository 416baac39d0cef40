"""maskforge command-line interface.

Exit codes: 0 success, 1 usage error, 2 runtime error. With --json-errors,
failures are reported on stderr as a single JSON line. All randomness flows
from explicit --seed flags; no command reads the clock or OS entropy.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .edges import canny
from .errors import MaskForgeError
from .graphs import build_graph, extract_keypoints
from .masks import invert, load_mask, load_probmap, save_mask, topology
from .metrics import MetricConfig, evaluate, mean_report
from .nonrigid import TrainConfig, train, trace_to_csv_rows
from .pipeline import (ConditionBundle, PipelineConfig, SCHEMA_VERSION, distribution_report,
                       load_embeddings, run, save_image, stub_generate, validate_manifest)
from .rigid import RigidRanges, RigidTransform, rigid_edit, sample_rigid
from .samples import write_sample_set


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="maskforge", description="Topology-preserving mask editing, "
                "condition export, and DIS evaluation metrics.")
    p.add_argument("--version", action="version",
                   version=f"maskforge {__version__} (config-schema {SCHEMA_VERSION})")
    p.add_argument("--json-errors", action="store_true",
                   help="emit failures as single-line JSON on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("invert", help="invert a binary mask")
    c.add_argument("--in", dest="src", required=True)
    c.add_argument("--out", required=True)

    c = sub.add_parser("edit-rigid", help="apply or sample a rigid transform")
    c.add_argument("--in", dest="src", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--rotation", type=float, default=0.0, help="radians")
    c.add_argument("--scale", type=float, default=1.0)
    c.add_argument("--dx", type=float, default=0.0)
    c.add_argument("--dy", type=float, default=0.0)
    c.add_argument("--tilt-x", type=float, default=0.0)
    c.add_argument("--tilt-y", type=float, default=0.0)
    c.add_argument("--random", action="store_true", help="sample the transform instead")
    c.add_argument("--seed", type=int, default=0)

    c = sub.add_parser("edit-nonrigid", help="train the deformation generator and emit variants")
    c.add_argument("--in", dest="src", help="single source mask")
    c.add_argument("--in-dir", help="directory of source masks")
    c.add_argument("--prompt", default="", help="prompt text for a single mask")
    c.add_argument("--prompt-dir", help="directory of <stem>.txt prompts")
    c.add_argument("--out-dir", required=True)
    c.add_argument("--variants", type=int, default=1)
    c.add_argument("--steps", type=int, default=60)
    c.add_argument("--seed", type=int, default=0)

    c = sub.add_parser("canny", help="edge map of a mask")
    c.add_argument("--in", dest="src", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--low", type=float, default=0.1)
    c.add_argument("--high", type=float, default=0.3)
    c.add_argument("--sigma", type=float, default=1.0)

    c = sub.add_parser("graph", help="dump the structural graph as JSON")
    c.add_argument("--in", dest="src", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--n-v", type=int, default=64)
    c.add_argument("--corner-snap", action="store_true")

    c = sub.add_parser("topology", help="print components/holes/euler as JSON")
    c.add_argument("--in", dest="src", required=True)

    c = sub.add_parser("pipeline", help="run the two-stage dataset pipeline")
    c.add_argument("--config", required=True)
    c.add_argument("--write-samples", metavar="DIR",
                   help="materialize the bundled 10-mask sample set first")

    c = sub.add_parser("evaluate", help="evaluate predictions against ground truths")
    c.add_argument("--pred-dir", required=True)
    c.add_argument("--gt-dir", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--csv", help="also export per-image rows as CSV")

    c = sub.add_parser("report", help="render a metric report or compare embeddings")
    c.add_argument("--metrics", help="report JSON from `evaluate`")
    c.add_argument("--markdown", action="store_true")
    c.add_argument("--dist-a", help="embedding file (.npy or .csv)")
    c.add_argument("--dist-b", help="embedding file (.npy or .csv)")

    c = sub.add_parser("stub-generate", help="procedural image for a mask+prompt bundle")
    c.add_argument("--mask", required=True)
    c.add_argument("--prompt", default="")
    c.add_argument("--prompt-file")
    c.add_argument("--out", required=True)
    c.add_argument("--seed", type=int, default=0)
    return p


def _cmd_invert(args) -> int:
    save_mask(invert(load_mask(args.src)), args.out)
    return 0


def _cmd_edit_rigid(args) -> int:
    if args.random:
        t = sample_rigid(args.seed, RigidRanges())
    else:
        t = RigidTransform(rotation=args.rotation, scale=args.scale,
                           translation=(args.dx, args.dy),
                           perspective_tilt=(args.tilt_x, args.tilt_y))
    save_mask(rigid_edit(load_mask(args.src), t), args.out)
    print(json.dumps(t.to_json_dict()))
    return 0


def _cmd_edit_nonrigid(args) -> int:
    if bool(args.src) == bool(args.in_dir):
        raise _UsageError("provide exactly one of --in or --in-dir")
    if args.src:
        stems = [Path(args.src).stem]
        masks = [load_mask(args.src)]
        prompts = [args.prompt]
    else:
        paths = sorted(p for p in Path(args.in_dir).iterdir()
                       if p.suffix.lower() in (".png", ".pgm"))
        if not paths:
            raise MaskForgeError(f"no masks in {args.in_dir}")
        stems = [p.stem for p in paths]
        masks = [load_mask(p) for p in paths]
        prompts = []
        for p in paths:
            cand = Path(args.prompt_dir) / f"{p.stem}.txt" if args.prompt_dir else None
            prompts.append(cand.read_text(encoding="utf-8").strip()
                           if cand and cand.is_file() else args.prompt)
    cfg = TrainConfig(gen_steps=args.steps, variants_per_source=args.variants, seed=args.seed)
    result = train(masks, prompts, cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for si, v, mask in result.emitted:
        save_mask(mask, out / f"{stems[si]}_n{v:02d}.png")
    (out / "loss_trace.csv").write_text("\n".join(trace_to_csv_rows(result.trace)) + "\n",
                                        encoding="utf-8")
    print(f"wrote {len(result.emitted)} variants to {out}")
    return 0


def _cmd_canny(args) -> int:
    save_mask(canny(load_mask(args.src), args.low, args.high, args.sigma), args.out)
    return 0


def _cmd_graph(args) -> int:
    mask = load_mask(args.src)
    points = extract_keypoints(canny(mask), n_v=args.n_v, corner_snap=args.corner_snap)
    graph = build_graph(points)
    Path(args.out).write_text(json.dumps(graph.to_json_dict(), indent=2) + "\n",
                              encoding="utf-8")
    return 0


def _cmd_topology(args) -> int:
    sig = topology(load_mask(args.src))
    print(json.dumps({"components": sig.components, "holes": sig.holes, "euler": sig.euler}))
    return 0


def _cmd_pipeline(args) -> int:
    if args.write_samples:
        write_sample_set(args.write_samples)
    config = PipelineConfig.from_json_file(args.config)
    manifest = run(config)
    validate_manifest(Path(config.out_dir) / "manifest.json")
    print(f"wrote manifest with {len(manifest['entries'])} entries to {config.out_dir}")
    return 0


def _cmd_evaluate(args) -> int:
    pred_dir, gt_dir = Path(args.pred_dir), Path(args.gt_dir)
    preds = {p.stem: p for p in pred_dir.iterdir() if p.suffix.lower() in (".png", ".pgm")}
    gts = {p.stem: p for p in gt_dir.iterdir() if p.suffix.lower() in (".png", ".pgm")}
    stems = sorted(set(preds) & set(gts))
    if not stems:
        raise MaskForgeError("no prediction/ground-truth pairs share a file stem")
    for missing in sorted(set(preds) ^ set(gts)):
        print(f"warning: unpaired stem {missing!r}", file=sys.stderr)
    cfg = MetricConfig()
    rows = {}
    reports = []
    for stem in stems:
        rep = evaluate(load_probmap(preds[stem]), load_mask(gts[stem]), cfg)
        rows[stem] = rep.as_dict()
        reports.append(rep)
    doc = {"count": len(stems), "images": rows, "mean": mean_report(reports).as_dict()}
    Path(args.out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if args.csv:
        lines = ["name,max_f1,weighted_fbeta,mae,s_measure,e_measure"]
        for stem in stems:
            r = rows[stem]
            lines.append(f"{stem},{r['max_f1']:.6f},{r['weighted_fbeta']:.6f},"
                         f"{r['mae']:.6f},{r['s_measure']:.6f},{r['e_measure']:.6f}")
        Path(args.csv).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"evaluated {len(stems)} pairs -> {args.out}")
    return 0


_COLUMNS = (("max_f1", "maxF1 (up)"), ("weighted_fbeta", "Fbw (up)"), ("mae", "M (down)"),
            ("s_measure", "Sa (up)"), ("e_measure", "Em (up)"))


def _cmd_report(args) -> int:
    if args.dist_a or args.dist_b:
        if not (args.dist_a and args.dist_b):
            raise _UsageError("--dist-a and --dist-b must be given together")
        sim = distribution_report(load_embeddings(args.dist_a), load_embeddings(args.dist_b))
        print(json.dumps({"cosine_similarity": sim}))
        return 0
    if not args.metrics:
        raise _UsageError("provide --metrics (or --dist-a/--dist-b)")
    with open(args.metrics, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if args.markdown:
        header = "| image | " + " | ".join(label for _, label in _COLUMNS) + " |"
        sep = "|" + "---|" * (len(_COLUMNS) + 1)
        print(header)
        print(sep)
        for stem in sorted(doc["images"]):
            r = doc["images"][stem]
            print("| " + stem + " | " + " | ".join(f"{r[key]:.4f}" for key, _ in _COLUMNS) + " |")
        m = doc["mean"]
        print("| **mean** | " + " | ".join(f"{m[key]:.4f}" for key, _ in _COLUMNS) + " |")
    else:
        print(json.dumps(doc["mean"], indent=2, sort_keys=True))
    return 0


def _cmd_stub_generate(args) -> int:
    prompt = args.prompt
    if args.prompt_file:
        prompt = Path(args.prompt_file).read_text(encoding="utf-8").strip()
    mask = load_mask(args.mask)
    bundle = ConditionBundle(id=Path(args.out).stem, mask=mask, canny_map=canny(mask),
                             prompt=prompt, source_id=Path(args.mask).stem, edit={})
    save_image(stub_generate(bundle, args.seed), args.out)
    return 0


_HANDLERS = {
    "invert": _cmd_invert,
    "edit-rigid": _cmd_edit_rigid,
    "edit-nonrigid": _cmd_edit_nonrigid,
    "canny": _cmd_canny,
    "graph": _cmd_graph,
    "topology": _cmd_topology,
    "pipeline": _cmd_pipeline,
    "evaluate": _cmd_evaluate,
    "report": _cmd_report,
    "stub-generate": _cmd_stub_generate,
}


def _fail(message: str, code: int, json_errors: bool) -> int:
    if json_errors:
        print(json.dumps({"error": message, "exit_code": code}), file=sys.stderr)
    else:
        print(f"maskforge: error: {message}", file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    json_errors = "--json-errors" in argv
    argv = [a for a in argv if a != "--json-errors"]  # accepted in any position
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        return _fail(str(exc), 1, json_errors)
    try:
        return _HANDLERS[args.command](args)
    except _UsageError as exc:
        return _fail(str(exc), 1, json_errors)
    except MaskForgeError as exc:
        return _fail(str(exc), 2, json_errors)
    except OSError as exc:
        return _fail(str(exc), 2, json_errors)


if __name__ == "__main__":
    sys.exit(main())
