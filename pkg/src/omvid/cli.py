"""The `omvid` command-line interface.

Subcommands wire the library modules into pipelines:

    superpixel   segment a frame directory into a .spv label volume
    pseudolabel  expand sparse annotations into per-frame pseudo-labels
    select       rank unlabeled videos and emit an annotation plan
    cost         price a plan in man-hours
    simulate     run a synthetic multi-round annotation campaign
    eval         frame/video mAP on detection + ground-truth JSON files

Diagnostics go to stderr, data to stdout or --out files.  Exit codes:
0 success, 1 validation/format errors, 2 configuration errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import campaign as camp
from . import datamodel as dm
from . import pseudolabel as pl
from . import selection as sel
from .errors import (
    ConfigurationError,
    FormatError,
    OmvidError,
    ValidationError,
)
from .superpixel3d import SlicConfig, segment

logger = logging.getLogger("omvid")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--log-level", default="info",
                   choices=["debug", "info", "warning", "error"])
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="omvid", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("superpixel", help="segment a video into 3D superpixels")
    p.add_argument("--video", required=True, help="directory of frame_%%06d.png")
    p.add_argument("--interval", type=int, default=16, help="seed spacing S")
    p.add_argument("--compactness", type=float, default=10.0)
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--temporal-scale", type=float, default=1.0)
    p.add_argument("--min-region", type=int, default=8)
    p.add_argument("--out", required=True, help="output .spv file")
    _add_common(p)

    p = sub.add_parser("pseudolabel", help="build pseudo-labels from annotations")
    p.add_argument("--annotations", required=True, help="JSON-lines annotation file")
    p.add_argument("--superpixels", help=".spv file or directory of <video_id>.spv")
    p.add_argument("--mode", default="superpixel", choices=["superpixel", "scribblebox"])
    p.add_argument("--decay", type=float, default=0.9)
    p.add_argument("--weight-floor", type=float, default=0.1)
    p.add_argument("--total-frames", type=int, help="frame count override")
    p.add_argument("--out", required=True, help="output .plj file")
    _add_common(p)

    p = sub.add_parser("select", help="rank videos and emit an annotation plan")
    p.add_argument("--split", required=True, help="split JSON file")
    p.add_argument("--uncertainty", required=True, help="directory of <video_id>.unc")
    p.add_argument("--box-pct", type=float, default=0.0)
    p.add_argument("--scribble-pct", type=float, default=0.0)
    p.add_argument("--tag-pct", type=float, default=0.0)
    p.add_argument("--frames-box", type=int, default=3)
    p.add_argument("--frames-scribble", type=int, default=3)
    p.add_argument("--min-gap", type=int, default=8)
    p.add_argument("--policy", default="bucket", choices=["bucket", "random"])
    p.add_argument("--costs", default="default", help="cost JSON file or 'default'")
    p.add_argument("--out", required=True, help="output plan JSON")
    _add_common(p)

    p = sub.add_parser("cost", help="price a plan in man-hours")
    p.add_argument("--plan", required=True)
    p.add_argument("--costs", default="default")
    p.add_argument("--mean-frames", type=float, default=0.0,
                   help="frames charged for dense (empty-frame-list) entries")
    p.add_argument("--masks", action="store_true", help="price boxes at the mask rate")
    _add_common(p)

    p = sub.add_parser("simulate", help="run a synthetic annotation campaign")
    p.add_argument("--scenes", type=int, default=12)
    p.add_argument("--rounds", type=int, default=2)
    p.add_argument("--policy", default="bucket", choices=["bucket", "random"])
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--box-pct", type=float, default=20.0)
    p.add_argument("--scribble-pct", type=float, default=30.0)
    p.add_argument("--tag-pct", type=float, default=20.0)
    p.add_argument("--frames-box", type=int, default=3)
    p.add_argument("--frames-scribble", type=int, default=3)
    p.add_argument("--min-gap", type=int, default=2)
    p.add_argument("--mode", default="superpixel", choices=["superpixel", "scribblebox"])
    p.add_argument("--difficulty-ramp", type=float, default=3.0)
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--emit-csv", help="also write a cost-vs-metric CSV")
    _add_common(p)

    p = sub.add_parser("eval", help="standalone frame/video mAP")
    p.add_argument("--detections", required=True)
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--mode", default="frame", choices=["frame", "video"])
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--out", help="write the score JSON here instead of stdout")
    _add_common(p)

    return parser


def _load_costs(spec: str) -> dm.CostTable:
    if spec == "default":
        return dm.CostTable()
    try:
        obj = json.loads(Path(spec).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{spec}: invalid JSON") from exc
    known = {"tag_s", "point_s", "scribble_s", "box_s", "mask_s"}
    bad = set(obj) - known
    if bad:
        raise FormatError(f"{spec}: unknown cost keys {sorted(bad)}")
    return dm.CostTable(**{k: float(v) for k, v in obj.items()})


def _cmd_superpixel(args) -> int:
    vol = dm.load_video(args.video)
    cfg = SlicConfig(
        interval=args.interval,
        compactness=args.compactness,
        max_iters=args.iters,
        temporal_scale=args.temporal_scale,
        min_region=args.min_region,
    )
    sp = segment(vol, cfg)
    dm.write_labels(sp, args.out)
    logger.info("wrote %s: %d clusters over %s", args.out, sp.num_clusters, sp.shape)
    return 0


def _load_superpixels(spec: str) -> dict[str, dm.SuperpixelLabels]:
    path = Path(spec)
    if path.is_dir():
        out = {}
        for f in sorted(path.glob("*.spv")):
            sp = dm.read_labels(f)
            out[sp.video_id] = sp
        if not out:
            raise FormatError(f"no .spv files in {path}")
        return out
    sp = dm.read_labels(path)
    return {sp.video_id: sp}


def _cmd_pseudolabel(args) -> int:
    mode = pl.PseudoMode(args.mode)
    wc = pl.WeightConfig(decay=args.decay, floor=args.weight_floor)
    sp_by_vid: dict[str, dm.SuperpixelLabels] = {}
    if args.superpixels:
        sp_by_vid = _load_superpixels(args.superpixels)
    frame_shape = None
    if sp_by_vid:
        any_sp = next(iter(sp_by_vid.values()))
        frame_shape = any_sp.shape[1:]
    records = dm.parse_annotations(args.annotations, frame_shape=frame_shape)
    sets = []
    for rec in records:
        if rec.is_tag_only():
            logger.info("%s: tag-only record, no pseudo-labels", rec.video_id)
            continue
        sp = sp_by_vid.get(rec.video_id)
        if mode is pl.PseudoMode.SUPERPIXEL and sp is None and any(
            e.kind in (dm.AnnotationKind.SCRIBBLE, dm.AnnotationKind.POINT)
            for e in rec.entries
        ):
            raise ConfigurationError(
                f"{rec.video_id}: superpixel mode needs --superpixels for scribble/point entries"
            )
        total = args.total_frames or (sp.shape[0] if sp is not None else None)
        sets.append(pl.build_pseudolabels(rec, sp=sp, wc=wc, mode=mode, total_frames=total))
    pl.write_pseudolabels(sets, args.out)
    logger.info("wrote %s: %d videos", args.out, len(sets))
    return 0


def _cmd_select(args) -> int:
    split = dm.read_split(args.split)
    unc_dir = Path(args.uncertainty)
    scores: dict[str, float] = {}
    frame_scores: dict[str, np.ndarray] = {}
    for vid in sorted(split.unlabeled):
        f = unc_dir / f"{vid}.unc"
        if not f.exists():
            raise ValidationError(f"missing uncertainty file for {vid}: {f}")
        values = dm.read_uncertainty(f)
        uv = sel.UncertaintyVolume(vid, values)
        scores[vid] = sel.video_uncertainty(uv)
        frame_scores[vid] = values.sum(axis=(1, 2))
    bc = sel.BudgetConfig(
        box_pct=args.box_pct,
        scribble_pct=args.scribble_pct,
        tag_pct=args.tag_pct,
        frames_per_video_box=args.frames_box,
        frames_per_video_scribble=args.frames_scribble,
        min_frame_gap=args.min_gap,
    )
    plan = sel.select(
        split,
        scores,
        bc,
        frame_scores,
        policy=args.policy,
        seed=args.seed,
        cost_table=_load_costs(args.costs),
    )
    sel.write_plan(plan, args.out)
    logger.info(
        "wrote %s: %d videos, %.3f projected hours",
        args.out,
        len(plan.entries),
        plan.projected_cost_hours,
    )
    return 0


def _cmd_cost(args) -> int:
    plan = sel.read_plan(args.plan)
    hours = sel.plan_cost(
        plan, _load_costs(args.costs), args.mean_frames, use_masks=args.masks
    )
    print(f"{hours} hours")
    return 0


def _cmd_simulate(args) -> int:
    scenes = camp.generate_scene_set(
        args.scenes, args.seed, difficulty_ramp=args.difficulty_ramp
    )
    bc = sel.BudgetConfig(
        box_pct=args.box_pct,
        scribble_pct=args.scribble_pct,
        tag_pct=args.tag_pct,
        frames_per_video_box=args.frames_box,
        frames_per_video_scribble=args.frames_scribble,
        min_frame_gap=args.min_gap,
    )
    reports = camp.run_campaign(
        scenes,
        args.rounds,
        bc,
        policy=args.policy,
        detector=camp.NoisyOracleDetector(args.noise),
        pseudo_mode=pl.PseudoMode(args.mode),
        seed=args.seed,
        threads=args.threads,
    )
    Path(args.out).write_text(camp.reports_to_json(reports), encoding="utf-8")
    if args.emit_csv:
        camp.reports_to_csv(reports, args.emit_csv)
    logger.info("wrote %s: %d rounds", args.out, len(reports))
    return 0


def _cmd_eval(args) -> int:
    try:
        dets_obj = json.loads(Path(args.detections).read_text(encoding="utf-8"))
        gt_obj = json.loads(Path(args.ground_truth).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON in metrics input: {exc}") from exc
    if args.mode == "frame":
        dets = [
            (int(d["frame"]), tuple(d["box"]), int(d["class"]), float(d["confidence"]))
            for d in dets_obj["detections"]
        ]
        gts = [
            (int(g["frame"]), tuple(g["box"]), int(g["class"]))
            for g in gt_obj["annotations"]
        ]
        score = camp.frame_map(dets, gts, args.iou)
    else:
        dets = [
            (
                d["video_id"],
                int(d["class"]),
                float(d["confidence"]),
                {int(f): tuple(b) for f, b in d["boxes"].items()},
            )
            for d in dets_obj["tubes"]
        ]
        gts = [
            (
                g["video_id"],
                int(g["class"]),
                {int(f): tuple(b) for f, b in g["boxes"].items()},
            )
            for g in gt_obj["tubes"]
        ]
        score = camp.video_map(dets, gts, args.iou)
    out = json.dumps({"iou": args.iou, "map": score, "mode": args.mode}, sort_keys=True)
    if args.out:
        Path(args.out).write_text(out + "\n", encoding="utf-8")
    else:
        print(out)
    return 0


_COMMANDS = {
    "superpixel": _cmd_superpixel,
    "pseudolabel": _cmd_pseudolabel,
    "select": _cmd_select,
    "cost": _cmd_cost,
    "simulate": _cmd_simulate,
    "eval": _cmd_eval,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, args.log_level.upper()),
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )
    resolved = {k: v for k, v in sorted(vars(args).items())}
    logger.info("config: %s", json.dumps(resolved, sort_keys=True, default=str))
    try:
        return _COMMANDS[args.command](args)
    except (ValidationError, FormatError) as exc:
        logger.error("%s", exc)
        return 1
    except ConfigurationError as exc:
        logger.error("%s", exc)
        return 2
    except OmvidError as exc:  # any future subclass defaults to data error
        logger.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
