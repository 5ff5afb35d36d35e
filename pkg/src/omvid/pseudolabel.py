"""Dense per-frame pseudo-labels from sparse annotations.

Scribbles and points expand through 3D superpixels; boxes interpolate
linearly between annotated frames; masks interpolate by blending signed
distance fields.  Every generated frame carries a weight that decays with
temporal distance to the nearest human-annotated frame, plus a provenance
tag recording which channel produced it.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_left
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.ndimage import distance_transform_edt

from .datamodel import (
    AnnotationKind,
    AnnotationRecord,
    Provenance,
    PseudoFrame,
    PseudoLabelSet,
    SuperpixelLabels,
    rle_decode,
    rle_encode,
)
from .errors import ConfigurationError, FormatError, ValidationError

__all__ = [
    "PseudoMode",
    "WeightConfig",
    "expand_sparse",
    "interpolate_boxes",
    "interpolate_masks",
    "scribble_to_box",
    "build_pseudolabels",
    "write_pseudolabels",
    "read_pseudolabels",
]


class PseudoMode(Enum):
    SUPERPIXEL = "superpixel"
    SCRIBBLE_BOX = "scribblebox"


@dataclass(frozen=True)
class WeightConfig:
    """Frame weight w(d) = max(decay**d, floor) for temporal distance d."""

    decay: float = 0.9
    floor: float = 0.1

    def __post_init__(self) -> None:
        if not (0.0 < self.decay <= 1.0):
            raise ConfigurationError(f"decay must be in (0, 1], got {self.decay}")
        if not (0.0 <= self.floor < 1.0):
            raise ConfigurationError(f"floor must be in [0, 1), got {self.floor}")

    def weight(self, distance: int) -> float:
        if distance <= 0:
            return 1.0
        return max(self.decay**distance, self.floor)


def _round_half_away(x: float) -> int:
    if x >= 0:
        return int(math.floor(x + 0.5))
    return -int(math.floor(-x + 0.5))


def expand_sparse(
    sp: SuperpixelLabels, pixels: set[tuple[int, int, int]]
) -> tuple[np.ndarray, np.ndarray]:
    """Grow a sparse (frame, x, y) pixel set to whole superpixels.

    Returns the sorted array of touched superpixel labels and the boolean
    T x H x W union of their voxels.  A point is just a 1-pixel set.
    """
    if not pixels:
        raise ValidationError("sparse annotation requires at least one pixel")
    t, h, w = sp.shape
    pts = np.array(sorted(pixels), dtype=np.int64)
    fr, xs, ys = pts[:, 0], pts[:, 1], pts[:, 2]
    if (
        fr.min() < 0
        or fr.max() >= t
        or xs.min() < 0
        or xs.max() >= w
        or ys.min() < 0
        or ys.max() >= h
    ):
        raise ValidationError("sparse pixel outside volume bounds")
    touched = np.unique(sp.labels[fr, ys, xs])
    mask = np.isin(sp.labels, touched)
    return touched, mask


def scribble_to_box(pixels) -> tuple[int, int, int, int]:
    """Tight axis-aligned bounding box of a scribble's pixels."""
    pts = list(pixels)
    if not pts:
        raise ValidationError("scribble requires at least one pixel")
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    return (min(xs), min(ys), max(xs), max(ys))


def _check_frames(frames: list[int], total_frames: int) -> None:
    if not frames:
        raise ValidationError("need at least one annotated frame")
    for a, b in zip(frames, frames[1:]):
        if a == b:
            raise ValidationError(f"duplicate annotated frame {a}")
        if a > b:
            raise ValidationError("annotated frames must be sorted increasing")
    if frames[0] < 0 or frames[-1] >= total_frames:
        raise ValidationError(
            f"annotated frames {frames} outside [0, {total_frames})"
        )


def _nearest_distance(frames: list[int], t: int) -> int:
    i = bisect_left(frames, t)
    best = math.inf
    if i < len(frames):
        best = frames[i] - t
    if i > 0:
        best = min(best, t - frames[i - 1])
    return int(best)


def interpolate_boxes(
    anns: list[tuple[int, tuple[int, int, int, int]]],
    total_frames: int,
    wc: WeightConfig,
    video_id: str = "",
) -> PseudoLabelSet:
    """Fill all frames with boxes: linear between annotations, replicated
    beyond the annotated span, with distance-decayed weights."""
    anns = sorted(anns)
    frames = [f for f, _ in anns]
    _check_frames(frames, total_frames)
    boxes = {f: tuple(int(v) for v in b) for f, b in anns}
    out: dict[int, PseudoFrame] = {}
    for t in range(total_frames):
        if t in boxes:
            out[t] = PseudoFrame(t, 1.0, Provenance.REAL, box=boxes[t])
            continue
        i = bisect_left(frames, t)
        if i == 0:
            box = boxes[frames[0]]
        elif i == len(frames):
            box = boxes[frames[-1]]
        else:
            fa, fb = frames[i - 1], frames[i]
            alpha = (t - fa) / (fb - fa)
            ba, bb = boxes[fa], boxes[fb]
            box = tuple(
                _round_half_away(a + alpha * (b - a)) for a, b in zip(ba, bb)
            )
        weight = wc.weight(_nearest_distance(frames, t))
        out[t] = PseudoFrame(t, weight, Provenance.BOX_INTERP, box=box)
    return PseudoLabelSet(video_id, out)


def _signed_distance(mask: np.ndarray) -> np.ndarray:
    """Euclidean signed distance, negative inside the mask."""
    mask = np.asarray(mask, dtype=bool)
    return distance_transform_edt(~mask) - distance_transform_edt(mask)


def interpolate_masks(
    anns: list[tuple[int, np.ndarray]],
    total_frames: int,
    wc: WeightConfig,
    video_id: str = "",
) -> PseudoLabelSet:
    """Fill all frames with masks via signed-distance-field blending."""
    anns = sorted(anns, key=lambda fb: fb[0])
    frames = [f for f, _ in anns]
    _check_frames(frames, total_frames)
    masks = {}
    for f, m in anns:
        m = np.asarray(m, dtype=bool)
        if not m.any():
            raise ValidationError(f"mask at frame {f} is empty")
        masks[f] = m
    sdf = {f: _signed_distance(m) for f, m in masks.items()}
    out: dict[int, PseudoFrame] = {}
    for t in range(total_frames):
        if t in masks:
            out[t] = PseudoFrame(t, 1.0, Provenance.REAL, mask=masks[t])
            continue
        i = bisect_left(frames, t)
        if i == 0:
            mask = masks[frames[0]].copy()
        elif i == len(frames):
            mask = masks[frames[-1]].copy()
        else:
            fa, fb = frames[i - 1], frames[i]
            alpha = (t - fa) / (fb - fa)
            blend = (1.0 - alpha) * sdf[fa] + alpha * sdf[fb]
            mask = blend < 0.0
        weight = wc.weight(_nearest_distance(frames, t))
        out[t] = PseudoFrame(t, weight, Provenance.MASK_INTERP, mask=mask)
    return PseudoLabelSet(video_id, out)


# Frame-wise merge precedence: a channel annotated at that very frame wins
# over any interpolated or expanded one; beyond that the finer geometry
# channel wins (mask > box > scribble/point expansion).
_CHANNEL_RANK = {"mask": 3, "box": 2, "sparse": 1}


def build_pseudolabels(
    rec: AnnotationRecord,
    sp: SuperpixelLabels | None = None,
    wc: WeightConfig = WeightConfig(),
    mode: PseudoMode = PseudoMode.SUPERPIXEL,
    total_frames: int | None = None,
) -> PseudoLabelSet:
    """Dispatch a record's entries to the per-kind pseudo-label generators
    and merge the per-channel outputs frame-wise.

    `total_frames` defaults to the superpixel volume's depth, or to the last
    annotated frame + 1 when no volume is given.
    """
    if rec.is_tag_only():
        raise ValidationError(f"{rec.video_id}: tag-only record has no pseudo-labels")
    if total_frames is None:
        if sp is not None:
            total_frames = sp.shape[0]
        else:
            total_frames = max(e.frame for e in rec.entries) + 1

    box_anns: list[tuple[int, tuple]] = []
    mask_anns: list[tuple[int, np.ndarray]] = []
    sparse_by_frame: dict[int, list[tuple[int, int]]] = {}
    for e in rec.entries:
        if e.kind is AnnotationKind.BOX:
            box_anns.append((e.frame, e.payload))
        elif e.kind is AnnotationKind.MASK:
            mask_anns.append((e.frame, e.payload))
        elif e.kind is AnnotationKind.POINT:
            sparse_by_frame.setdefault(e.frame, []).append(e.payload)
        else:
            sparse_by_frame.setdefault(e.frame, []).extend(e.payload)

    # channel name -> (annotated frame set, per-frame pseudo labels)
    channels: list[tuple[str, set[int], PseudoLabelSet]] = []
    if mask_anns:
        channels.append(
            (
                "mask",
                {f for f, _ in mask_anns},
                interpolate_masks(mask_anns, total_frames, wc, rec.video_id),
            )
        )
    if box_anns:
        channels.append(
            (
                "box",
                {f for f, _ in box_anns},
                interpolate_boxes(box_anns, total_frames, wc, rec.video_id),
            )
        )
    if sparse_by_frame:
        if mode is PseudoMode.SUPERPIXEL:
            if sp is None:
                raise ConfigurationError(
                    "superpixel mode requires a superpixel volume for scribble/point entries"
                )
            pixels = {
                (f, x, y) for f, pts in sparse_by_frame.items() for x, y in pts
            }
            _, union = expand_sparse(sp, pixels)
            ann_frames = sorted(sparse_by_frame)
            frames: dict[int, PseudoFrame] = {}
            for t in range(total_frames):
                plane = union[t]
                if not plane.any():
                    continue
                weight = wc.weight(_nearest_distance(ann_frames, t))
                frames[t] = PseudoFrame(
                    t, weight, Provenance.SUPERPIXEL, mask=plane.copy()
                )
            channels.append(
                ("sparse", set(sparse_by_frame), PseudoLabelSet(rec.video_id, frames))
            )
        else:
            fitted = [
                (f, scribble_to_box(pts)) for f, pts in sorted(sparse_by_frame.items())
            ]
            interp = interpolate_boxes(fitted, total_frames, wc, rec.video_id)
            frames = {
                t: PseudoFrame(t, pf.weight, Provenance.SCRIBBLE_BOX, box=pf.box)
                for t, pf in interp.frames.items()
            }
            channels.append(
                ("sparse", set(sparse_by_frame), PseudoLabelSet(rec.video_id, frames))
            )

    merged: dict[int, PseudoFrame] = {}
    rank: dict[int, tuple[int, int]] = {}
    for name, annotated, ch in channels:
        for t, pf in ch.frames.items():
            key = (1 if t in annotated else 0, _CHANNEL_RANK[name])
            if t not in merged or key > rank[t]:
                merged[t] = pf
                rank[t] = key
    return PseudoLabelSet(rec.video_id, merged)


# ---------------------------------------------------------------------------
# JSON-lines serialization (.plj)
# ---------------------------------------------------------------------------


def _frame_to_json(video_id: str, pf: PseudoFrame) -> str:
    obj: dict = {
        "video_id": video_id,
        "frame": pf.frame,
        "weight": pf.weight,
        "provenance": pf.provenance.value,
    }
    if pf.box is not None:
        obj["box"] = list(pf.box)
    else:
        m = pf.mask
        obj["mask"] = {
            "rle": rle_encode(m),
            "height": int(m.shape[0]),
            "width": int(m.shape[1]),
        }
    return json.dumps(obj, sort_keys=True)


def write_pseudolabels(sets: list[PseudoLabelSet], file: str | Path) -> None:
    lines = []
    for ps in sets:
        for pf in ps.sorted_frames():
            lines.append(_frame_to_json(ps.video_id, pf))
    Path(file).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_pseudolabels(file: str | Path) -> list[PseudoLabelSet]:
    by_video: dict[str, dict[int, PseudoFrame]] = {}
    order: list[str] = []
    with open(file, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                vid = obj["video_id"]
                frame = int(obj["frame"])
                weight = float(obj["weight"])
                prov = Provenance(obj["provenance"])
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise FormatError(f"line {lineno}: malformed pseudo-label") from exc
            if "box" in obj:
                pf = PseudoFrame(frame, weight, prov, box=tuple(obj["box"]))
            elif "mask" in obj:
                m = obj["mask"]
                bitmap = rle_decode(m["rle"], (int(m["height"]), int(m["width"])))
                pf = PseudoFrame(frame, weight, prov, mask=bitmap)
            else:
                raise FormatError(f"line {lineno}: neither box nor mask present")
            if vid not in by_video:
                by_video[vid] = {}
                order.append(vid)
            by_video[vid][frame] = pf
    return [PseudoLabelSet(vid, by_video[vid]) for vid in order]
