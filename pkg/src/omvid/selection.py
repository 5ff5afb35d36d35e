"""Uncertainty scoring, bucket-based selection, and man-hour cost accounting.

Candidate videos are ranked by mean per-frame uncertainty (sum over pixels,
averaged over frames).  The top band of the ranking receives box annotation,
the next band scribbles, the rest tags only; per-video frames are picked by
descending frame uncertainty under a minimum-gap constraint.  Costs aggregate
per-type unit seconds over a plan, and `fit_cost_table` recovers unit costs
from published (annotation mix, man-hours) observations by least squares.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .datamodel import CostTable, DatasetSplit
from .errors import BudgetError, CalibrationError, FormatError, ValidationError

__all__ = [
    "Bucket",
    "BudgetConfig",
    "PlanEntry",
    "SelectionPlan",
    "UncertaintyVolume",
    "frame_uncertainty",
    "video_uncertainty",
    "select",
    "plan_cost",
    "fit_cost_table",
    "read_plan",
    "write_plan",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class UncertaintyVolume:
    """Per-pixel non-negative uncertainty maps for one video."""

    video_id: str
    values: np.ndarray  # (T, H, W) floats >= 0

    def __post_init__(self) -> None:
        if self.values.ndim != 3:
            raise ValidationError(f"uncertainty must be (T,H,W), got {self.values.shape}")
        if self.values.min() < 0.0:
            raise ValidationError("uncertainty entries must be non-negative")


def frame_uncertainty(frame: np.ndarray) -> float:
    """Frame score: sum of per-pixel uncertainties."""
    arr = np.asarray(frame, dtype=np.float64)
    if arr.min() < 0.0:
        raise ValidationError("uncertainty entries must be non-negative")
    return float(arr.sum())


def video_uncertainty(uv: UncertaintyVolume) -> float:
    """Video score: mean of the frame scores."""
    return float(np.asarray(uv.values, dtype=np.float64).sum(axis=(1, 2)).mean())


class Bucket(Enum):
    BOX = "box"
    SCRIBBLE = "scribble"
    TAG = "tag"


@dataclass(frozen=True)
class BudgetConfig:
    """Per-round increments as percentages of all known videos."""

    box_pct: float = 0.0
    scribble_pct: float = 0.0
    tag_pct: float = 0.0
    frames_per_video_box: int = 3
    frames_per_video_scribble: int = 3
    min_frame_gap: int = 8

    def __post_init__(self) -> None:
        for name in ("box_pct", "scribble_pct", "tag_pct"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")
        if self.frames_per_video_box < 1 or self.frames_per_video_scribble < 1:
            raise ValidationError("frames per video must be positive")
        if self.min_frame_gap < 1:
            raise ValidationError("min_frame_gap must be >= 1")


@dataclass(frozen=True)
class PlanEntry:
    video_id: str
    score: float
    bucket: Bucket
    frames: tuple[int, ...] = ()
    uniform_fallback: bool = False

    def __post_init__(self) -> None:
        if self.bucket is Bucket.TAG and self.frames:
            raise ValidationError("tag entries carry no frames")


@dataclass(frozen=True)
class SelectionPlan:
    round_index: int
    policy: str
    entries: tuple[PlanEntry, ...]
    projected_cost_hours: float = 0.0

    def __post_init__(self) -> None:
        ids = [e.video_id for e in self.entries]
        if len(ids) != len(set(ids)):
            raise ValidationError("plan selects a video more than once")


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


def _uniform_frames(total: int, count: int) -> tuple[int, ...]:
    if count >= total:
        return tuple(range(total))
    if count == 1:
        return (total // 2,)
    idx = sorted({_round_half_away(i * (total - 1) / (count - 1)) for i in range(count)})
    return tuple(idx)


def _gap_ok(frames, gap: int) -> bool:
    fs = sorted(frames)
    return all(b - a >= gap for a, b in zip(fs, fs[1:]))


def _pick_frames(
    scores: np.ndarray, count: int, gap: int
) -> tuple[tuple[int, ...], bool]:
    """Greedy highest-score-first frame picking under the gap constraint.

    Falls back to uniform spacing when the greedy pick cannot reach the
    requested count; the fallback flag is set whenever the emitted list
    violates the gap constraint or came from the fallback path.
    """
    total = scores.shape[0]
    order = np.lexsort((np.arange(total), -scores))
    picked: list[int] = []
    for f in order:
        f = int(f)
        if all(abs(f - p) >= gap for p in picked):
            picked.append(f)
            if len(picked) == count:
                break
    if len(picked) == count:
        return tuple(sorted(picked)), False
    frames = _uniform_frames(total, count)
    return frames, True


def select(
    split: DatasetSplit,
    scores: dict[str, float],
    bc: BudgetConfig,
    frame_scores: dict[str, np.ndarray],
    policy: str = "bucket",
    seed: int = 0,
    cost_table: CostTable | None = None,
    mean_frames_per_video: float = 0.0,
    truncate: bool = False,
) -> SelectionPlan:
    """Choose videos and frames for the next annotation round.

    Bucket policy ranks unlabeled videos by score (descending, ties by id)
    and slices the ranking into box / scribble / tag bands sized by the
    budget percentages of all known videos.  Random policy draws the same
    band sizes uniformly without replacement from a seeded generator.
    """
    if policy not in ("bucket", "random"):
        raise ValidationError(f"unknown policy {policy!r}")
    candidates = sorted(split.unlabeled)
    missing = [v for v in candidates if v not in scores]
    if missing:
        raise ValidationError(f"missing scores for {missing[:5]}")
    n_total = len(split.all_videos)
    labeled_pct = 100.0 * len(split.labeled) / n_total if n_total else 0.0
    if (
        not truncate
        and bc.box_pct + bc.scribble_pct + bc.tag_pct > 100.0 - labeled_pct + 1e-9
    ):
        raise BudgetError(
            f"requested {bc.box_pct}+{bc.scribble_pct}+{bc.tag_pct}% exceeds the "
            f"{100.0 - labeled_pct:.1f}% still unlabeled"
        )
    n_box = _round_half_away(bc.box_pct * n_total / 100.0)
    n_scribble = _round_half_away(bc.scribble_pct * n_total / 100.0)
    n_tag = _round_half_away(bc.tag_pct * n_total / 100.0)
    if n_box + n_scribble + n_tag > len(candidates):
        if not truncate:
            raise BudgetError(
                f"requested {n_box + n_scribble + n_tag} videos but only "
                f"{len(candidates)} are unlabeled"
            )
        n_box = min(n_box, len(candidates))
        n_scribble = min(n_scribble, len(candidates) - n_box)
        n_tag = min(n_tag, len(candidates) - n_box - n_scribble)

    if policy == "bucket":
        ranked = sorted(candidates, key=lambda v: (-scores[v], v))
    else:
        rng = np.random.default_rng(seed)
        ranked = [candidates[i] for i in rng.permutation(len(candidates))]

    entries: list[PlanEntry] = []
    cursor = 0
    for bucket, count, per_video in (
        (Bucket.BOX, n_box, bc.frames_per_video_box),
        (Bucket.SCRIBBLE, n_scribble, bc.frames_per_video_scribble),
        (Bucket.TAG, n_tag, 0),
    ):
        for vid in ranked[cursor : cursor + count]:
            if bucket is Bucket.TAG:
                entries.append(PlanEntry(vid, scores[vid], bucket))
                continue
            fs = np.asarray(frame_scores[vid], dtype=np.float64)
            if policy == "bucket":
                frames, fallback = _pick_frames(fs, per_video, bc.min_frame_gap)
            else:
                frames = _uniform_frames(fs.shape[0], per_video)
                fallback = not _gap_ok(frames, bc.min_frame_gap)
            entries.append(PlanEntry(vid, scores[vid], bucket, frames, fallback))
        cursor += count

    plan = SelectionPlan(split.round_index, policy, tuple(entries))
    ct = cost_table if cost_table is not None else CostTable()
    return replace(
        plan, projected_cost_hours=plan_cost(plan, ct, mean_frames_per_video)
    )


def plan_cost(
    plan: SelectionPlan,
    ct: CostTable,
    mean_frames_per_video: float = 0.0,
    use_masks: bool = False,
) -> float:
    """Projected man-hours of a plan.

    Box/scribble entries pay their per-frame unit cost for each chosen frame
    (entries with an empty frame list stand for dense annotation and are
    costed at `mean_frames_per_video` frames, which may be fractional); every
    selected video additionally pays the tag cost once, since the class must
    be known to annotate.  Mask campaigns swap the mask unit cost in for
    boxes.
    """
    spatial_unit = ct.mask_s if use_masks else ct.box_s
    seconds = 0.0
    for e in plan.entries:
        seconds += ct.tag_s
        if e.bucket is Bucket.TAG:
            continue
        n_frames = len(e.frames) if e.frames else mean_frames_per_video
        unit = spatial_unit if e.bucket is Bucket.BOX else ct.scribble_s
        seconds += n_frames * unit
    return seconds / 3600.0


_COST_FIELDS = ("tag", "point", "scribble", "box", "mask")


def fit_cost_table(
    observations: list[tuple[dict[str, float], float]],
    base: CostTable | None = None,
) -> CostTable:
    """Least-squares per-type unit costs from (item counts, hours) pairs.

    Only annotation types appearing with a nonzero count become unknowns;
    the rest keep the base table's values.  Raises when the system cannot
    identify every participating type.
    """
    if not observations:
        raise CalibrationError("no observations")
    base = base if base is not None else CostTable()
    present = [
        f
        for f in _COST_FIELDS
        if any(mix.get(f, 0.0) != 0.0 for mix, _ in observations)
    ]
    if not present:
        raise CalibrationError("observations contain no annotation counts")
    if len(observations) < len(present):
        raise CalibrationError(
            f"{len(present)} unit costs but only {len(observations)} observations"
        )
    a = np.array(
        [[float(mix.get(f, 0.0)) for f in present] for mix, _ in observations]
    )
    b = np.array([hours * 3600.0 for _, hours in observations])
    rank = np.linalg.matrix_rank(a)
    if rank < len(present):
        _, s, vt = np.linalg.svd(a)
        null = vt[rank:]
        bad = [present[i] for i in range(len(present)) if np.abs(null[:, i]).max() > 1e-9]
        raise CalibrationError(f"unidentifiable unit costs: {bad}")
    solution, residuals, _, _ = np.linalg.lstsq(a, b, rcond=None)
    fitted = dict(zip(present, solution))
    for name, value in fitted.items():
        if value <= 0.0:
            raise CalibrationError(f"fitted {name} cost is non-positive ({value:.3g} s)")
    pred = a @ solution
    logger.info(
        "cost fit over %s: residuals (hours) = %s",
        present,
        np.array2string((pred - b) / 3600.0, precision=4),
    )
    kwargs = base.as_dict()
    for name, value in fitted.items():
        kwargs[f"{name}_s"] = float(value)
    return CostTable(**kwargs)


# ---------------------------------------------------------------------------
# Plan JSON
# ---------------------------------------------------------------------------


def write_plan(plan: SelectionPlan, file: str | Path) -> None:
    Path(file).write_text(plan_to_json(plan), encoding="utf-8")


def plan_to_json(plan: SelectionPlan) -> str:
    obj = {
        "round": plan.round_index,
        "policy": plan.policy,
        "entries": [
            {
                "video_id": e.video_id,
                "score": e.score,
                "bucket": e.bucket.value,
                "frames": list(e.frames),
                "uniform_fallback": e.uniform_fallback,
            }
            for e in plan.entries
        ],
        "projected_cost_hours": plan.projected_cost_hours,
    }
    return json.dumps(obj, sort_keys=True) + "\n"


def read_plan(file: str | Path) -> SelectionPlan:
    try:
        obj = json.loads(Path(file).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{file}: invalid JSON") from exc
    try:
        entries = tuple(
            PlanEntry(
                e["video_id"],
                float(e["score"]),
                Bucket(e["bucket"]),
                tuple(int(f) for f in e.get("frames", [])),
                bool(e.get("uniform_fallback", False)),
            )
            for e in obj["entries"]
        )
        return SelectionPlan(
            int(obj["round"]),
            obj["policy"],
            entries,
            float(obj.get("projected_cost_hours", 0.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{file}: malformed plan") from exc
