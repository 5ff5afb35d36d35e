"""Desk-scale annotation-campaign simulator.

Synthetic scenes contain one moving, size-drifting rectangle actor on a
textured background; its class is the motion direction and its ground truth
is exact by construction.  A noise-corrupted oracle stands in for a trained
detector: it emits the ground-truth mask plus Gaussian noise, which drives
both the uncertainty maps used for selection and the detections scored by
frame/video mAP.  Each round selects videos and frames, acquires the bucket's
annotation kind from the ground truth (boxes directly, scribbles as a
medial-axis stroke), rebuilds pseudo-labels, and accumulates cost.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import label as _ndimage_label
from skimage.morphology import medial_axis

from .datamodel import (
    AnnotationEntry,
    AnnotationKind,
    AnnotationRecord,
    CostTable,
    DatasetSplit,
    VideoVolume,
)
from .errors import ParameterError, ValidationError
from .pseudolabel import PseudoMode, WeightConfig, build_pseudolabels
from .selection import (
    Bucket,
    BudgetConfig,
    SelectionPlan,
    UncertaintyVolume,
    plan_cost,
    select,
    video_uncertainty,
)
from .superpixel3d import SlicConfig, segment

__all__ = [
    "SceneParams",
    "SyntheticScene",
    "NoisyOracleDetector",
    "RoundReport",
    "generate_scene",
    "generate_scene_set",
    "synthesize_scribble",
    "box_iou",
    "mask_iou",
    "frame_map",
    "video_map",
    "run_campaign",
    "reports_to_json",
    "reports_to_csv",
]

logger = logging.getLogger(__name__)

# Motion-direction classes for the synthetic actor.
_DIRECTIONS = {0: (1.0, 0.0), 1: (-1.0, 0.0), 2: (0.0, 1.0), 3: (0.0, -1.0)}


@dataclass(frozen=True)
class SceneParams:
    """Geometry and appearance ranges for synthetic scenes."""

    frames: int = 8
    height: int = 48
    width: int = 48
    actor_width: tuple[int, int] = (14, 20)
    actor_height: tuple[int, int] = (7, 10)
    speed: tuple[float, float] = (0.5, 1.5)
    size_drift: tuple[float, float] = (-0.4, 0.4)
    texture_amp: float = 2.0
    contrast: float = 45.0

    def __post_init__(self) -> None:
        if self.frames < 4:
            raise ParameterError("scenes need at least 4 frames")
        if self.actor_width[1] + 2 >= self.width or self.actor_height[1] + 2 >= self.height:
            raise ParameterError("actor does not fit inside the frame")
        if self.contrast < 30.0:
            raise ParameterError("actor/background contrast must be >= 30 CIELAB units")
        if self.texture_amp < 0.0:
            raise ParameterError("texture amplitude must be >= 0")


@dataclass(frozen=True)
class SyntheticScene:
    """A generated video with exact ground truth."""

    seed: int
    video_id: str
    volume: VideoVolume
    class_id: int
    gt_boxes: tuple[tuple[int, int, int, int], ...]  # per frame
    gt_masks: np.ndarray  # (T, H, W) bool
    params: SceneParams


def _actor_rect(
    x0: float, y0: float, w: float, h: float, width: int, height: int
) -> tuple[int, int, int, int]:
    xmin = int(round(x0))
    ymin = int(round(y0))
    xmax = min(width - 1, xmin + max(3, int(round(w))) - 1)
    ymax = min(height - 1, ymin + max(3, int(round(h))) - 1)
    return xmin, ymin, xmax, ymax


def generate_scene(seed: int, params: SceneParams = SceneParams()) -> SyntheticScene:
    """Deterministically build one scene from a seed."""
    rng = np.random.default_rng(seed)
    t, h, w = params.frames, params.height, params.width
    class_id = int(rng.integers(0, 4))
    dx, dy = _DIRECTIONS[class_id]
    speed = float(rng.uniform(*params.speed))
    aw = float(rng.integers(params.actor_width[0], params.actor_width[1] + 1))
    ah = float(rng.integers(params.actor_height[0], params.actor_height[1] + 1))
    drift_w = float(rng.uniform(*params.size_drift))
    drift_h = float(rng.uniform(*params.size_drift)) / 2.0

    # Shrink speed/drift until some start position keeps the actor in frame
    # for the whole clip; the ranges above make this converge immediately
    # for sane parameter choices.
    for _ in range(32):
        max_w = aw + max(0.0, drift_w * (t - 1))
        max_h = ah + max(0.0, drift_h * (t - 1))
        span_x = abs(dx) * speed * (t - 1)
        span_y = abs(dy) * speed * (t - 1)
        if max_w + span_x < w - 2 and max_h + span_y < h - 2:
            break
        speed *= 0.7
        drift_w *= 0.7
        drift_h *= 0.7
    else:
        raise ParameterError("could not fit the actor trajectory inside the frame")

    x_lo = 1.0 + (span_x if dx < 0 else 0.0)
    x_hi = w - 2.0 - max_w - (span_x if dx > 0 else 0.0)
    y_lo = 1.0 + (span_y if dy < 0 else 0.0)
    y_hi = h - 2.0 - max_h - (span_y if dy > 0 else 0.0)
    x0 = float(rng.uniform(x_lo, max(x_lo, x_hi)))
    y0 = float(rng.uniform(y_lo, max(y_lo, y_hi)))

    bg_l = float(rng.uniform(45.0, 65.0))
    bg_a = float(rng.uniform(-12.0, 12.0))
    bg_b = float(rng.uniform(-12.0, 12.0))
    sign = 1.0 if bg_l < 50.0 else -1.0
    actor_lab = np.array(
        [
            bg_l + sign * params.contrast,
            bg_a + float(rng.uniform(-8.0, 8.0)),
            bg_b + float(rng.uniform(-8.0, 8.0)),
        ]
    )
    texture = rng.uniform(-1.0, 1.0, size=(h, w, 3)) * params.texture_amp
    actor_noise = rng.uniform(-1.0, 1.0, size=(h, w, 3)) * (params.texture_amp / 2.0)

    voxels = np.empty((t, h, w, 3))
    gt_masks = np.zeros((t, h, w), dtype=bool)
    gt_boxes = []
    for i in range(t):
        frame = np.array([bg_l, bg_a, bg_b]) + texture
        xmin, ymin, xmax, ymax = _actor_rect(
            x0 + dx * speed * i, y0 + dy * speed * i, aw + drift_w * i, ah + drift_h * i, w, h
        )
        frame[ymin : ymax + 1, xmin : xmax + 1] = (
            actor_lab + actor_noise[ymin : ymax + 1, xmin : xmax + 1]
        )
        voxels[i] = frame
        gt_masks[i, ymin : ymax + 1, xmin : xmax + 1] = True
        gt_boxes.append((xmin, ymin, xmax, ymax))
    voxels[..., 0] = np.clip(voxels[..., 0], 0.0, 100.0)
    voxels[..., 1:] = np.clip(voxels[..., 1:], -120.0, 120.0)

    vid = f"scene{seed:06d}"
    return SyntheticScene(
        seed, vid, VideoVolume(vid, voxels), class_id, tuple(gt_boxes), gt_masks, params
    )


def generate_scene_set(
    count: int, seed: int, params: SceneParams = SceneParams(), difficulty_ramp: float = 0.0
) -> list[SyntheticScene]:
    """Generate `count` scenes with seeds seed..seed+count-1.

    A positive difficulty ramp makes later-indexed scenes harder for
    appearance-based pseudo-labeling: their texture amplitude grows (sharply
    toward the end of the list, quartic ramp) and their actor contrast decays
    toward the 30-unit floor.  This mirrors how real pools mix easy and hard
    videos.
    """
    scenes = []
    for i in range(count):
        frac = i / max(count - 1, 1)
        if difficulty_ramp > 0.0:
            p = SceneParams(
                frames=params.frames,
                height=params.height,
                width=params.width,
                actor_width=params.actor_width,
                actor_height=params.actor_height,
                speed=params.speed,
                size_drift=params.size_drift,
                texture_amp=params.texture_amp * (1.0 + difficulty_ramp * frac**4),
                contrast=max(30.0, params.contrast - (params.contrast - 30.0) * frac**4),
            )
        else:
            p = params
        scenes.append(generate_scene(seed + i, p))
    return scenes


def synthesize_scribble(mask: np.ndarray) -> tuple[tuple[int, int], ...]:
    """A human-like stroke over a mask: the longest path along its medial axis."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValidationError("cannot scribble an empty mask")
    skel = medial_axis(mask)
    pts = [(int(x), int(y)) for y, x in np.argwhere(skel)]
    if not pts:
        y, x = np.argwhere(mask)[0]
        return ((int(x), int(y)),)
    pixel_set = set(pts)

    def neighbors(p):
        x, y = p
        out = []
        for ddy in (-1, 0, 1):
            for ddx in (-1, 0, 1):
                if ddx == 0 and ddy == 0:
                    continue
                q = (x + ddx, y + ddy)
                if q in pixel_set:
                    out.append(q)
        return out

    def bfs(start):
        parent = {start: None}
        queue = deque([start])
        last = start
        while queue:
            cur = queue.popleft()
            last = cur
            for q in sorted(neighbors(cur)):
                if q not in parent:
                    parent[q] = cur
                    queue.append(q)
        return last, parent

    far, _ = bfs(min(pts))
    end, parent = bfs(far)
    path = []
    cur: tuple[int, int] | None = end
    while cur is not None:
        path.append(cur)
        cur = parent[cur]
    return tuple(reversed(path))


# ---------------------------------------------------------------------------
# Detection metrics
# ---------------------------------------------------------------------------


def box_iou(a: tuple[int, int, int, int], b: tuple[int, int, int, int]) -> float:
    ix = min(a[2], b[2]) - max(a[0], b[0]) + 1
    iy = min(a[3], b[3]) - max(a[1], b[1]) + 1
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    area_a = (a[2] - a[0] + 1) * (a[3] - a[1] + 1)
    area_b = (b[2] - b[0] + 1) * (b[3] - b[1] + 1)
    return inter / float(area_a + area_b - inter)


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    union = np.count_nonzero(a | b)
    if union == 0:
        return 0.0
    return np.count_nonzero(a & b) / float(union)


def _average_precision(tp_flags: list[bool], n_gt: int) -> float:
    """Area under the all-points interpolated precision/recall curve."""
    if n_gt == 0:
        return 0.0
    if not tp_flags:
        return 0.0
    tp = np.cumsum([1.0 if f else 0.0 for f in tp_flags])
    fp = np.cumsum([0.0 if f else 1.0 for f in tp_flags])
    recall = tp / n_gt
    precision = tp / (tp + fp)
    # p_interp(r) = max precision at recall >= r
    pmax = np.maximum.accumulate(precision[::-1])[::-1]
    prev_r = 0.0
    ap = 0.0
    for r, p in zip(recall, pmax):
        ap += (r - prev_r) * p
        prev_r = r
    return float(ap)


def _check_tau(tau: float) -> None:
    if not (0.0 < tau <= 1.0):
        raise ParameterError(f"IoU threshold must be in (0, 1], got {tau}")


def frame_map(
    detections: list[tuple[int, tuple[int, int, int, int], int, float]],
    ground_truth: list[tuple[int, tuple[int, int, int, int], int]],
    iou_threshold: float,
) -> float:
    """Frame-level mean average precision over classes present in the GT.

    Detections are (frame, box, class, confidence); a detection is a true
    positive when it greedily (highest confidence first) matches an unmatched
    same-frame same-class GT box with IoU >= the threshold.
    """
    _check_tau(iou_threshold)
    for _, _, _, conf in detections:
        if not (0.0 <= conf <= 1.0):
            raise ValidationError(f"confidence {conf} outside [0, 1]")
    classes = sorted({c for _, _, c in ground_truth})
    if not classes:
        return 0.0
    aps = []
    for cls in classes:
        gts = [(f, b) for f, b, c in ground_truth if c == cls]
        dets = sorted(
            ((f, b, conf) for f, b, c, conf in detections if c == cls),
            key=lambda d: (-d[2], d[0], d[1]),
        )
        matched = [False] * len(gts)
        flags = []
        for f, b, _ in dets:
            best_iou = 0.0
            best_j = -1
            for j, (gf, gb) in enumerate(gts):
                if matched[j] or gf != f:
                    continue
                iou = box_iou(b, gb)
                if iou > best_iou:
                    best_iou, best_j = iou, j
            if best_j >= 0 and best_iou >= iou_threshold:
                matched[best_j] = True
                flags.append(True)
            else:
                flags.append(False)
        aps.append(_average_precision(flags, len(gts)))
    return float(np.mean(aps))


def tube_iou(
    boxes_a: dict[int, tuple[int, int, int, int]],
    boxes_b: dict[int, tuple[int, int, int, int]],
) -> float:
    """Mean per-frame IoU over the union of the two tubes' frame spans."""
    frames = set(boxes_a) | set(boxes_b)
    if not frames:
        return 0.0
    total = 0.0
    for f in frames:
        if f in boxes_a and f in boxes_b:
            total += box_iou(boxes_a[f], boxes_b[f])
    return total / len(frames)


def video_map(
    detections: list[tuple[str, int, float, dict[int, tuple[int, int, int, int]]]],
    ground_truth: list[tuple[str, int, dict[int, tuple[int, int, int, int]]]],
    iou_threshold: float,
) -> float:
    """Video-level mAP with spatio-temporal tube IoU.

    Detections are (video_id, class, confidence, per-frame boxes); matching
    pairs tubes of the same video and class.
    """
    _check_tau(iou_threshold)
    for _, _, conf, _ in detections:
        if not (0.0 <= conf <= 1.0):
            raise ValidationError(f"confidence {conf} outside [0, 1]")
    classes = sorted({c for _, c, _ in ground_truth})
    if not classes:
        return 0.0
    aps = []
    for cls in classes:
        gts = [(v, b) for v, c, b in ground_truth if c == cls]
        dets = sorted(
            ((v, conf, b) for v, c, conf, b in detections if c == cls),
            key=lambda d: (-d[1], d[0]),
        )
        matched = [False] * len(gts)
        flags = []
        for v, _, boxes in dets:
            best_iou = 0.0
            best_j = -1
            for j, (gv, gb) in enumerate(gts):
                if matched[j] or gv != v:
                    continue
                iou = tube_iou(boxes, gb)
                if iou > best_iou:
                    best_iou, best_j = iou, j
            if best_j >= 0 and best_iou >= iou_threshold:
                matched[best_j] = True
                flags.append(True)
            else:
                flags.append(False)
        aps.append(_average_precision(flags, len(gts)))
    return float(np.mean(aps))


# ---------------------------------------------------------------------------
# Campaign loop
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NoisyOracleDetector:
    """Ground truth corrupted by Gaussian noise with per-scene sigma spread."""

    sigma: float = 0.3

    def __post_init__(self) -> None:
        if self.sigma < 0.0:
            raise ParameterError("sigma must be >= 0")

    def scene_sigma(self, index: int, count: int) -> float:
        # Later-indexed scenes get noisier maps so the pool has score spread.
        return self.sigma * (0.5 + index / max(count - 1, 1))

    def maps(self, scene: SyntheticScene, sigma: float, rng: np.random.Generator) -> np.ndarray:
        noise = rng.normal(0.0, sigma, size=scene.gt_masks.shape) if sigma > 0 else 0.0
        return np.clip(scene.gt_masks.astype(np.float64) + noise, 0.0, 1.0)


@dataclass(frozen=True)
class RoundReport:
    round_index: int
    cumulative_cost_hours: float
    mean_pseudo_iou: float
    f_map: dict[float, float]
    v_map: dict[float, float]
    n_labeled: int
    warning: str | None = None


def _detections_from_maps(
    maps: np.ndarray, class_id: int
) -> tuple[list, dict[int, tuple[int, int, int, int]], float]:
    """Per-frame boxes from binarized maps, plus the tube and its confidence.

    The box covers the largest connected foreground component so detection
    quality degrades gracefully as noise flips isolated background pixels.
    """
    frame_dets = []
    tube: dict[int, tuple[int, int, int, int]] = {}
    confs = []
    for f in range(maps.shape[0]):
        binary = maps[f] >= 0.5
        if not binary.any():
            continue
        comp, ncomp = _ndimage_label(binary)
        sizes = np.bincount(comp.ravel())[1:]
        largest = int(np.argmax(sizes)) + 1
        ys, xs = np.nonzero(comp == largest)
        box = (int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))
        conf = float(
            np.clip(maps[f][box[1] : box[3] + 1, box[0] : box[2] + 1].mean(), 0.0, 1.0)
        )
        frame_dets.append((f, box, class_id, conf))
        tube[f] = box
        confs.append(conf)
    tube_conf = float(np.mean(confs)) if confs else 0.0
    return frame_dets, tube, tube_conf


def _box_to_mask(box: tuple[int, int, int, int], shape: tuple[int, int]) -> np.ndarray:
    out = np.zeros(shape, dtype=bool)
    out[box[1] : box[3] + 1, box[0] : box[2] + 1] = True
    return out


def _pseudo_iou(scene: SyntheticScene, pseudo) -> float:
    """Mean per-frame IoU of the pseudo geometry against the GT mask."""
    vals = []
    h, w = scene.gt_masks.shape[1:]
    for pf in pseudo.sorted_frames():
        geom = pf.mask if pf.mask is not None else _box_to_mask(pf.box, (h, w))
        vals.append(mask_iou(geom, scene.gt_masks[pf.frame]))
    return float(np.mean(vals)) if vals else 0.0


def run_campaign(
    scenes: list[SyntheticScene],
    rounds: int,
    bc: BudgetConfig,
    policy: str = "bucket",
    detector: NoisyOracleDetector = NoisyOracleDetector(),
    ct: CostTable | None = None,
    pseudo_mode: PseudoMode = PseudoMode.SUPERPIXEL,
    slic_cfg: SlicConfig = SlicConfig(
        interval=8, compactness=10.0, temporal_scale=0.375, min_region=10
    ),
    wc: WeightConfig = WeightConfig(),
    seed: int = 0,
    threads: int = 1,
    superpixel_cache: dict | None = None,
) -> list[RoundReport]:
    """Simulate `rounds` of annotation acquisition against the GT oracle.

    Returns one report per round with cumulative cost, mean pseudo-label IoU
    over the labeled videos, and frame/video mAP of the noisy detector
    restricted to labeled data.  Deterministic for fixed seeds.

    `superpixel_cache` (video_id -> SuperpixelLabels) may be shared between
    calls that reuse the same scenes and SLIC config; segmentation is
    deterministic so caching cannot change results.
    """
    if rounds < 0:
        raise ParameterError("rounds must be >= 0")
    if rounds == 0:
        return []
    ct = ct if ct is not None else CostTable()
    by_id = {s.video_id: s for s in scenes}
    scene_index = {s.video_id: i for i, s in enumerate(scenes)}
    labeled: set[str] = set()
    annotations: dict[str, AnnotationRecord] = {}
    superpixels: dict[str, object] = superpixel_cache if superpixel_cache is not None else {}
    pseudo_iou_cache: dict[str, float] = {}

    def get_superpixels(vid: str):
        if vid not in superpixels:
            superpixels[vid] = segment(by_id[vid].volume, slic_cfg)
        return superpixels[vid]

    if threads > 1 and pseudo_mode is PseudoMode.SUPERPIXEL:
        todo = [vid for vid in by_id if vid not in superpixels]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for vid, sp in zip(
                todo, pool.map(lambda v: segment(by_id[v].volume, slic_cfg), todo)
            ):
                superpixels[vid] = sp

    reports: list[RoundReport] = []
    cumulative = 0.0
    for rnd in range(1, rounds + 1):
        warning = None
        unlabeled = sorted(set(by_id) - labeled)
        split = DatasetSplit(frozenset(labeled), frozenset(unlabeled), rnd)

        det_rng = np.random.default_rng(
            np.random.SeedSequence([seed, 1000 + rnd])
        )
        maps_by_vid = {}
        for vid in sorted(by_id):
            sigma = detector.scene_sigma(scene_index[vid], len(scenes))
            maps_by_vid[vid] = detector.maps(by_id[vid], sigma, det_rng)

        scores = {}
        frame_scores = {}
        for vid in unlabeled:
            maps = maps_by_vid[vid]
            u = (maps - (maps >= 0.5)) ** 2
            scores[vid] = video_uncertainty(UncertaintyVolume(vid, u))
            frame_scores[vid] = u.sum(axis=(1, 2))

        if unlabeled:
            plan = select(
                split,
                scores,
                bc,
                frame_scores,
                policy=policy,
                seed=seed + rnd,
                cost_table=ct,
                truncate=True,
            )
            requested = (
                _requested_count(bc.box_pct, len(by_id))
                + _requested_count(bc.scribble_pct, len(by_id))
                + _requested_count(bc.tag_pct, len(by_id))
            )
            if requested > len(unlabeled):
                warning = (
                    f"round {rnd}: requested {requested} videos, only "
                    f"{len(unlabeled)} unlabeled; plan truncated"
                )
                logger.warning(warning)
        else:
            plan = SelectionPlan(rnd, policy, ())
            warning = f"round {rnd}: candidate pool exhausted"
            logger.warning(warning)

        for entry in plan.entries:
            scene = by_id[entry.video_id]
            if entry.bucket is Bucket.TAG:
                entries: tuple[AnnotationEntry, ...] = ()
            elif entry.bucket is Bucket.BOX:
                entries = tuple(
                    AnnotationEntry(f, AnnotationKind.BOX, scene.gt_boxes[f])
                    for f in entry.frames
                )
            else:
                entries = tuple(
                    AnnotationEntry(
                        f,
                        AnnotationKind.SCRIBBLE,
                        synthesize_scribble(scene.gt_masks[f]),
                    )
                    for f in entry.frames
                )
            annotations[entry.video_id] = AnnotationRecord(
                entry.video_id, scene.class_id, entries
            )
            labeled.add(entry.video_id)

        cumulative += plan_cost(plan, ct)

        ious = []
        for vid in sorted(labeled):
            rec = annotations[vid]
            if rec.is_tag_only():
                continue
            if vid not in pseudo_iou_cache:
                sp = (
                    get_superpixels(vid)
                    if pseudo_mode is PseudoMode.SUPERPIXEL
                    else None
                )
                pseudo = build_pseudolabels(
                    rec,
                    sp=sp,
                    wc=wc,
                    mode=pseudo_mode,
                    total_frames=by_id[vid].params.frames,
                )
                pseudo_iou_cache[vid] = _pseudo_iou(by_id[vid], pseudo)
            ious.append(pseudo_iou_cache[vid])
        mean_iou = float(np.mean(ious)) if ious else 0.0

        tube_dets = []
        tube_gts = []
        for vid in sorted(labeled):
            scene = by_id[vid]
            _, tube, tconf = _detections_from_maps(maps_by_vid[vid], scene.class_id)
            tube_dets.append((vid, scene.class_id, tconf, tube))
            tube_gts.append((vid, scene.class_id, dict(enumerate(scene.gt_boxes))))
        frame_dets, frame_gts = _offset_frames(sorted(labeled), by_id, maps_by_vid)

        f_scores = {}
        v_scores = {}
        for tau in (0.2, 0.5):
            if labeled:
                f_scores[tau] = frame_map(frame_dets, frame_gts, tau)
                v_scores[tau] = video_map(tube_dets, tube_gts, tau)
            else:
                f_scores[tau] = 0.0
                v_scores[tau] = 0.0

        reports.append(
            RoundReport(
                round_index=rnd,
                cumulative_cost_hours=cumulative,
                mean_pseudo_iou=mean_iou,
                f_map=f_scores,
                v_map=v_scores,
                n_labeled=len(labeled),
                warning=warning,
            )
        )
    return reports


def _requested_count(pct: float, n_total: int) -> int:
    x = pct * n_total / 100.0
    return int(math.floor(x + 0.5))


def _offset_frames(labeled: list[str], by_id, maps_by_vid):
    """Give every (video, frame) a unique frame id for frame-level mAP."""
    dets = []
    gts = []
    for i, vid in enumerate(labeled):
        scene = by_id[vid]
        offset = i * 100_000
        d, _, _ = _detections_from_maps(maps_by_vid[vid], scene.class_id)
        dets.extend((f + offset, b, c, conf) for f, b, c, conf in d)
        gts.extend(
            (f + offset, b, scene.class_id) for f, b in enumerate(scene.gt_boxes)
        )
    return dets, gts


# ---------------------------------------------------------------------------
# Report serialization
# ---------------------------------------------------------------------------


def reports_to_json(reports: list[RoundReport]) -> str:
    obj = [
        {
            "round": r.round_index,
            "cumulative_cost_hours": r.cumulative_cost_hours,
            "mean_pseudo_iou": r.mean_pseudo_iou,
            "f_map": {str(k): v for k, v in sorted(r.f_map.items())},
            "v_map": {str(k): v for k, v in sorted(r.v_map.items())},
            "n_labeled": r.n_labeled,
            "warning": r.warning,
        }
        for r in reports
    ]
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def reports_to_csv(reports: list[RoundReport], file: str | Path) -> None:
    with open(file, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "round",
                "cumulative_cost_hours",
                "mean_pseudo_iou",
                "f_map_0.2",
                "f_map_0.5",
                "v_map_0.2",
                "v_map_0.5",
                "n_labeled",
            ]
        )
        for r in reports:
            writer.writerow(
                [
                    r.round_index,
                    r.cumulative_cost_hours,
                    r.mean_pseudo_iou,
                    r.f_map[0.2],
                    r.f_map[0.5],
                    r.v_map[0.2],
                    r.v_map[0.5],
                    r.n_labeled,
                ]
            )
