"""Core domain types and bit-exact file I/O.

Holds the video volume (CIELAB voxels), sparse annotation records, the
superpixel label volume, pseudo-label containers, the per-type annotation
cost table, and the codecs for every on-disk format: PNG frame sequences,
JSON-lines annotations with row-major RLE masks, and the binary SPV1/UNC1
volume containers.

All types are treated as immutable after construction; ndarray fields must
not be mutated by callers.
"""

from __future__ import annotations

import json
import re
import struct
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DimensionError, FormatError, ValidationError

__all__ = [
    "AnnotationKind",
    "AnnotationEntry",
    "AnnotationRecord",
    "CostTable",
    "DatasetSplit",
    "Provenance",
    "PseudoFrame",
    "PseudoLabelSet",
    "SuperpixelLabels",
    "VideoVolume",
    "load_video",
    "parse_annotations",
    "serialize_annotations",
    "write_annotations",
    "read_labels",
    "write_labels",
    "read_uncertainty",
    "write_uncertainty",
    "read_split",
    "write_split",
    "rle_decode",
    "rle_encode",
    "srgb_to_lab",
]


# ---------------------------------------------------------------------------
# Color conversion
# ---------------------------------------------------------------------------

# sRGB (D65) linear-light to XYZ, and the D65 reference white.
_SRGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_D65_WHITE = np.array([0.95047, 1.0, 1.08883])


def srgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    """Convert 8-bit sRGB values of shape (..., 3) to CIELAB (D65).

    Pipeline: piecewise 2.4-gamma transfer to linear RGB, linear matrix to
    XYZ, then the cube-root CIE encoding against the D65 white point.
    Returns float64 with L in [0, 100].
    """
    srgb = np.asarray(rgb, dtype=np.float64) / 255.0
    linear = np.where(srgb > 0.04045, ((srgb + 0.055) / 1.055) ** 2.4, srgb / 12.92)
    xyz = linear @ _SRGB_TO_XYZ.T
    ratio = xyz / _D65_WHITE
    delta = 6.0 / 29.0
    f = np.where(ratio > delta**3, np.cbrt(ratio), ratio / (3.0 * delta * delta) + 4.0 / 29.0)
    lab = np.empty_like(f)
    # The published matrix rows sum to the white point only to 7 digits, so
    # white can overshoot L=100 by ~4e-6; clamp to the theoretical range.
    lab[..., 0] = np.clip(116.0 * f[..., 1] - 16.0, 0.0, 100.0)
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VideoVolume:
    """A T x H x W grid of CIELAB voxels for one video."""

    video_id: str
    voxels: np.ndarray  # (T, H, W, 3) float64 CIELAB

    def __post_init__(self) -> None:
        v = self.voxels
        if v.ndim != 4 or v.shape[3] != 3 or min(v.shape[:3]) < 1:
            raise ValidationError(f"voxel array must be (T,H,W,3) with positive dims, got {v.shape}")
        lum = v[..., 0]
        if lum.min() < -1e-9 or lum.max() > 100.0 + 1e-9:
            raise ValidationError("L channel outside [0, 100]")
        chroma = v[..., 1:]
        if chroma.min() < -128.0 or chroma.max() > 127.0:
            raise ValidationError("a/b channels outside [-128, 127]")

    @property
    def depth(self) -> int:
        return self.voxels.shape[0]

    @property
    def height(self) -> int:
        return self.voxels.shape[1]

    @property
    def width(self) -> int:
        return self.voxels.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.voxels.shape[:3]


class AnnotationKind(Enum):
    POINT = "point"
    SCRIBBLE = "scribble"
    BOX = "box"
    MASK = "mask"


@dataclass(frozen=True)
class AnnotationEntry:
    """One per-frame annotation: a point, scribble, box, or mask payload."""

    frame: int
    kind: AnnotationKind
    # POINT: (x, y); SCRIBBLE: tuple of (x, y); BOX: (xmin, ymin, xmax, ymax);
    # MASK: bool ndarray of shape (H, W).
    payload: object

    def __post_init__(self) -> None:
        if self.frame < 0:
            raise ValidationError(f"frame index must be >= 0, got {self.frame}")
        k, p = self.kind, self.payload
        if k is AnnotationKind.POINT:
            x, y = p
            if x < 0 or y < 0:
                raise ValidationError(f"point ({x},{y}) has negative coordinate")
        elif k is AnnotationKind.SCRIBBLE:
            if len(p) < 1:
                raise ValidationError("scribble needs at least one pixel")
            if any(x < 0 or y < 0 for x, y in p):
                raise ValidationError("scribble pixel has negative coordinate")
        elif k is AnnotationKind.BOX:
            xmin, ymin, xmax, ymax = p
            if xmin < 0 or ymin < 0:
                raise ValidationError(f"box {p} has negative coordinate")
            if xmin > xmax or ymin > ymax:
                raise ValidationError(f"box {p} violates min <= max")
        elif k is AnnotationKind.MASK:
            m = np.asarray(p)
            if m.ndim != 2:
                raise ValidationError(f"mask must be 2-D, got shape {m.shape}")


@dataclass(frozen=True)
class AnnotationRecord:
    """One video's sparse labels: a class tag plus optional per-frame entries.

    An empty entry list is a tag-only annotation.
    """

    video_id: str
    class_tag: int
    entries: tuple[AnnotationEntry, ...] = ()

    def __post_init__(self) -> None:
        if self.class_tag < 0:
            raise ValidationError(f"class tag must be >= 0, got {self.class_tag}")
        object.__setattr__(self, "entries", tuple(self.entries))
        seen = set()
        for e in self.entries:
            key = (e.frame, e.kind)
            if key in seen:
                raise ValidationError(
                    f"duplicate ({self.video_id}, frame {e.frame}, {e.kind.value}) entry"
                )
            seen.add(key)

    @property
    def annotated_frames(self) -> tuple[int, ...]:
        return tuple(sorted({e.frame for e in self.entries}))

    def is_tag_only(self) -> bool:
        return not self.entries

    def validate_bounds(self, depth: int, height: int, width: int) -> None:
        """Check every frame index and coordinate against a volume's dims."""
        for e in self.entries:
            if e.frame >= depth:
                raise ValidationError(
                    f"{self.video_id}: frame {e.frame} outside [0, {depth})"
                )
            if e.kind is AnnotationKind.POINT:
                pts = [e.payload]
            elif e.kind is AnnotationKind.SCRIBBLE:
                pts = list(e.payload)
            elif e.kind is AnnotationKind.BOX:
                xmin, ymin, xmax, ymax = e.payload
                pts = [(xmin, ymin), (xmax, ymax)]
            else:
                m = e.payload
                if m.shape != (height, width):
                    raise ValidationError(
                        f"{self.video_id}: frame {e.frame} mask shape {m.shape} != ({height},{width})"
                    )
                continue
            for x, y in pts:
                if not (0 <= x < width and 0 <= y < height):
                    raise ValidationError(
                        f"{self.video_id}: frame {e.frame} coordinate ({x},{y}) outside {width}x{height}"
                    )


@dataclass(frozen=True)
class DatasetSplit:
    """Partition of the known videos into labeled and unlabeled sets."""

    labeled: frozenset[str]
    unlabeled: frozenset[str]
    round_index: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "labeled", frozenset(self.labeled))
        object.__setattr__(self, "unlabeled", frozenset(self.unlabeled))
        if self.labeled & self.unlabeled:
            raise ValidationError(
                f"labeled/unlabeled overlap: {sorted(self.labeled & self.unlabeled)}"
            )
        if self.round_index < 1:
            raise ValidationError(f"round index must be >= 1, got {self.round_index}")

    @property
    def all_videos(self) -> frozenset[str]:
        return self.labeled | self.unlabeled


@dataclass(frozen=True)
class SuperpixelLabels:
    """Dense superpixel assignment for one video plus per-cluster centroids."""

    video_id: str
    labels: np.ndarray  # (T, H, W) int32, values in [0, K)
    centroid_positions: np.ndarray  # (K, 3) float64, (x, y, z)
    centroid_features: np.ndarray  # (K, 9) float64 stacked CIELAB

    def __post_init__(self) -> None:
        if self.labels.ndim != 3:
            raise ValidationError(f"label volume must be 3-D, got shape {self.labels.shape}")
        k = self.num_clusters
        if self.centroid_features.shape != (k, 9):
            raise ValidationError(
                f"centroid features must be ({k}, 9), got {self.centroid_features.shape}"
            )
        if self.centroid_positions.shape != (k, 3):
            raise ValidationError(
                f"centroid positions must be ({k}, 3), got {self.centroid_positions.shape}"
            )
        if k == 0:
            raise ValidationError("at least one cluster required")
        lab = self.labels
        if lab.min() < 0 or lab.max() >= k:
            raise ValidationError(f"labels outside [0, {k})")
        if np.any(np.bincount(lab.ravel(), minlength=k) == 0):
            raise ValidationError("every label in [0, K) must appear at least once")

    @property
    def num_clusters(self) -> int:
        return self.centroid_positions.shape[0]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.labels.shape


class Provenance(Enum):
    REAL = "real"
    SUPERPIXEL = "superpixel"
    BOX_INTERP = "box_interp"
    MASK_INTERP = "mask_interp"
    SCRIBBLE_BOX = "scribble_box"


@dataclass(frozen=True)
class PseudoFrame:
    """One frame's pseudo-label: a box or a bitmap, with weight and origin."""

    frame: int
    weight: float
    provenance: Provenance
    box: tuple[int, int, int, int] | None = None
    mask: np.ndarray | None = None

    def __post_init__(self) -> None:
        if (self.box is None) == (self.mask is None):
            raise ValidationError("exactly one of box/mask must be set")
        if not (0.0 <= self.weight <= 1.0):
            raise ValidationError(f"weight {self.weight} outside [0, 1]")
        if self.provenance is Provenance.REAL and self.weight != 1.0:
            raise ValidationError("REAL frames must carry weight 1")


@dataclass(frozen=True)
class PseudoLabelSet:
    """Per-frame pseudo labels for one video, keyed by frame index."""

    video_id: str
    frames: dict[int, PseudoFrame]

    def __post_init__(self) -> None:
        for idx, pf in self.frames.items():
            if idx != pf.frame:
                raise ValidationError(f"frame key {idx} != entry frame {pf.frame}")

    def sorted_frames(self) -> list[PseudoFrame]:
        return [self.frames[i] for i in sorted(self.frames)]


# Documented default ordering: finer geometry costs more seconds per item.
_COST_ORDER = ("tag_s", "point_s", "scribble_s", "box_s", "mask_s")


@dataclass(frozen=True)
class CostTable:
    """Per-item annotation costs in seconds.

    Defaults follow image-annotation practice; campaigns normally refit them
    from published man-hour totals so the defaults only matter as a fallback.
    """

    tag_s: float = 1.0
    point_s: float = 2.0
    scribble_s: float = 11.0
    box_s: float = 35.0
    mask_s: float = 79.0

    def __post_init__(self) -> None:
        for name in _COST_ORDER:
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        values = [getattr(self, n) for n in _COST_ORDER]
        if any(b < a for a, b in zip(values, values[1:])):
            warnings.warn(
                "cost table violates the usual ordering "
                "mask >= box >= scribble >= point >= tag",
                stacklevel=2,
            )

    def as_dict(self) -> dict[str, float]:
        return {n: getattr(self, n) for n in _COST_ORDER}


# ---------------------------------------------------------------------------
# Video frame loading
# ---------------------------------------------------------------------------

_FRAME_RE = re.compile(r"^frame_(\d{6})\.png$")


def load_video(dir_path: str | Path, video_id: str | None = None) -> VideoVolume:
    """Load `frame_000000.png ...` from a directory into a CIELAB volume.

    Frames must be 8-bit sRGB PNGs with uniform dimensions and contiguous
    indices starting at zero.
    """
    dir_path = Path(dir_path)
    if not dir_path.is_dir():
        raise FormatError(f"not a directory: {dir_path}")
    found: dict[int, Path] = {}
    for p in dir_path.iterdir():
        m = _FRAME_RE.match(p.name)
        if m:
            found[int(m.group(1))] = p
    if not found:
        raise FormatError(f"no frame_******.png files in {dir_path}")
    depth = max(found) + 1
    for i in range(depth):
        if i not in found:
            raise FormatError(f"missing frame index {i} in {dir_path}")
    frames = []
    shape = None
    for i in range(depth):
        with Image.open(found[i]) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
        if shape is None:
            shape = arr.shape
        elif arr.shape != shape:
            raise DimensionError(
                f"frame {i} has shape {arr.shape[:2]}, expected {shape[:2]}"
            )
        frames.append(arr)
    rgb = np.stack(frames, axis=0)
    return VideoVolume(video_id or dir_path.name, srgb_to_lab(rgb))


# ---------------------------------------------------------------------------
# Run-length encoding (row-major, leading zero-run count)
# ---------------------------------------------------------------------------


def rle_encode(bitmap: np.ndarray) -> str:
    """Encode a binary H x W bitmap as space-separated run lengths.

    Runs are taken over the row-major flattened bitmap and alternate in
    value starting with the count of zeros, which may be 0.
    """
    flat = np.asarray(bitmap, dtype=bool).ravel()
    runs: list[int] = []
    boundaries = np.flatnonzero(np.diff(flat)) + 1
    edges = [0, *boundaries.tolist(), flat.size]
    if flat.size and flat[0]:
        runs.append(0)
    for a, b in zip(edges, edges[1:]):
        runs.append(b - a)
    if not runs:
        runs = [0]
    return " ".join(str(r) for r in runs)


def rle_decode(rle: str, shape: tuple[int, int]) -> np.ndarray:
    """Decode a run-length string into a bool bitmap of the given (H, W)."""
    height, width = shape
    total = height * width
    try:
        runs = [int(tok) for tok in rle.split()]
    except ValueError as exc:
        raise FormatError(f"non-integer token in RLE string: {rle!r}") from exc
    if not runs:
        raise FormatError("empty RLE string")
    if any(r < 0 for r in runs):
        raise FormatError(f"negative run length in {rle!r}")
    if any(r == 0 for r in runs[1:]):
        raise FormatError(f"zero-length run after the first token in {rle!r}")
    if sum(runs) != total:
        raise FormatError(f"RLE covers {sum(runs)} pixels, expected {total}")
    flat = np.zeros(total, dtype=bool)
    pos = 0
    value = False
    for r in runs:
        if value:
            flat[pos : pos + r] = True
        pos += r
        value = not value
    return flat.reshape(height, width)


# ---------------------------------------------------------------------------
# Annotation JSON-lines
# ---------------------------------------------------------------------------


def _entry_from_json(video_id: str, obj: dict, frame_shape: tuple[int, int] | None) -> AnnotationEntry:
    try:
        frame = int(obj["frame"])
        kind_str = obj["kind"]
        data = obj["data"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{video_id}: malformed entry {obj!r}") from exc
    try:
        kind = AnnotationKind(kind_str)
    except ValueError as exc:
        raise FormatError(f"{video_id}: unknown annotation kind {kind_str!r}") from exc
    if kind is AnnotationKind.POINT:
        payload: object = (int(data[0]), int(data[1]))
    elif kind is AnnotationKind.SCRIBBLE:
        payload = tuple((int(x), int(y)) for x, y in data)
    elif kind is AnnotationKind.BOX:
        payload = tuple(int(v) for v in data)
        if len(payload) != 4:
            raise FormatError(f"{video_id}: box needs 4 coordinates, got {data!r}")
    else:
        if not isinstance(data, dict) or "rle" not in data:
            raise FormatError(f"{video_id}: mask data must be an object with an 'rle' key")
        if "height" in data and "width" in data:
            shape = (int(data["height"]), int(data["width"]))
        elif frame_shape is not None:
            shape = frame_shape
        else:
            raise ValidationError(
                f"{video_id}: mask at frame {frame} has no dimensions; "
                "pass frame_shape or embed height/width"
            )
        payload = rle_decode(data["rle"], shape)
    try:
        return AnnotationEntry(frame, kind, payload)
    except ValidationError as exc:
        raise ValidationError(f"{video_id}: frame {frame}: {exc}") from exc


def parse_annotations(
    file: str | Path, frame_shape: tuple[int, int] | None = None
) -> list[AnnotationRecord]:
    """Parse a JSON-lines annotation file into records.

    `frame_shape` (H, W) is required to decode mask entries that do not embed
    their own dimensions; when given it also bounds-checks coordinates.
    """
    records: list[AnnotationRecord] = []
    seen: set[tuple[str, int, AnnotationKind]] = set()
    with open(file, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"line {lineno}: invalid JSON") from exc
            try:
                video_id = obj["video_id"]
                class_tag = int(obj["class"])
                raw_entries = obj.get("entries", [])
            except (KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"line {lineno}: missing video_id/class") from exc
            entries = []
            for raw in raw_entries:
                entry = _entry_from_json(video_id, raw, frame_shape)
                key = (video_id, entry.frame, entry.kind)
                if key in seen:
                    raise ValidationError(
                        f"duplicate ({video_id}, frame {entry.frame}, {entry.kind.value})"
                    )
                seen.add(key)
                entries.append(entry)
            rec = AnnotationRecord(video_id, class_tag, tuple(entries))
            if frame_shape is not None:
                h, w = frame_shape
                for e in rec.entries:
                    if e.kind is AnnotationKind.MASK:
                        continue
                    rec_probe = AnnotationRecord(video_id, class_tag, (e,))
                    rec_probe.validate_bounds(e.frame + 1, h, w)
            records.append(rec)
    return records


def _entry_to_json(entry: AnnotationEntry) -> dict:
    if entry.kind is AnnotationKind.POINT:
        data: object = list(entry.payload)
    elif entry.kind is AnnotationKind.SCRIBBLE:
        data = [list(p) for p in entry.payload]
    elif entry.kind is AnnotationKind.BOX:
        data = list(entry.payload)
    else:
        m = entry.payload
        data = {"rle": rle_encode(m), "height": int(m.shape[0]), "width": int(m.shape[1])}
    return {"frame": entry.frame, "kind": entry.kind.value, "data": data}


def serialize_annotations(records: list[AnnotationRecord]) -> str:
    """Render records as JSON lines (deterministic key order)."""
    lines = []
    for rec in records:
        obj = {
            "video_id": rec.video_id,
            "class": rec.class_tag,
            "entries": [_entry_to_json(e) for e in rec.entries],
        }
        lines.append(json.dumps(obj, sort_keys=True))
    return "\n".join(lines) + ("\n" if lines else "")


def write_annotations(records: list[AnnotationRecord], file: str | Path) -> None:
    Path(file).write_text(serialize_annotations(records), encoding="utf-8")


# ---------------------------------------------------------------------------
# Binary volume containers (SPV1 labels, UNC1 uncertainty)
# ---------------------------------------------------------------------------

_SPV_MAGIC = b"SPV1"
_UNC_MAGIC = b"UNC1"
_HEADER = struct.Struct("<4sIIII")  # magic, T, H, W, K


def write_labels(sp: SuperpixelLabels, file: str | Path) -> None:
    """Write a superpixel label volume to the SPV1 binary container."""
    t, h, w = sp.shape
    k = sp.num_clusters
    buf = bytearray(_HEADER.pack(_SPV_MAGIC, t, h, w, k))
    buf += sp.labels.astype("<u4").tobytes()
    records = np.concatenate([sp.centroid_positions, sp.centroid_features], axis=1)
    buf += records.astype("<f4").tobytes()
    Path(file).write_bytes(bytes(buf))


def read_labels(file: str | Path, video_id: str | None = None) -> SuperpixelLabels:
    """Read an SPV1 container back into a SuperpixelLabels."""
    raw = Path(file).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{file}: truncated header")
    magic, t, h, w, k = _HEADER.unpack_from(raw)
    if magic != _SPV_MAGIC:
        raise FormatError(f"{file}: bad magic {magic!r}")
    n = t * h * w
    expected = _HEADER.size + 4 * n + 48 * k
    if len(raw) != expected:
        raise FormatError(f"{file}: expected {expected} bytes, found {len(raw)}")
    labels = (
        np.frombuffer(raw, dtype="<u4", count=n, offset=_HEADER.size)
        .reshape(t, h, w)
        .astype(np.int32)
    )
    recs = np.frombuffer(raw, dtype="<f4", count=12 * k, offset=_HEADER.size + 4 * n)
    recs = recs.reshape(k, 12).astype(np.float64)
    vid = video_id if video_id is not None else Path(file).stem
    return SuperpixelLabels(vid, labels, recs[:, :3].copy(), recs[:, 3:].copy())


def write_uncertainty(values: np.ndarray, file: str | Path) -> None:
    """Write a (T, H, W) non-negative float map to the UNC1 container.

    Same header layout as SPV1 with the cluster-count field reserved as 0.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 3:
        raise ValidationError(f"uncertainty volume must be 3-D, got {values.shape}")
    if values.min() < 0:
        raise ValidationError("uncertainty values must be non-negative")
    t, h, w = values.shape
    buf = bytearray(_HEADER.pack(_UNC_MAGIC, t, h, w, 0))
    buf += values.astype("<f4").tobytes()
    Path(file).write_bytes(bytes(buf))


def read_uncertainty(file: str | Path) -> np.ndarray:
    """Read a UNC1 container into a (T, H, W) float64 array."""
    raw = Path(file).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{file}: truncated header")
    magic, t, h, w, k = _HEADER.unpack_from(raw)
    if magic != _UNC_MAGIC:
        raise FormatError(f"{file}: bad magic {magic!r}")
    if k != 0:
        raise FormatError(f"{file}: reserved field must be 0, found {k}")
    n = t * h * w
    expected = _HEADER.size + 4 * n
    if len(raw) != expected:
        raise FormatError(f"{file}: expected {expected} bytes, found {len(raw)}")
    values = np.frombuffer(raw, dtype="<f4", count=n, offset=_HEADER.size)
    out = values.reshape(t, h, w).astype(np.float64)
    if out.min() < 0:
        raise ValidationError(f"{file}: negative uncertainty value")
    return out


# ---------------------------------------------------------------------------
# Dataset split JSON
# ---------------------------------------------------------------------------


def write_split(split: DatasetSplit, file: str | Path) -> None:
    obj = {
        "labeled": sorted(split.labeled),
        "unlabeled": sorted(split.unlabeled),
        "round_index": split.round_index,
    }
    Path(file).write_text(json.dumps(obj, sort_keys=True) + "\n", encoding="utf-8")


def read_split(file: str | Path) -> DatasetSplit:
    try:
        obj = json.loads(Path(file).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{file}: invalid JSON") from exc
    try:
        return DatasetSplit(
            frozenset(obj["labeled"]),
            frozenset(obj["unlabeled"]),
            int(obj.get("round_index", 1)),
        )
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{file}: missing labeled/unlabeled lists") from exc
