"""3D spatio-temporal superpixels by iterative cluster energy minimization.

Voxels carry a 9-dimensional appearance feature (CIELAB of the previous,
current, and next frame, temporally clamped) and a position (x, y, z) whose
temporal axis is scaled by a configurable factor.  Segmentation alternates
windowed nearest-centroid assignment with centroid updates until the label
volume stabilizes, then enforces 6-connectivity and a minimum region size.

The per-voxel distance, and the total energy reported by `energy`, is

    ||f(p) - f_cluster||_2 + (m / S) * ||(dx, dy, rho * dz)||_2

i.e. unsquared norms.  Because the mean is not the exact minimizer of a sum
of unsquared norms, the centroid update keeps the mean candidate only when
it does not increase that cluster's contribution; this guarantees the energy
trace is non-increasing across every assignment and update step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import find_objects
from skimage.measure import label as _connected_components

from .datamodel import SuperpixelLabels, VideoVolume
from .errors import ConfigurationError, ValidationError

__all__ = [
    "SlicConfig",
    "extract_features",
    "voxel_positions",
    "energy",
    "segment",
    "initial_cluster_count",
]


@dataclass(frozen=True)
class SlicConfig:
    """Clustering parameters.

    interval: seed grid spacing S in pixels (x, y); z spacing is
        temporal_scale * S.
    compactness: weight m trading appearance against position distance.
    temporal_scale: multiplier applied to z-distances (anisotropy knob).
    min_region: smallest voxel count a final region may have.
    """

    interval: int = 16
    compactness: float = 10.0
    max_iters: int = 10
    temporal_scale: float = 1.0
    min_region: int = 8

    def __post_init__(self) -> None:
        if self.interval < 1:
            raise ConfigurationError(f"interval must be >= 1, got {self.interval}")
        if not (self.compactness > 0 and math.isfinite(self.compactness)):
            raise ConfigurationError(f"compactness must be positive, got {self.compactness}")
        if self.max_iters < 1:
            raise ConfigurationError(f"max_iters must be >= 1, got {self.max_iters}")
        if not (self.temporal_scale > 0 and math.isfinite(self.temporal_scale)):
            raise ConfigurationError(
                f"temporal_scale must be positive, got {self.temporal_scale}"
            )
        if self.min_region < 1:
            raise ConfigurationError(f"min_region must be >= 1, got {self.min_region}")


def initial_cluster_count(cfg: SlicConfig, depth: int, height: int, width: int) -> int:
    """Seed count of the regular grid: one per S x S x (rho*S) cell."""
    z_step = cfg.temporal_scale * cfg.interval
    return (
        math.ceil(depth / z_step)
        * math.ceil(height / cfg.interval)
        * math.ceil(width / cfg.interval)
    )


def extract_features(vol: VideoVolume) -> np.ndarray:
    """Per-voxel 9-dim appearance: CIELAB at frames t-1, t, t+1 (clamped)."""
    lab = vol.voxels
    t = vol.depth
    prev_idx = np.maximum(np.arange(t) - 1, 0)
    next_idx = np.minimum(np.arange(t) + 1, t - 1)
    return np.concatenate([lab[prev_idx], lab, lab[next_idx]], axis=-1)


def voxel_positions(depth: int, height: int, width: int) -> np.ndarray:
    """Per-voxel (x, y, z) coordinates as float64, shape (T, H, W, 3)."""
    zz, yy, xx = np.meshgrid(
        np.arange(depth, dtype=np.float64),
        np.arange(height, dtype=np.float64),
        np.arange(width, dtype=np.float64),
        indexing="ij",
    )
    return np.stack([xx, yy, zz], axis=-1)


def _voxel_distances(
    feats: np.ndarray,
    positions: np.ndarray,
    labels: np.ndarray,
    c_feats: np.ndarray,
    c_poss: np.ndarray,
    cfg: SlicConfig,
) -> np.ndarray:
    """Distance of every voxel to its assigned cluster's centroid."""
    color = np.linalg.norm(feats - c_feats[labels], axis=-1)
    diff = positions - c_poss[labels]
    pos = np.sqrt(
        diff[..., 0] ** 2 + diff[..., 1] ** 2 + (cfg.temporal_scale * diff[..., 2]) ** 2
    )
    return color + (cfg.compactness / cfg.interval) * pos


def energy(vol: VideoVolume, sp: SuperpixelLabels, cfg: SlicConfig) -> float:
    """Total clustering energy of a labeling under the given config."""
    if sp.shape != vol.shape:
        raise ValidationError(f"label volume {sp.shape} does not cover video {vol.shape}")
    labels = sp.labels
    if labels.min() < 0 or labels.max() >= sp.num_clusters:
        raise ValidationError("label out of range")
    feats = extract_features(vol)
    positions = voxel_positions(*vol.shape)
    d = _voxel_distances(feats, positions, labels, sp.centroid_features, sp.centroid_positions, cfg)
    return float(d.sum())


def _seed_grid(cfg: SlicConfig, depth: int, height: int, width: int) -> np.ndarray:
    s = cfg.interval
    z_step = cfg.temporal_scale * s
    zs = [min(depth - 1, int(round(z_step / 2 + k * z_step))) for k in range(math.ceil(depth / z_step))]
    ys = [min(height - 1, s // 2 + j * s) for j in range(math.ceil(height / s))]
    xs = [min(width - 1, s // 2 + i * s) for i in range(math.ceil(width / s))]
    seeds = [(x, y, z) for z in zs for y in ys for x in xs]
    return np.array(seeds, dtype=np.int64)


def _color_gradient(feats: np.ndarray) -> np.ndarray:
    """Squared appearance gradient used to nudge seeds off edges."""
    t, h, w, _ = feats.shape
    xp = np.minimum(np.arange(w) + 1, w - 1)
    xm = np.maximum(np.arange(w) - 1, 0)
    yp = np.minimum(np.arange(h) + 1, h - 1)
    ym = np.maximum(np.arange(h) - 1, 0)
    gx = feats[:, :, xp, :] - feats[:, :, xm, :]
    gy = feats[:, yp, :, :] - feats[:, ym, :, :]
    return (gx**2).sum(axis=-1) + (gy**2).sum(axis=-1)


def _perturb_seeds(seeds: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Move each seed to the lowest-gradient voxel in its 3x3x1 neighborhood."""
    t, h, w = grad.shape
    out = seeds.copy()
    for i, (x, y, z) in enumerate(seeds):
        y0, y1 = max(0, y - 1), min(h - 1, y + 1)
        x0, x1 = max(0, x - 1), min(w - 1, x + 1)
        patch = grad[z, y0 : y1 + 1, x0 : x1 + 1]
        flat = int(np.argmin(patch))  # first minimum in scan order: deterministic
        dy, dx = divmod(flat, patch.shape[1])
        out[i] = (x0 + dx, y0 + dy, z)
    return out


def _assign(
    feats: np.ndarray,
    positions: np.ndarray,
    c_feats: np.ndarray,
    c_poss: np.ndarray,
    cfg: SlicConfig,
    prev_labels: np.ndarray | None,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Windowed nearest-centroid assignment.

    Returns (labels, per-voxel distance, changed-voxel count).  Exact
    distance ties go to the lower cluster index.  A voxel keeps its previous
    label when nothing inside a search window beats it.
    """
    t, h, w = feats.shape[:3]
    k = c_feats.shape[0]
    s = cfg.interval
    rho = cfg.temporal_scale
    ez = math.ceil(rho * s)
    m_over_s = cfg.compactness / s

    cand_d = np.full((t, h, w), np.inf)
    cand = np.full((t, h, w), -1, dtype=np.int32)
    for c in range(k):
        cx, cy, cz = c_poss[c]
        x0, x1 = max(0, math.ceil(cx - s)), min(w - 1, math.floor(cx + s))
        y0, y1 = max(0, math.ceil(cy - s)), min(h - 1, math.floor(cy + s))
        z0, z1 = max(0, math.ceil(cz - ez)), min(t - 1, math.floor(cz + ez))
        if x0 > x1 or y0 > y1 or z0 > z1:
            continue
        fsub = feats[z0 : z1 + 1, y0 : y1 + 1, x0 : x1 + 1]
        psub = positions[z0 : z1 + 1, y0 : y1 + 1, x0 : x1 + 1]
        color = np.linalg.norm(fsub - c_feats[c], axis=-1)
        diff = psub - c_poss[c]
        pos = np.sqrt(diff[..., 0] ** 2 + diff[..., 1] ** 2 + (rho * diff[..., 2]) ** 2)
        d = color + m_over_s * pos
        dv = cand_d[z0 : z1 + 1, y0 : y1 + 1, x0 : x1 + 1]
        cv = cand[z0 : z1 + 1, y0 : y1 + 1, x0 : x1 + 1]
        better = d < dv  # strict: earlier (lower) index wins ties
        dv[better] = d[better]
        cv[better] = c

    if prev_labels is None:
        labels = cand
        dist = cand_d
        uncovered = labels < 0
        if np.any(uncovered):
            # Pathological window configuration: fall back to a global search
            # for just those voxels so the result is still a partition.
            idx = np.argwhere(uncovered)
            for z, y, x in idx:
                color = np.linalg.norm(c_feats - feats[z, y, x], axis=-1)
                diff = c_poss - positions[z, y, x]
                pos = np.sqrt(diff[:, 0] ** 2 + diff[:, 1] ** 2 + (rho * diff[:, 2]) ** 2)
                d = color + m_over_s * pos
                labels[z, y, x] = int(np.argmin(d))
                dist[z, y, x] = float(d.min())
        changed = labels.size
        return labels, dist, changed

    inc_d = _voxel_distances(feats, positions, prev_labels, c_feats, c_poss, cfg)
    switch = (cand_d < inc_d) | ((cand_d == inc_d) & (cand < prev_labels))
    labels = np.where(switch, cand, prev_labels)
    dist = np.where(switch, cand_d, inc_d)
    changed = int(np.count_nonzero(labels != prev_labels))
    return labels, dist, changed


def _update_centroids(
    feats: np.ndarray,
    positions: np.ndarray,
    labels: np.ndarray,
    c_feats: np.ndarray,
    c_poss: np.ndarray,
    cfg: SlicConfig,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Move centroids to member means unless that raises the cluster's cost.

    Returns the new centroid arrays and the post-update total energy.
    """
    k = c_feats.shape[0]
    flat = labels.ravel()
    counts = np.bincount(flat, minlength=k).astype(np.float64)
    mean_feats = c_feats.copy()
    mean_poss = c_poss.copy()
    nz = counts > 0
    for d in range(9):
        sums = np.bincount(flat, weights=feats[..., d].ravel(), minlength=k)
        mean_feats[nz, d] = sums[nz] / counts[nz]
    for d in range(3):
        sums = np.bincount(flat, weights=positions[..., d].ravel(), minlength=k)
        mean_poss[nz, d] = sums[nz] / counts[nz]

    d_old = _voxel_distances(feats, positions, labels, c_feats, c_poss, cfg)
    d_new = _voxel_distances(feats, positions, labels, mean_feats, mean_poss, cfg)
    sum_old = np.bincount(flat, weights=d_old.ravel(), minlength=k)
    sum_new = np.bincount(flat, weights=d_new.ravel(), minlength=k)
    take_mean = sum_new <= sum_old
    out_feats = np.where(take_mean[:, None], mean_feats, c_feats)
    out_poss = np.where(take_mean[:, None], mean_poss, c_poss)
    total = float(np.where(take_mean, sum_new, sum_old).sum())
    return out_feats, out_poss, total


def _neighbor_labels(labels: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Labels 6-adjacent to the masked region (within the cropped arrays)."""
    neigh = []
    for axis in range(3):
        for shift in (1, -1):
            rolled = np.roll(mask, shift, axis=axis)
            if shift == 1:
                rolled[(slice(None),) * axis + (0,)] = False
            else:
                rolled[(slice(None),) * axis + (-1,)] = False
            sel = rolled & ~mask
            if sel.any():
                neigh.append(labels[sel])
    if not neigh:
        return np.array([], dtype=labels.dtype)
    return np.unique(np.concatenate(neigh))


def _enforce_connectivity(labels: np.ndarray, min_region: int) -> np.ndarray:
    """Merge stray or undersized components into their largest neighbor label.

    Repeats until every label is a single 6-connected component of size
    >= min_region (unless only one label remains).
    """
    labels = labels.copy()
    while True:
        comp = _connected_components(labels, connectivity=1, background=-1)
        ncomp = int(comp.max())
        if ncomp <= 1:
            return labels
        flat_comp = comp.ravel()
        flat_lab = labels.ravel()
        comp_sizes = np.bincount(flat_comp)[1:]  # index c-1 for component c
        uniq, first_idx = np.unique(flat_comp, return_index=True)
        comp_label = np.zeros(ncomp + 1, dtype=labels.dtype)
        comp_label[uniq] = flat_lab[first_idx]
        label_sizes = np.bincount(flat_lab)
        num_labels = int(np.count_nonzero(label_sizes))

        # Largest component per label (ties: lower component id).
        largest: dict[int, int] = {}
        for c in range(1, ncomp + 1):
            lbl = int(comp_label[c])
            best = largest.get(lbl)
            if best is None or comp_sizes[c - 1] > comp_sizes[best - 1]:
                largest[lbl] = c

        to_merge = []
        for c in range(1, ncomp + 1):
            lbl = int(comp_label[c])
            if largest[lbl] != c:
                to_merge.append(c)
            elif comp_sizes[c - 1] < min_region and num_labels > 1:
                to_merge.append(c)
        if not to_merge:
            return labels

        to_merge.sort(key=lambda c: (comp_sizes[c - 1], c))
        slices = find_objects(comp)
        merged_any = False
        live_sizes = label_sizes.copy()
        for c in to_merge:
            sl = slices[c - 1]
            grown = tuple(
                slice(max(0, s.start - 1), min(dim, s.stop + 1))
                for s, dim in zip(sl, labels.shape)
            )
            local_comp = comp[grown]
            local_lab = labels[grown]
            mask = local_comp == c
            current = int(comp_label[c])
            neigh = _neighbor_labels(local_lab, mask)
            neigh = neigh[neigh != current]
            if neigh.size == 0:
                continue
            sizes = live_sizes[neigh]
            target = int(neigh[np.lexsort((neigh, -sizes))[0]])
            n_vox = int(mask.sum())
            labels[grown][mask] = target
            live_sizes[target] += n_vox
            live_sizes[current] -= n_vox
            merged_any = True
        if not merged_any:
            return labels


def _relabel_dense(labels: np.ndarray) -> np.ndarray:
    """Relabel to 0..K-1 ordered by first occurrence in scan order."""
    flat = labels.ravel()
    uniq, first_idx = np.unique(flat, return_index=True)
    order = uniq[np.argsort(first_idx)]
    mapping = np.zeros(int(flat.max()) + 1, dtype=np.int32)
    mapping[order] = np.arange(order.size, dtype=np.int32)
    return mapping[labels]


def _final_centroids(
    feats: np.ndarray, positions: np.ndarray, labels: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    k = int(labels.max()) + 1
    flat = labels.ravel()
    counts = np.bincount(flat, minlength=k).astype(np.float64)
    c_feats = np.zeros((k, 9))
    c_poss = np.zeros((k, 3))
    for d in range(9):
        c_feats[:, d] = np.bincount(flat, weights=feats[..., d].ravel(), minlength=k) / counts
    for d in range(3):
        c_poss[:, d] = np.bincount(flat, weights=positions[..., d].ravel(), minlength=k) / counts
    return c_poss, c_feats


def segment(
    vol: VideoVolume, cfg: SlicConfig, return_energy_trace: bool = False
) -> SuperpixelLabels | tuple[SuperpixelLabels, list[float]]:
    """Segment a video volume into 3D superpixels.

    With `return_energy_trace=True` also returns the total energy measured
    after every assignment and every centroid update, in order; the sequence
    is non-increasing by construction.
    """
    t, h, w = vol.shape
    if cfg.interval > min(h, w):
        raise ConfigurationError(
            f"interval {cfg.interval} exceeds min(H, W) = {min(h, w)}"
        )
    if math.ceil(cfg.temporal_scale * cfg.interval) < 1:
        raise ConfigurationError("temporal search window is empty")

    feats = extract_features(vol)
    positions = voxel_positions(t, h, w)
    seeds = _perturb_seeds(_seed_grid(cfg, t, h, w), _color_gradient(feats))
    c_poss = seeds.astype(np.float64)
    c_feats = feats[seeds[:, 2], seeds[:, 1], seeds[:, 0]].copy()

    labels: np.ndarray | None = None
    trace: list[float] = []
    n_voxels = t * h * w
    for _ in range(cfg.max_iters):
        labels, dist, changed = _assign(feats, positions, c_feats, c_poss, cfg, labels)
        trace.append(float(dist.sum()))
        c_feats, c_poss, post_update = _update_centroids(
            feats, positions, labels, c_feats, c_poss, cfg
        )
        trace.append(post_update)
        if changed < 0.001 * n_voxels:
            break

    assert labels is not None
    labels = _enforce_connectivity(labels, cfg.min_region)
    labels = _relabel_dense(labels)
    final_poss, final_feats = _final_centroids(feats, positions, labels)
    sp = SuperpixelLabels(vol.video_id, labels.astype(np.int32), final_poss, final_feats)
    if return_energy_trace:
        return sp, trace
    return sp
