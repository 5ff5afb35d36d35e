"""Omni-supervised loss family as pure numpy functions.

Per-frame localization loss is mean binary cross-entropy on foreground
probability maps; per-video detection losses are frame-weighted sums; the
full objective combines classification, per-annotation-kind detection terms
behind binary gates, and the (voxel-normalized) superpixel clustering energy.
Gradients are closed-form so an external trainer can consume them directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import SuperpixelLabels, VideoVolume
from .errors import ValidationError
from .superpixel3d import SlicConfig, energy

__all__ = [
    "EPS",
    "PredictionMap",
    "LossBreakdown",
    "frame_loss",
    "frame_loss_gradient",
    "weighted_detection_loss",
    "classification_loss",
    "total_loss",
    "normalized_clustering_energy",
]

EPS = 1e-7


@dataclass(frozen=True)
class PredictionMap:
    """Per-frame foreground probabilities plus a class distribution."""

    frames: np.ndarray  # (F, H, W) floats in [0, 1]
    class_probs: np.ndarray  # (C,) summing to 1 within 1e-6

    def __post_init__(self) -> None:
        f = self.frames
        if f.ndim != 3:
            raise ValidationError(f"frames must be (F,H,W), got {f.shape}")
        if f.min() < 0.0 or f.max() > 1.0:
            raise ValidationError("frame probabilities outside [0, 1]")
        c = self.class_probs
        if c.ndim != 1 or c.size < 1:
            raise ValidationError("class distribution must be a non-empty vector")
        if c.min() < 0.0 or abs(float(c.sum()) - 1.0) > 1e-6:
            raise ValidationError("class distribution must be normalized")


@dataclass(frozen=True)
class LossBreakdown:
    """Per-term values, binary gates, and their gated total."""

    cls: float
    box: float
    pixel: float
    scribble: float
    point: float
    slic: float
    gate_box: int
    gate_pixel: int
    gate_scribble: int
    gate_point: int

    @property
    def total(self) -> float:
        return (
            self.cls
            + self.gate_box * self.box
            + self.gate_pixel * self.pixel
            + self.gate_scribble * self.scribble
            + self.gate_point * self.point
            + self.slic
        )


def frame_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean binary cross-entropy over pixels, predictions clamped to [EPS, 1-EPS]."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValidationError(f"shape mismatch: {pred.shape} vs {target.shape}")
    p = np.clip(pred, EPS, 1.0 - EPS)
    bce = -(target * np.log(p) + (1.0 - target) * np.log(1.0 - p))
    return float(bce.mean())


def frame_loss_gradient(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """d(frame_loss)/d(pred) per pixel: (p - t) / (p (1-p) N) at clamped p.

    Outside the clamp interval the loss is locally constant in the raw
    prediction, so the gradient there is exactly zero.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValidationError(f"shape mismatch: {pred.shape} vs {target.shape}")
    p = np.clip(pred, EPS, 1.0 - EPS)
    inside = (pred > EPS) & (pred < 1.0 - EPS)
    return np.where(inside, (p - target) / (p * (1.0 - p) * pred.size), 0.0)


def weighted_detection_loss(frame_losses, weights) -> float:
    """Weighted sum of per-frame losses: sum_i w_i * l_i."""
    losses = np.asarray(frame_losses, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if losses.shape != w.shape:
        raise ValidationError(f"length mismatch: {losses.shape} vs {w.shape}")
    if w.size and (w.min() < 0.0 or w.max() > 1.0):
        raise ValidationError("weights must lie in [0, 1]")
    return float((w * losses).sum())


def classification_loss(class_probs: np.ndarray, label: int) -> float:
    """Negative log likelihood of the true class, clamped."""
    probs = np.asarray(class_probs, dtype=np.float64)
    if probs.ndim != 1:
        raise ValidationError("class probabilities must be a vector")
    if not (0 <= label < probs.size):
        raise ValidationError(f"label {label} outside [0, {probs.size})")
    if abs(float(probs.sum()) - 1.0) > 1e-6:
        raise ValidationError("class distribution must be normalized")
    return float(-np.log(max(float(probs[label]), EPS)))


def normalized_clustering_energy(
    vol: VideoVolume, sp: SuperpixelLabels, cfg: SlicConfig
) -> float:
    """Clustering energy divided by voxel count (resolution-independent)."""
    t, h, w = vol.shape
    return energy(vol, sp, cfg) / float(t * h * w)


def _check_term(name: str, value: float | None, gate: int) -> float:
    if gate not in (0, 1):
        raise ValidationError(f"gate for {name} must be 0 or 1, got {gate}")
    if gate == 1 and value is None:
        raise ValidationError(f"gate set for absent {name} loss")
    if value is not None and value < 0.0:
        raise ValidationError(f"{name} loss must be non-negative")
    return 0.0 if value is None else float(value)


def total_loss(
    cls: float,
    slic: float,
    box: float | None = None,
    pixel: float | None = None,
    scribble: float | None = None,
    point: float | None = None,
    gate_box: int = 0,
    gate_pixel: int = 0,
    gate_scribble: int = 0,
    gate_point: int = 0,
) -> LossBreakdown:
    """Combine all per-sample terms behind their gates.

    `slic` should already be voxel-normalized (see
    `normalized_clustering_energy`).
    """
    if cls < 0.0 or slic < 0.0:
        raise ValidationError("classification and clustering terms must be non-negative")
    return LossBreakdown(
        cls=float(cls),
        box=_check_term("box", box, gate_box),
        pixel=_check_term("pixel", pixel, gate_pixel),
        scribble=_check_term("scribble", scribble, gate_scribble),
        point=_check_term("point", point, gate_point),
        slic=float(slic),
        gate_box=gate_box,
        gate_pixel=gate_pixel,
        gate_scribble=gate_scribble,
        gate_point=gate_point,
    )
