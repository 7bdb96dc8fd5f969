"""Entropy-gated pseudo-labeling and the classification loss.

Background pixels at step t may hide old classes. The frozen old model
votes on each one; the vote is kept only when the old model's predictive
entropy is below a per-class threshold, computed before the step starts
as the median entropy over all pixels the old model assigns to that
class, capped at `tau_max`. Acceptance is strict (u < tau), so a zero
threshold rejects even zero-entropy pixels.

The classification loss is cross-entropy over accepted pixels,
normalized by the accepted count and scaled by nu, the fraction of
background pixels that survived the gate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor
from .errors import DataError
from .model import SegNet
from .tensor import Tensor

__all__ = [
    "EntropyThresholds",
    "PseudoTarget",
    "pixel_entropy",
    "compute_thresholds",
    "build_pseudo_target",
    "ground_truth_target",
    "pseudo_ce_loss",
    "total_loss",
]


def pixel_entropy(probs: Tensor | np.ndarray, normalized: bool = True) -> np.ndarray:
    """Per-pixel entropy of a (K,H,W) probability map, in nats.

    0*log(0) counts as 0. With `normalized`, divided by log K so the
    uniform distribution maps to 1. Not differentiable by design; it is
    only ever evaluated on the frozen old model.
    """
    p = probs.data if isinstance(probs, Tensor) else np.asarray(probs, dtype=np.float64)
    if p.ndim != 3 or p.shape[0] < 2:
        raise ValueError(f"expected (K,H,W) probabilities with K >= 2, got {p.shape}")
    sums = p.sum(axis=0)
    if np.abs(sums - 1.0).max() > 1e-6:
        raise ValueError("per-pixel probabilities do not sum to 1")
    plogp = np.where(p > 0.0, p * np.log(np.maximum(p, 1e-300)), 0.0)
    u = -plogp.sum(axis=0)
    if normalized:
        u = u / np.log(p.shape[0])
    return u


@dataclass
class EntropyThresholds:
    """Per-class acceptance thresholds plus the audit trail behind them."""

    tau: dict[int, float]
    tau_max: float = 1e-3
    normalized: bool = True
    pixel_counts: dict[int, int] = field(default_factory=dict)
    raw_medians: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        for c, t in self.tau.items():
            if not 0.0 <= t <= self.tau_max:
                raise ValueError(f"threshold for class {c} outside [0, {self.tau_max}]: {t}")

    def write_table(self, path: str | Path) -> None:
        lines = ["class\tpixels\traw_median\ttau"]
        for c in sorted(self.tau):
            count = self.pixel_counts.get(c, 0)
            raw = self.raw_medians.get(c)
            raw_s = repr(raw) if raw is not None else "none"
            lines.append(f"{c}\t{count}\t{raw_s}\t{self.tau[c]!r}")
        Path(path).write_text("\n".join(lines) + "\n")


def compute_thresholds(
    old_model: SegNet,
    images,
    tau_max: float = 1e-3,
    normalized: bool = True,
) -> EntropyThresholds:
    """One full pass over the step's images before training starts.

    Classes the old model never predicts get tau_max; everything else
    gets min(median entropy of its predicted pixels, tau_max).
    """
    per_class: dict[int, list[np.ndarray]] = {c: [] for c in old_model.classes}
    n_images = 0
    for img in images:
        n_images += 1
        logits = old_model.forward(Tensor(img) if not isinstance(img, Tensor) else img)
        probs = tensor.softmax_channel(logits)
        u = pixel_entropy(probs, normalized=normalized)
        pred = probs.data.argmax(axis=0)
        for ch, cls in enumerate(old_model.classes):
            hit = pred == ch
            if hit.any():
                per_class[cls].append(u[hit])
    if n_images == 0:
        raise DataError("threshold computation over an empty dataset")
    tau: dict[int, float] = {}
    counts: dict[int, int] = {}
    medians: dict[int, float] = {}
    for cls, chunks in per_class.items():
        if chunks:
            values = np.concatenate(chunks)
            counts[cls] = int(values.size)
            medians[cls] = float(np.median(values))
            tau[cls] = min(medians[cls], tau_max)
        else:
            counts[cls] = 0
            tau[cls] = tau_max
    return EntropyThresholds(
        tau, tau_max=tau_max, normalized=normalized, pixel_counts=counts, raw_medians=medians
    )


@dataclass
class PseudoTarget:
    """Training target for one image: class ids, acceptance mask, nu weight."""

    target: np.ndarray
    accepted: np.ndarray
    nu: float


def build_pseudo_target(
    gt: np.ndarray,
    old_probs: Tensor | np.ndarray,
    u: np.ndarray,
    thr: EntropyThresholds,
    old_classes: list[int],
    current_classes: list[int],
) -> PseudoTarget:
    """Merge ground truth with gated old-model votes on background pixels.

    Ground-truth foreground always wins and is always accepted. A
    background pixel takes the old model's argmax class when that
    pixel's entropy is strictly below the class threshold; otherwise it
    is dropped from the loss.
    """
    gt = np.asarray(gt)
    p = old_probs.data if isinstance(old_probs, Tensor) else np.asarray(old_probs)
    if p.ndim != 3 or p.shape[0] != len(old_classes):
        raise DataError(f"old probs {p.shape} do not match {len(old_classes)} old classes")
    if gt.shape != p.shape[1:] or u.shape != gt.shape:
        raise DataError(f"shape mismatch: gt {gt.shape}, probs {p.shape}, entropy {u.shape}")
    allowed = set(current_classes) | {0}
    present = set(np.unique(gt).tolist())
    if not present <= allowed:
        raise DataError(f"labels {sorted(present - allowed)} are outside the current step")
    missing = [c for c in old_classes if c not in thr.tau]
    if missing:
        raise DataError(f"no thresholds for old classes {missing}")
    ids = np.asarray(old_classes)
    taus = np.asarray([thr.tau[c] for c in old_classes])
    pred = p.argmax(axis=0)
    bg = gt == 0
    accepted_bg = bg & (u < taus[pred])
    target = np.where(bg, np.where(accepted_bg, ids[pred], 0), gt)
    accepted = ~bg | accepted_bg
    n_bg = int(bg.sum())
    nu = float(accepted_bg.sum() / n_bg) if n_bg else 1.0
    return PseudoTarget(target=target, accepted=accepted, nu=nu)


def ground_truth_target(gt: np.ndarray) -> PseudoTarget:
    """Step-1 target: no old model, every pixel supervised, nu = 1."""
    gt = np.asarray(gt)
    return PseudoTarget(target=gt.copy(), accepted=np.ones(gt.shape, dtype=bool), nu=1.0)


def pseudo_ce_loss(logits: Tensor, tgt: PseudoTarget, classes: list[int]) -> Tensor:
    """nu * mean over accepted pixels of -log softmax(logits)[target]."""
    k, h, w = logits.shape
    if k != len(classes):
        raise DataError(f"logits have {k} channels for {len(classes)} classes")
    n_acc = int(tgt.accepted.sum())
    if n_acc == 0:
        return Tensor(0.0)
    known = set(np.unique(tgt.target[tgt.accepted]).tolist())
    if not known <= set(classes):
        raise DataError(f"target ids {sorted(known - set(classes))} not in the head")
    lut = np.zeros(max(classes) + 1, dtype=np.intp)
    for ch, c in enumerate(classes):
        lut[c] = ch
    # rejected pixels keep a valid channel for the gather; the mask zeroes them
    target_ch = lut[np.where(tgt.accepted, tgt.target, 0)]
    logp = tensor.log_softmax_channel(logits)
    picked = tensor.gather_channel(logp, target_ch)
    mask = Tensor(tgt.accepted.astype(np.float64))
    return (picked * mask).sum() * (-tgt.nu / n_acc)


def total_loss(pseudo: Tensor, distill: Tensor) -> Tensor:
    """Sum of the two terms; distillation weights are already folded in."""
    for name, t in (("pseudo", pseudo), ("distill", distill)):
        if t.ndim != 0:
            raise ValueError(f"{name} loss must be scalar, got shape {t.shape}")
    return pseudo + distill
