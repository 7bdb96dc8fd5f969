"""Pooled feature embeddings and the multi-scale distillation loss.

A feature map is summarized by pooling rows and columns: for each grid
division d the map splits into d x d equal sub-regions, and each region
contributes its width-pooled slices (one mean per row and channel)
followed by its height-pooled slices (one mean per column and channel).
Canonical ordering of the flat embedding: divisions ascending, regions
row-major, width-pooled before height-pooled, channels innermost. Total
length is sum over d of d*(H+W)*C.

The distillation loss averages, over the tapped layers, a weighted
squared L2 distance between old-model and current-model embeddings.
Intermediate taps are squared elementwise before pooling (when enabled)
and weighted by `lambda_features`; the final logits tap is pooled raw
and weighted by `lambda_logits`. Gradient reaches only the current
model's taps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import serialize, tensor
from .errors import ShapeMismatchError
from .tensor import Tensor

__all__ = [
    "PodConfig",
    "PodEmbedding",
    "pod_embedding",
    "local_pod_embedding",
    "local_pod_loss",
    "output_kd_loss",
    "export_embedding",
]


@dataclass
class PodConfig:
    divisions: tuple[int, ...] = (1, 2, 4)
    square_values: bool = True
    lambda_features: float = 1e-2
    lambda_logits: float = 5e-4
    adaptive_weighting: bool = True

    def __post_init__(self):
        divs = tuple(int(d) for d in self.divisions)
        if not divs or divs[0] < 1 or any(a >= b for a, b in zip(divs, divs[1:])):
            raise ValueError(f"divisions must be strictly increasing and >= 1, got {divs}")
        self.divisions = divs

    def check_divides(self, h: int, w: int) -> None:
        for d in self.divisions:
            if h % d or w % d:
                raise ShapeMismatchError(f"division {d} does not divide feature dims {h}x{w}")


@dataclass
class PodEmbedding:
    """Flat embedding plus a descriptor of what each segment holds."""

    values: Tensor
    # (division, (region_row, region_col), "width" | "height", segment length)
    layout: list[tuple[int, tuple[int, int], str, int]] = field(default_factory=list)


def _embed_forward(a: np.ndarray, divisions: tuple[int, ...]) -> np.ndarray:
    C, H, W = a.shape
    parts = []
    for d in divisions:
        hd, wd = H // d, W // d
        r = a.reshape(C, d, hd, d, wd)
        wp = r.mean(axis=4).transpose(1, 3, 2, 0).reshape(d * d, hd * C)
        hp = r.mean(axis=2).transpose(1, 2, 3, 0).reshape(d * d, wd * C)
        parts.append(np.concatenate([wp, hp], axis=1).reshape(-1))
    return np.concatenate(parts)


def _embed_backward(g: np.ndarray, shape: tuple[int, int, int], divisions: tuple[int, ...]) -> np.ndarray:
    C, H, W = shape
    gx = np.zeros((C, H, W))
    offset = 0
    for d in divisions:
        hd, wd = H // d, W // d
        n = d * d * (hd + wd) * C
        g2 = g[offset : offset + n].reshape(d * d, (hd + wd) * C)
        offset += n
        gw = g2[:, : hd * C].reshape(d, d, hd, C).transpose(3, 0, 2, 1)
        gh = g2[:, hd * C :].reshape(d, d, wd, C).transpose(3, 0, 1, 2)
        gr = gw[:, :, :, :, None] / wd + gh[:, :, None, :, :] / hd
        gx += gr.reshape(C, H, W)
    return gx


def local_pod_embedding(x: Tensor, cfg: PodConfig, square_values: bool | None = None) -> PodEmbedding:
    """Multi-scale pooled embedding of a (C,H,W) tensor, differentiable."""
    if x.ndim != 3:
        raise ShapeMismatchError(f"expected a (C,H,W) tensor, got {x.shape}")
    C, H, W = x.shape
    cfg.check_divides(H, W)
    square = cfg.square_values if square_values is None else square_values
    src = x * x if square else x
    divisions = cfg.divisions
    shape = src.shape
    out = tensor.apply_op(
        _embed_forward(src.data, divisions),
        (src,),
        lambda g: [(src, _embed_backward(g, shape, divisions))],
    )
    layout = []
    for d in divisions:
        hd, wd = H // d, W // d
        for i in range(d):
            for j in range(d):
                layout.append((d, (i, j), "width", hd * C))
                layout.append((d, (i, j), "height", wd * C))
    return PodEmbedding(out, layout)


def pod_embedding(x: Tensor, square_values: bool = False) -> Tensor:
    """Single-scale variant: whole-map row and column means, length (H+W)*C."""
    cfg = PodConfig(divisions=(1,), square_values=square_values)
    return local_pod_embedding(x, cfg).values


def local_pod_loss(
    old_taps: list[Tensor],
    new_taps: list[Tensor],
    cfg: PodConfig,
    n_old_classes: int,
    n_new_classes: int,
) -> Tensor:
    """Average over taps of w_l * ||embed(new_l) - embed(old_l)||^2.

    The last list entry is the logits tap: pooled without squaring and
    weighted by lambda_logits instead of lambda_features. With adaptive
    weighting every w_l picks up sqrt((n_old+n_new)/n_new).
    """
    if not old_taps or len(old_taps) != len(new_taps):
        raise ShapeMismatchError(
            f"tap lists must be equal length >= 1, got {len(old_taps)} and {len(new_taps)}"
        )
    for l, (o, n) in enumerate(zip(old_taps, new_taps)):
        if o.shape != n.shape:
            raise ShapeMismatchError(f"tap {l} shapes differ: {o.shape} vs {n.shape}")
    factor = 1.0
    if cfg.adaptive_weighting:
        if n_new_classes < 1:
            raise ValueError(f"adaptive weighting needs n_new_classes >= 1, got {n_new_classes}")
        factor = float(np.sqrt((n_old_classes + n_new_classes) / n_new_classes))
    n_taps = len(new_taps)
    total = None
    for l, (old, new) in enumerate(zip(old_taps, new_taps)):
        is_logits = l == n_taps - 1
        square = cfg.square_values and not is_logits
        w_l = (cfg.lambda_logits if is_logits else cfg.lambda_features) * factor
        e_old = local_pod_embedding(old, cfg, square_values=square).values
        e_new = local_pod_embedding(new, cfg, square_values=square).values
        diff = e_new - e_old
        term = (diff * diff).sum() * w_l
        total = term if total is None else total + term
    return total * (1.0 / n_taps)


def output_kd_loss(old_logits: Tensor, new_logits: Tensor, k_old: int) -> Tensor:
    """Mean per-pixel KL from the old distribution to the current one.

    The current logits are sliced to the first k_old channels and
    re-normalized, so the new classes carry no distillation pressure.
    """
    if old_logits.ndim != 3 or new_logits.ndim != 3:
        raise ShapeMismatchError(
            f"expected (K,H,W) logits, got {old_logits.shape} and {new_logits.shape}"
        )
    if old_logits.shape[0] != k_old or new_logits.shape[0] < k_old:
        raise ShapeMismatchError(
            f"old logits {old_logits.shape} vs new logits {new_logits.shape} vs k_old {k_old}"
        )
    if old_logits.shape[1:] != new_logits.shape[1:]:
        raise ShapeMismatchError(
            f"spatial dims differ: {old_logits.shape} vs {new_logits.shape}"
        )
    z = old_logits.data - old_logits.data.max(axis=0, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=0, keepdims=True))
    p = np.exp(logp)
    n_pix = old_logits.shape[1] * old_logits.shape[2]
    logq = tensor.log_softmax_channel(new_logits[:k_old])
    cross = (Tensor(p) * logq).sum() * (-1.0 / n_pix)
    entropy = float((p * logp).sum()) / n_pix
    return cross + entropy


def export_embedding(emb: PodEmbedding, path: str | Path) -> None:
    serialize.save_tensor(path, emb.values.data)
