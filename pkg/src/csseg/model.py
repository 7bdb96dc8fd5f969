"""Small convolutional segmentation network with feature taps.

Three 3x3 conv blocks (stride 1, padding 1, ReLU) keep the spatial size
of the input, so tapped feature maps align with the image grid at every
layer. A 1x1 conv head maps features to one logit channel per known
class. `classes` records the global class id behind each head channel;
channel 0 is always background (id 0).

Taps are the pre-activation block outputs plus the logits, in depth
order, which is the list the distillation loss consumes.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import serialize, tensor
from .errors import DataError, ShapeMismatchError
from .tensor import Tensor

__all__ = ["SegNet", "save_checkpoint", "load_checkpoint"]

HEAD_INIT_SCALE = 0.01


class SegNet:
    def __init__(
        self,
        classes: list[int],
        in_channels: int = 3,
        hidden: tuple[int, ...] = (8, 8, 16),
        kernel_size: int = 3,
        seed: int = 0,
    ):
        if not classes or classes[0] != 0:
            raise ValueError(f"classes must start with background id 0, got {classes!r}")
        if len(set(classes)) != len(classes):
            raise ValueError(f"duplicate class ids in {classes!r}")
        self.classes = list(int(c) for c in classes)
        self.in_channels = int(in_channels)
        self.hidden = tuple(int(h) for h in hidden)
        self.kernel_size = int(kernel_size)
        self.blocks: list[tuple[Tensor, Tensor]] = []
        rng = np.random.default_rng(seed)
        c_in = self.in_channels
        k = self.kernel_size
        for c_out in self.hidden:
            limit = np.sqrt(6.0 / (c_in * k * k))
            w = Tensor(rng.uniform(-limit, limit, (c_out, c_in, k, k)), requires_grad=True)
            b = Tensor(np.zeros(c_out), requires_grad=True)
            self.blocks.append((w, b))
            c_in = c_out
        hw = rng.uniform(-HEAD_INIT_SCALE, HEAD_INIT_SCALE, (len(self.classes), c_in, 1, 1))
        self.head_w = Tensor(hw, requires_grad=True)
        self.head_b = Tensor(np.zeros(len(self.classes)), requires_grad=True)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def params(self) -> list[Tensor]:
        out: list[Tensor] = []
        for w, b in self.blocks:
            out.extend((w, b))
        out.extend((self.head_w, self.head_b))
        return out

    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def forward_with_taps(self, image: Tensor) -> tuple[Tensor, list[Tensor]]:
        """Return (logits, taps); taps are pre-ReLU block outputs then logits."""
        if image.ndim != 3 or image.shape[0] != self.in_channels:
            raise ShapeMismatchError(
                f"expected ({self.in_channels},H,W) image, got {image.shape}"
            )
        pad = self.kernel_size // 2
        taps: list[Tensor] = []
        x = image
        for w, b in self.blocks:
            pre = tensor.conv2d(x, w, b, stride=1, padding=pad)
            taps.append(pre)
            x = pre.relu()
        logits = tensor.conv2d(x, self.head_w, self.head_b, stride=1, padding=0)
        taps.append(logits)
        return logits, taps

    def forward(self, image: Tensor) -> Tensor:
        return self.forward_with_taps(image)[0]

    def _copy_weights_from(self, other: "SegNet") -> None:
        for (w, b), (ow, ob) in zip(self.blocks, other.blocks):
            w.data[...] = ow.data
            b.data[...] = ob.data

    def extend_head(self, new_classes: list[int], seed: int) -> "SegNet":
        """Grow the head by one channel per new class; old channels copy verbatim."""
        if not new_classes:
            raise ValueError("extend_head with no new classes is a misuse")
        overlap = set(new_classes) & set(self.classes)
        if overlap:
            raise ValueError(f"classes {sorted(overlap)} already present in the head")
        net = SegNet(
            self.classes + [int(c) for c in new_classes],
            in_channels=self.in_channels,
            hidden=self.hidden,
            kernel_size=self.kernel_size,
            seed=0,
        )
        net._copy_weights_from(self)
        k_old = self.n_classes
        net.head_w.data[:k_old] = self.head_w.data
        net.head_b.data[:k_old] = self.head_b.data
        rng = np.random.default_rng(seed)
        net.head_w.data[k_old:] = rng.uniform(
            -HEAD_INIT_SCALE, HEAD_INIT_SCALE, (len(new_classes),) + self.head_w.shape[1:]
        )
        net.head_b.data[k_old:] = 0.0
        return net

    def freeze_as_old(self) -> "SegNet":
        """Deep copy with gradients disabled; forward outputs are bitwise equal."""
        net = SegNet(
            self.classes,
            in_channels=self.in_channels,
            hidden=self.hidden,
            kernel_size=self.kernel_size,
            seed=0,
        )
        net._copy_weights_from(self)
        net.head_w.data[...] = self.head_w.data
        net.head_b.data[...] = self.head_b.data
        for p in net.params():
            p.requires_grad = False
        return net


def save_checkpoint(
    net: SegNet,
    directory: str | Path,
    step: int,
    seed: int,
    initial_classes: list[int] | None = None,
) -> None:
    """Write manifest.txt plus one binary blob per parameter, declaration order."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    params = net.params()
    lines = [
        "format = csseg-checkpoint",
        "in_channels = " + str(net.in_channels),
        "hidden = " + ",".join(str(h) for h in net.hidden),
        "kernel_size = " + str(net.kernel_size),
        "classes = " + ",".join(str(c) for c in net.classes),
        "n_classes = " + str(net.n_classes),
        "step = " + str(step),
        "seed = " + str(seed),
        "n_params = " + str(len(params)),
    ]
    if initial_classes is not None:
        lines.insert(6, "initial_classes = " + ",".join(str(c) for c in initial_classes))
    (directory / "manifest.txt").write_text("\n".join(lines) + "\n")
    for i, p in enumerate(params):
        serialize.save_tensor(directory / f"param_{i:03d}.bin", p.data)


def load_checkpoint(directory: str | Path) -> tuple[SegNet, dict[str, str]]:
    directory = Path(directory)
    path = directory / "manifest.txt"
    if not path.exists():
        raise DataError(f"{path}: checkpoint manifest not found")
    manifest: dict[str, str] = {}
    for ln, raw in enumerate(path.read_text().splitlines(), start=1):
        if not raw.strip():
            continue
        if "=" not in raw:
            raise DataError(f"{path}:{ln}: expected 'key = value', got {raw!r}")
        key, value = raw.split("=", 1)
        manifest[key.strip()] = value.strip()
    try:
        net = SegNet(
            [int(c) for c in manifest["classes"].split(",")],
            in_channels=int(manifest["in_channels"]),
            hidden=tuple(int(h) for h in manifest["hidden"].split(",")),
            kernel_size=int(manifest["kernel_size"]),
            seed=0,
        )
        n_params = int(manifest["n_params"])
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: invalid manifest: {exc}") from exc
    params = net.params()
    if n_params != len(params):
        raise DataError(
            f"{path}: manifest declares {n_params} parameters, architecture has {len(params)}"
        )
    for i, p in enumerate(params):
        blob = serialize.load_tensor(directory / f"param_{i:03d}.bin")
        if blob.shape != p.shape:
            raise DataError(
                f"param_{i:03d}.bin: shape {blob.shape} does not match expected {p.shape}"
            )
        p.data[...] = blob
    return net, manifest
