"""Synthetic shapes dataset and portable on-disk persistence.

Images are RGB float64 in [0,1], (3,H,W); masks are (H,W) integer class
ids with 0 = background. Each image carries 2 to 4 non-overlapping
primitive shapes over a textured background; the shape geometry and fill
color are both functions of the class id, so color alone separates the
classes and a tiny network can learn them in minutes. Image i's first
shape always has class (i mod K) + 1, which keeps every class frequent
in both splits.

Pixel values are quantized to 8 bits at generation time, so writing a
dataset to PPM/PGM files and reading it back is an exact round trip.
Per-image seeds derive from (seed, split, index, attempt), making the
generator deterministic and the overlap-retry path reproducible.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

__all__ = [
    "ShapesConfig",
    "Dataset",
    "generate",
    "class_color",
    "flip_horizontal",
    "write_ppm",
    "read_ppm",
    "write_pgm",
    "read_pgm",
    "save_dataset",
    "load_dataset",
]

MIN_SHAPES = 2
MAX_SHAPES = 4
PLACEMENT_RETRIES = 20
IMAGE_ATTEMPTS = 50
# radius multiplier per shape kind so every kind covers a similar pixel
# mass; thin kinds (cross, triangle) otherwise give much weaker signal
KIND_SCALE = (1.1, 0.75, 1.15, 1.2, 1.05)


@dataclass
class ShapesConfig:
    n_classes: int = 5
    image_size: tuple[int, int] = (32, 32)
    n_train: int = 200
    n_test: int = 50
    regimes: tuple[str, ...] = ()
    seed: int = 0

    def __post_init__(self):
        h, w = self.image_size
        if self.n_classes < 1 or h < 16 or w < 16:
            raise ValueError(f"degenerate shapes config: {self}")


@dataclass
class Dataset:
    items: list[tuple[np.ndarray, np.ndarray]]
    domains: list[str] = field(default_factory=list)
    n_classes: int = 0

    def __len__(self) -> int:
        return len(self.items)


def class_color(c: int, n_classes: int) -> np.ndarray:
    """Evenly spaced hues with alternating brightness, distinct per class.

    The brightness alternation keeps neighbours on the hue wheel apart
    even after 8-bit quantization, which matters for a 3-layer net.
    """
    hue = (c - 1) / max(n_classes, 1)
    value = 0.95 if c % 2 else 0.55
    return np.array(colorsys.hsv_to_rgb(hue, 0.95, value))


def _shape_mask(kind: int, h: int, w: int, cy: int, cx: int, r: int) -> np.ndarray:
    y, x = np.ogrid[:h, :w]
    dy, dx = y - cy, x - cx
    if kind == 0:  # disk
        return dy * dy + dx * dx <= r * r
    if kind == 1:  # square
        return (np.abs(dy) <= r) & (np.abs(dx) <= r)
    if kind == 2:  # upward triangle
        return (dy >= -r) & (dy <= r) & (np.abs(dx) <= (dy + r) / 2)
    if kind == 3:  # cross
        arm = max(r // 3, 1)
        return ((np.abs(dy) <= arm) & (np.abs(dx) <= r)) | (
            (np.abs(dx) <= arm) & (np.abs(dy) <= r)
        )
    return np.abs(dy) + np.abs(dx) <= r  # diamond


def _regime_style(regime: str, regimes: tuple[str, ...]) -> tuple[float, np.ndarray]:
    """(background brightness, tint) per style regime."""
    if not regimes or regime not in regimes:
        return 0.25, np.zeros(3)
    i = regimes.index(regime)
    spread = max(len(regimes) - 1, 1)
    brightness = 0.15 + 0.25 * i / spread
    tint = 0.08 * class_color(i + 1, len(regimes))
    return float(brightness), tint


def _render(cfg: ShapesConfig, split: int, index: int, regime: str) -> tuple[np.ndarray, np.ndarray]:
    h, w = cfg.image_size
    for attempt in range(IMAGE_ATTEMPTS):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, split, index, attempt]))
        brightness, tint = _regime_style(regime, cfg.regimes)
        img = brightness + tint[:, None, None] + rng.uniform(-0.05, 0.05, (3, h, w))
        mask = np.zeros((h, w), dtype=np.int64)
        n_shapes = int(rng.integers(MIN_SHAPES, MAX_SHAPES + 1))
        placed = 0
        for s in range(n_shapes):
            cls = (index % cfg.n_classes) + 1 if s == 0 else int(rng.integers(1, cfg.n_classes + 1))
            r_hi = min(h, w) // 5 + 2
            ok = False
            kind = (cls - 1) % 5
            for _ in range(PLACEMENT_RETRIES):
                r = max(3, round(int(rng.integers(4, r_hi)) * KIND_SCALE[kind]))
                cy = int(rng.integers(r, h - r))
                cx = int(rng.integers(r, w - r))
                candidate = _shape_mask(kind, h, w, cy, cx, r)
                if not (candidate & (mask > 0)).any():
                    ok = True
                    break
            if not ok:
                break
            color = class_color(cls, cfg.n_classes)
            noise = rng.uniform(-0.04, 0.04, (3, h, w))
            img = np.where(candidate, color[:, None, None] + noise, img)
            mask[candidate] = cls
            placed += 1
        if placed == n_shapes:
            img = np.round(np.clip(img, 0.0, 1.0) * 255.0) / 255.0
            return img, mask
    raise DataError(f"could not place shapes for image {index} after {IMAGE_ATTEMPTS} attempts")


def generate(cfg: ShapesConfig) -> tuple[Dataset, Dataset]:
    """Build (train, test). Deterministic: same config gives identical arrays."""
    sets = []
    for split, count in ((0, cfg.n_train), (1, cfg.n_test)):
        items = []
        domains = []
        for i in range(count):
            regime = cfg.regimes[i % len(cfg.regimes)] if cfg.regimes else ""
            items.append(_render(cfg, split, i, regime))
            domains.append(regime)
        sets.append(Dataset(items=items, domains=domains, n_classes=cfg.n_classes))
    return sets[0], sets[1]


def flip_horizontal(image: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return np.ascontiguousarray(image[..., ::-1]), np.ascontiguousarray(mask[..., ::-1])


# -- PPM/PGM codecs -------------------------------------------------------


def write_ppm(path: str | Path, image: np.ndarray) -> None:
    """Binary P6, 8-bit. Expects (3,H,W) floats in [0,1]."""
    c, h, w = image.shape
    if c != 3:
        raise DataError(f"{path}: PPM needs 3 channels, got {c}")
    pixels = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(pixels.transpose(1, 2, 0).tobytes())


def write_pgm(path: str | Path, mask: np.ndarray) -> None:
    """Binary P5, 8-bit. Class ids stored as gray levels."""
    if mask.min() < 0 or mask.max() > 255:
        raise DataError(f"{path}: mask ids outside [0,255]")
    h, w = mask.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(mask.astype(np.uint8).tobytes())


def _read_netpbm(path: str | Path, magic: bytes, channels: int) -> np.ndarray:
    blob = Path(path).read_bytes()
    pos = 0

    def token() -> bytes:
        nonlocal pos
        while pos < len(blob):
            ch = blob[pos : pos + 1]
            if ch == b"#":
                while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                    pos += 1
            elif ch.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataError(f"{path}: truncated header at byte {start}")
        return blob[start:pos]

    if token() != magic:
        raise DataError(f"{path}: expected {magic.decode()} file")
    try:
        w, h, maxval = int(token()), int(token()), int(token())
    except ValueError as exc:
        raise DataError(f"{path}: malformed header: {exc}") from exc
    if maxval != 255:
        raise DataError(f"{path}: unsupported maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    need = w * h * channels
    payload = blob[pos : pos + need]
    if len(payload) < need:
        raise DataError(
            f"{path}: truncated payload: need byte {pos + need}, file has {len(blob)}"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w, channels)


def read_ppm(path: str | Path) -> np.ndarray:
    raw = _read_netpbm(path, b"P6", 3)
    return raw.transpose(2, 0, 1).astype(np.float64) / 255.0


def read_pgm(path: str | Path) -> np.ndarray:
    return _read_netpbm(path, b"P5", 1)[:, :, 0].astype(np.int64)


# -- dataset directories --------------------------------------------------


def _save_split(ds: Dataset, root: Path, name: str) -> None:
    split = root / name
    (split / "images").mkdir(parents=True, exist_ok=True)
    (split / "masks").mkdir(parents=True, exist_ok=True)
    lines = []
    for i, (img, mask) in enumerate(ds.items):
        ipath = f"images/img_{i:04d}.ppm"
        mpath = f"masks/mask_{i:04d}.pgm"
        write_ppm(split / ipath, img)
        write_pgm(split / mpath, mask)
        lines.append(f"{ipath}\t{mpath}")
    (split / "index.tsv").write_text("\n".join(lines) + "\n")
    if any(ds.domains):
        (split / "domains.tsv").write_text("\n".join(ds.domains) + "\n")


def save_dataset(train: Dataset, test: Dataset, root: str | Path) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    h, w = train.items[0][0].shape[1:]
    meta = [
        f"n_classes = {train.n_classes}",
        f"image_h = {h}",
        f"image_w = {w}",
    ]
    regimes = [d for d in dict.fromkeys(train.domains) if d]
    if regimes:
        meta.append("regimes = " + ",".join(regimes))
    (root / "meta.txt").write_text("\n".join(meta) + "\n")
    _save_split(train, root, "train")
    _save_split(test, root, "test")


def _load_split(root: Path, name: str, n_classes: int) -> Dataset:
    split = root / name
    index = split / "index.tsv"
    if not index.exists():
        raise DataError(f"{index}: missing index file")
    items = []
    for ln, line in enumerate(index.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{index}:{ln}: expected 'image<TAB>mask', got {line!r}")
        img = read_ppm(split / parts[0])
        mask = read_pgm(split / parts[1])
        if img.shape[1:] != mask.shape:
            raise DataError(
                f"{split / parts[0]}: image {img.shape[1:]} vs mask {mask.shape} dimensions"
            )
        if mask.max() > n_classes:
            raise DataError(
                f"{split / parts[1]}: mask id {int(mask.max())} exceeds n_classes {n_classes}"
            )
        items.append((img, mask))
    domains_file = split / "domains.tsv"
    if domains_file.exists():
        domains = domains_file.read_text().splitlines()
        if len(domains) != len(items):
            raise DataError(f"{domains_file}: {len(domains)} tags for {len(items)} items")
    else:
        domains = [""] * len(items)
    return Dataset(items=items, domains=domains, n_classes=n_classes)


def load_dataset(root: str | Path) -> tuple[Dataset, Dataset, dict[str, str]]:
    root = Path(root)
    meta_path = root / "meta.txt"
    if not meta_path.exists():
        raise DataError(f"{meta_path}: missing dataset metadata")
    meta: dict[str, str] = {}
    for ln, line in enumerate(meta_path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        if "=" not in line:
            raise DataError(f"{meta_path}:{ln}: expected 'key = value', got {line!r}")
        k, v = line.split("=", 1)
        meta[k.strip()] = v.strip()
    try:
        n_classes = int(meta["n_classes"])
    except (KeyError, ValueError) as exc:
        raise DataError(f"{meta_path}: bad n_classes: {exc}") from exc
    return _load_split(root, "train", n_classes), _load_split(root, "test", n_classes), meta
