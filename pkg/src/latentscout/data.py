"""Synthetic shortcut datasets, image-folder ingestion, IDX parsing, splitting.

Two synthetic generators plant a controllable spurious attribute (color or
zoom level) that correlates with the class label with probability ``p_corr``.
Each class gets its own glyph shape, so a shape-based (non-shortcut) solution
always exists.
"""

from __future__ import annotations

import io
import json
import math
import struct
import warnings
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .errors import ConfigurationError, ContractError, IdxParseError, IngestionError

ARCHIVE_SCHEMA_VERSION = 1

GLYPHS = ("circle", "square", "triangle", "cross", "star")


@dataclass
class LabeledImageSet:
    """Images in [0,1] with 1-based integer labels and stable sample ids."""

    images: np.ndarray  # N x h x w x c, float32 in [0,1]
    labels: np.ndarray  # N, int, values in 1..C
    ids: np.ndarray  # N, str
    class_names: list[str]
    shortcut_mask: np.ndarray | None = None  # N, bool; synthetic sets only

    def __post_init__(self):
        n = len(self.images)
        if not (len(self.labels) == len(self.ids) == n):
            raise ContractError("images, labels and ids must have equal length")
        if n and (self.images.min() < 0 or self.images.max() > 1):
            raise ContractError("pixel values must lie in [0,1]")
        if len(set(map(str, self.ids))) != n:
            raise ContractError("sample ids must be unique")
        c = len(self.class_names)
        if n and (self.labels.min() < 1 or self.labels.max() > c):
            raise ContractError(f"labels must lie in 1..{c}")

    def __len__(self) -> int:
        return len(self.images)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def subset(self, indices: np.ndarray) -> "LabeledImageSet":
        mask = None if self.shortcut_mask is None else self.shortcut_mask[indices]
        return LabeledImageSet(
            images=self.images[indices],
            labels=self.labels[indices],
            ids=self.ids[indices],
            class_names=list(self.class_names),
            shortcut_mask=mask,
        )


@dataclass
class SyntheticConfig:
    n_samples: int
    image_size: int
    n_classes: int
    p_corr: float
    seed: int
    palette: list[tuple[int, int, int]] | None = None  # color variant
    zoom_levels: list[float] | None = None  # zoom variant

    def validate_color(self):
        if self.palette is None or len(self.palette) != self.n_classes:
            raise ConfigurationError(
                f"palette must list exactly n_classes={self.n_classes} colors"
            )
        if not 0.0 <= self.p_corr <= 1.0:
            raise ConfigurationError("p_corr must lie in [0,1]")

    def validate_zoom(self):
        if self.zoom_levels is None or len(self.zoom_levels) != self.n_classes:
            raise ConfigurationError(
                f"zoom_levels must list exactly n_classes={self.n_classes} scales"
            )
        for z in self.zoom_levels:
            if not 0.0 < z <= 1.0:
                raise ConfigurationError(f"zoom level {z} outside (0, 1]")
        if not 0.0 <= self.p_corr <= 1.0:
            raise ConfigurationError("p_corr must lie in [0,1]")


DEFAULT_PALETTE = [
    (230, 25, 75),
    (60, 180, 75),
    (0, 130, 200),
    (255, 225, 25),
    (145, 30, 180),
]

# Supersampling factor for anti-aliased glyph rendering.
_SS = 4


def _draw_glyph(draw: ImageDraw.ImageDraw, glyph: str, cx: float, cy: float,
                half: float, color: tuple[int, int, int]):
    """Draw one filled glyph centered at (cx, cy), bounding half-size `half`."""
    if glyph == "circle":
        draw.ellipse([cx - half, cy - half, cx + half, cy + half], fill=color)
    elif glyph == "square":
        draw.rectangle([cx - half, cy - half, cx + half, cy + half], fill=color)
    elif glyph == "triangle":
        pts = [(cx, cy - half), (cx - half, cy + half), (cx + half, cy + half)]
        draw.polygon(pts, fill=color)
    elif glyph == "cross":
        arm = half / 3.0
        draw.rectangle([cx - arm, cy - half, cx + arm, cy + half], fill=color)
        draw.rectangle([cx - half, cy - arm, cx + half, cy + arm], fill=color)
    elif glyph == "star":
        pts = []
        for k in range(10):
            r = half if k % 2 == 0 else half * 0.45
            ang = -math.pi / 2 + k * math.pi / 5
            pts.append((cx + r * math.cos(ang), cy + r * math.sin(ang)))
        draw.polygon(pts, fill=color)
    else:
        raise ConfigurationError(f"unknown glyph {glyph!r}")


def _render(image_size: int, glyph: str, color: tuple[int, int, int],
            scale: float, dx: float = 0.0, dy: float = 0.0) -> np.ndarray:
    """Render one glyph on black background; scale is bbox side / image side."""
    s = image_size * _SS
    img = Image.new("RGB", (s, s), (0, 0, 0))
    draw = ImageDraw.Draw(img)
    half = scale * s / 2.0
    _draw_glyph(draw, glyph, s / 2.0 + dx * s, s / 2.0 + dy * s, half, color)
    img = img.resize((image_size, image_size), Image.BILINEAR)
    return np.asarray(img, dtype=np.float32) / 255.0


def generate_colored_shortcut(config: SyntheticConfig) -> LabeledImageSet:
    """Dataset where glyph color correlates with the class label.

    Each sample's class picks a glyph shape; its color is the class's palette
    entry with probability p_corr, otherwise a uniformly random palette entry.
    shortcut_mask records whether the realized color matches the class color.
    """
    config.validate_color()
    rng = np.random.default_rng(config.seed)
    n, c = config.n_samples, config.n_classes
    labels = rng.integers(0, c, size=n)  # 0-based here
    correlated = rng.random(n) < config.p_corr
    random_colors = rng.integers(0, c, size=n)
    color_idx = np.where(correlated, labels, random_colors)
    # nuisance factors, class-independent
    sizes = rng.uniform(0.45, 0.8, size=n)
    offs = rng.uniform(-0.08, 0.08, size=(n, 2))

    images = np.empty((n, config.image_size, config.image_size, 3), dtype=np.float32)
    for i in range(n):
        glyph = GLYPHS[labels[i] % len(GLYPHS)]
        images[i] = _render(config.image_size, glyph, tuple(config.palette[color_idx[i]]),
                            sizes[i], offs[i, 0], offs[i, 1])
    return LabeledImageSet(
        images=images,
        labels=(labels + 1).astype(np.int64),
        ids=np.array([f"color-{config.seed}-{i:06d}" for i in range(n)]),
        class_names=[f"class_{k + 1}" for k in range(c)],
        shortcut_mask=(color_idx == labels),
    )


# Glyph order for the zoom variant: the first two shapes are both spiky and
# hard to tell apart when drawn small, so the scale cue stays genuinely
# attractive to a classifier while a shape-based solution still exists.
_ZOOM_GLYPHS = ("cross", "star", "triangle", "circle", "square")


def generate_zoom_shortcut(config: SyntheticConfig) -> LabeledImageSet:
    """Dataset where glyph scale correlates with the class label.

    Each class has its own glyph shape (a non-shortcut solution exists) and a
    class-typical zoom level applied with probability p_corr, otherwise the
    zoom level of a uniformly random class.
    """
    config.validate_zoom()
    rng = np.random.default_rng(config.seed)
    n, c = config.n_samples, config.n_classes
    labels = rng.integers(0, c, size=n)
    correlated = rng.random(n) < config.p_corr
    random_cls = rng.integers(0, c, size=n)
    zoom_src = np.where(correlated, labels, random_cls)
    zooms = np.asarray(config.zoom_levels, dtype=np.float64)[zoom_src]

    color = (235, 235, 235)
    images = np.empty((n, config.image_size, config.image_size, 3), dtype=np.float32)
    for i in range(n):
        glyph = _ZOOM_GLYPHS[labels[i] % len(_ZOOM_GLYPHS)]
        images[i] = _render(config.image_size, glyph, color, zooms[i])
    return LabeledImageSet(
        images=images,
        labels=(labels + 1).astype(np.int64),
        ids=np.array([f"zoom-{config.seed}-{i:06d}" for i in range(n)]),
        class_names=[f"class_{k + 1}" for k in range(c)],
        shortcut_mask=(zooms == np.asarray(config.zoom_levels)[labels]),
    )


def load_image_folder(path: str | Path, image_size: int) -> LabeledImageSet:
    """Load a class-per-subdirectory image folder, resized to image_size."""
    root = Path(path)
    if not root.is_dir():
        raise IngestionError(f"not a directory: {root}")
    class_dirs = sorted(d for d in root.iterdir() if d.is_dir())
    if not class_dirs:
        raise IngestionError(f"no class subdirectories in {root}")

    images, labels, ids, class_names = [], [], [], []
    for ci, cdir in enumerate(class_dirs):
        class_names.append(cdir.name)
        count = 0
        for f in sorted(cdir.iterdir()):
            if not f.is_file():
                continue
            try:
                with Image.open(f) as im:
                    im = im.convert("RGB").resize((image_size, image_size), Image.BILINEAR)
                    arr = np.asarray(im, dtype=np.float32) / 255.0
            except Exception as exc:  # unreadable file: skip with warning
                warnings.warn(f"skipping unreadable image {f}: {exc}")
                continue
            images.append(arr)
            labels.append(ci + 1)
            ids.append(f"{cdir.name}/{f.name}")
            count += 1
        if count == 0:
            raise IngestionError(f"class directory {cdir} contains no readable images")
    return LabeledImageSet(
        images=np.stack(images),
        labels=np.asarray(labels, dtype=np.int64),
        ids=np.asarray(ids),
        class_names=class_names,
    )


_IDX_TYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}


def parse_idx(path: str | Path) -> np.ndarray:
    """Parse an IDX file (big-endian; magic 00 00 <type> <rank>)."""
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise IdxParseError("file shorter than IDX magic", len(data))
    if data[0] != 0 or data[1] != 0:
        raise IdxParseError(f"bad magic bytes {data[0]:02x} {data[1]:02x}", 0)
    type_byte, rank = data[2], data[3]
    if type_byte not in _IDX_TYPES:
        raise IdxParseError(f"unsupported type byte 0x{type_byte:02x}", 2)
    header_end = 4 + 4 * rank
    if len(data) < header_end:
        raise IdxParseError(f"truncated dimension header (rank {rank})", len(data))
    dims = struct.unpack(f">{rank}I", data[4:header_end])
    dtype = _IDX_TYPES[type_byte]
    n_items = int(np.prod(dims, dtype=np.int64)) if rank else 1
    expected_end = header_end + n_items * dtype.itemsize
    if len(data) < expected_end:
        raise IdxParseError(
            f"payload truncated: expected {expected_end} bytes total", len(data)
        )
    arr = np.frombuffer(data[header_end:expected_end], dtype=dtype)
    return arr.reshape(dims).astype(dtype.newbyteorder("="))


def write_idx(path: str | Path, array: np.ndarray):
    """Serialize an array to IDX (inverse of parse_idx)."""
    native = {np.dtype(dt.str.replace(">", "=")): tb for tb, dt in _IDX_TYPES.items()}
    dtype = np.dtype(array.dtype)
    if dtype not in native:
        raise ConfigurationError(f"dtype {dtype} not representable in IDX")
    type_byte = native[dtype]
    with open(path, "wb") as f:
        f.write(bytes([0, 0, type_byte, array.ndim]))
        f.write(struct.pack(f">{array.ndim}I", *array.shape))
        f.write(np.ascontiguousarray(array, dtype=dtype.newbyteorder(">")).tobytes())


def split(dataset: LabeledImageSet, ratios: tuple[float, float, float],
          seed: int) -> tuple[LabeledImageSet, LabeledImageSet, LabeledImageSet]:
    """Deterministic stratified train/val/test split."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigurationError(f"ratios {ratios} must sum to 1")
    n_parts = sum(1 for r in ratios if r > 0)
    rng = np.random.default_rng(seed)
    parts: list[list[np.ndarray]] = [[], [], []]
    deficit = [0.0, 0.0, 0.0]
    for cls in range(1, dataset.n_classes + 1):
        idx = np.flatnonzero(dataset.labels == cls)
        if len(idx) == 0:
            continue
        if len(idx) < n_parts:
            raise ConfigurationError(
                f"class {cls} has {len(idx)} samples, fewer than {n_parts} splits"
            )
        rng.shuffle(idx)
        # largest-remainder allocation keeps per-class proportions within 1;
        # the running deficit term balances remainder ties across classes
        exact = [r * len(idx) for r in ratios]
        counts = [int(math.floor(e)) for e in exact]
        order = sorted(
            range(3),
            key=lambda k: exact[k] - counts[k] + deficit[k],
            reverse=True,
        )
        for k in order[: len(idx) - sum(counts)]:
            counts[k] += 1
        # guarantee nonzero parts get at least one sample
        for k in range(3):
            if ratios[k] > 0 and counts[k] == 0:
                donor = max(range(3), key=lambda m: counts[m])
                counts[donor] -= 1
                counts[k] += 1
        start = 0
        for k in range(3):
            parts[k].append(idx[start:start + counts[k]])
            start += counts[k]
            deficit[k] += exact[k] - counts[k]
    splits = []
    for k in range(3):
        sel = np.sort(np.concatenate(parts[k])) if parts[k] else np.array([], dtype=int)
        splits.append(dataset.subset(sel))
    return tuple(splits)


def save_archive(dataset: LabeledImageSet, path: str | Path,
                 config: dict | None = None, seed: int | None = None):
    """Write the dataset as a single zip archive with a JSON manifest."""
    manifest = {
        "schema_version": ARCHIVE_SCHEMA_VERSION,
        "n_samples": len(dataset),
        "class_names": dataset.class_names,
        "config": config,
        "seed": seed,
        "has_shortcut_mask": dataset.shortcut_mask is not None,
    }
    with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("manifest.json", json.dumps(manifest, indent=2))
        for name, arr in [("images", dataset.images), ("labels", dataset.labels),
                          ("ids", dataset.ids.astype(str)),
                          ("shortcut_mask", dataset.shortcut_mask)]:
            if arr is None:
                continue
            buf = io.BytesIO()
            np.save(buf, np.asarray(arr))
            zf.writestr(f"{name}.npy", buf.getvalue())


def load_archive(path: str | Path) -> tuple[LabeledImageSet, dict]:
    """Read a dataset archive written by save_archive."""
    with zipfile.ZipFile(path) as zf:
        manifest = json.loads(zf.read("manifest.json"))
        if manifest.get("schema_version") != ARCHIVE_SCHEMA_VERSION:
            raise IngestionError(
                f"unsupported archive schema {manifest.get('schema_version')}"
            )

        def _load(name):
            return np.load(io.BytesIO(zf.read(f"{name}.npy")))

        mask = _load("shortcut_mask") if manifest["has_shortcut_mask"] else None
        ds = LabeledImageSet(
            images=_load("images"),
            labels=_load("labels"),
            ids=_load("ids"),
            class_names=list(manifest["class_names"]),
            shortcut_mask=mask,
        )
    return ds, manifest
