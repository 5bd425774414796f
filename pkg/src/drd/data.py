"""Dataset ingestion, large-raster tiling with ignore-aware padding,
prediction stitching, and a deterministic synthetic dataset generator for
desk-scale experiments."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from PIL import Image

log = logging.getLogger(__name__)

IGNORE_INDEX = 255

# ISPRS-style color encoding of the aerial classes; clutter/background maps to
# the ignore index and is excluded from losses and metrics.
AERIAL_CLASS_COLORS = {
    (255, 255, 255): 0,  # impervious surfaces
    (0, 0, 255): 1,      # buildings
    (0, 255, 255): 2,    # low vegetation
    (0, 255, 0): 3,      # trees
    (255, 255, 0): 4,    # cars
    (255, 0, 0): IGNORE_INDEX,  # clutter / background
}

# well-separated base colors for the synthetic generator, class index -> RGB
_SYNTH_PALETTE = np.array(
    [
        (110, 110, 110),
        (220, 50, 50),
        (50, 190, 60),
        (45, 70, 220),
        (230, 210, 40),
        (200, 50, 200),
        (40, 210, 210),
        (240, 140, 30),
        (130, 80, 20),
        (240, 240, 240),
    ],
    dtype=np.uint8,
)


@dataclass(frozen=True)
class TileSpec:
    """Tile and stride sizes for cropping large rasters."""

    tile_h: int
    tile_w: int
    stride_h: int
    stride_w: int
    pad_mode: str = "reflect"

    def __post_init__(self):
        if self.tile_h < 1 or self.tile_w < 1:
            raise ValueError("tile size must be positive")
        if not (0 < self.stride_h <= self.tile_h and 0 < self.stride_w <= self.tile_w):
            raise ValueError("stride must satisfy 0 < stride <= tile size")
        if self.pad_mode not in ("reflect", "zero"):
            raise ValueError(f"pad_mode must be 'reflect' or 'zero', got {self.pad_mode!r}")

    @staticmethod
    def square(tile: int, stride: int | None = None, pad_mode: str = "reflect") -> "TileSpec":
        stride = tile if stride is None else stride
        return TileSpec(tile, tile, stride, stride, pad_mode)


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the generated colored-shapes segmentation task."""

    num_images: int
    size: tuple[int, int]
    num_classes: int
    shape_family: str = "rects"
    seed: int = 0
    noise_sigma: float = 18.0
    train_label_noise: float = 0.0  # fraction of train-split pixels relabeled at random

    def __post_init__(self):
        if self.num_images < 1:
            raise ValueError("num_images must be >= 1")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.num_classes > len(_SYNTH_PALETTE):
            raise ValueError(f"at most {len(_SYNTH_PALETTE)} classes supported")
        if self.shape_family not in ("rects", "blobs"):
            raise ValueError(f"shape_family must be 'rects' or 'blobs', got {self.shape_family!r}")
        if min(self.size) < 8:
            raise ValueError("images must be at least 8x8")
        if not 0.0 <= self.train_label_noise < 1.0:
            raise ValueError("train_label_noise must be in [0, 1)")


class Tile(NamedTuple):
    image: np.ndarray
    labels: np.ndarray
    origin: tuple[int, int]  # (row, col) in the source raster


@dataclass
class SegmentationDataset:
    """Paired images (H, W, 3 uint8) and label masks (H, W int), immutable
    after construction; an 80/20 train/val split is fixed by sample order."""

    images: list
    labels: list
    num_classes: int
    ignore_index: int = IGNORE_INDEX
    train_indices: list = field(default_factory=list)
    val_indices: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError("images and labels differ in length")
        if not self.train_indices and not self.val_indices:
            n = len(self.images)
            n_train = max(1, int(round(0.8 * n)))
            if n >= 2:
                n_train = min(n_train, n - 1)
            self.train_indices = list(range(n_train))
            self.val_indices = list(range(n_train, n))

    def __len__(self):
        return len(self.images)

    def class_pixel_counts(self) -> np.ndarray:
        counts = np.zeros(self.num_classes, dtype=np.int64)
        for lbl in self.labels:
            kept = lbl[lbl != self.ignore_index]
            counts += np.bincount(kept.astype(np.int64), minlength=self.num_classes)
        return counts


def validate_labels(labels: np.ndarray, num_classes: int, ignore_index: int = IGNORE_INDEX,
                    name: str = "labels") -> None:
    bad = (labels != ignore_index) & ((labels < 0) | (labels >= num_classes))
    if bad.any():
        offender = int(labels[bad].flat[0])
        raise ValueError(
            f"{name} contains class index {offender} outside [0, {num_classes}) "
            f"with ignore_index={ignore_index}")


def _tile_starts(size: int, tile: int, stride: int) -> list[int]:
    """Window starts covering [0, size); the last window is clamped so only
    rasters smaller than the tile ever need padding."""
    if size <= tile:
        return [0]
    starts = [0]
    while starts[-1] + tile < size:
        starts.append(min(starts[-1] + stride, size - tile))
    return starts


def _reflect_indices(size: int, total: int) -> np.ndarray:
    """Mirror-extension indices of length `total` into [0, size); works for
    arbitrarily large extensions, unlike np.pad's reflect mode."""
    if size == 1:
        return np.zeros(total, dtype=np.int64)
    period = 2 * (size - 1)
    idx = np.arange(total, dtype=np.int64) % period
    return np.where(idx < size, idx, period - idx)


def _pad_raster(image: np.ndarray, labels: np.ndarray, out_h: int, out_w: int,
                pad_mode: str, ignore_index: int):
    h, w = labels.shape
    padded_labels = np.full((out_h, out_w), ignore_index, dtype=labels.dtype)
    padded_labels[:h, :w] = labels
    if pad_mode == "zero":
        padded_image = np.zeros((out_h, out_w) + image.shape[2:], dtype=image.dtype)
        padded_image[:h, :w] = image
    else:
        padded_image = image[np.ix_(_reflect_indices(h, out_h), _reflect_indices(w, out_w))]
    return padded_image, padded_labels


def tile_raster(image: np.ndarray, labels: np.ndarray, spec: TileSpec,
                ignore_index: int = IGNORE_INDEX) -> list[Tile]:
    """Cut an image/label raster into tiles covering every pixel at least once.

    Interior tile starts advance by the stride; the final start per axis is
    clamped to the raster edge. A raster smaller than the tile is padded per
    `spec.pad_mode`, and padded label pixels are set to the ignore index so
    they never contribute to losses or metrics. Origins are raster coordinates
    of each tile's top-left corner, as needed for stitching.
    """
    image = np.asarray(image)
    labels = np.asarray(labels)
    if image.shape[:2] != labels.shape:
        raise ValueError(f"image {image.shape[:2]} and labels {labels.shape} disagree on raster size")
    h, w = labels.shape
    if h < 1 or w < 1:
        raise ValueError("raster must be at least 1x1")

    if h < spec.tile_h or w < spec.tile_w:
        image, labels = _pad_raster(image, labels, max(h, spec.tile_h), max(w, spec.tile_w),
                                    spec.pad_mode, ignore_index)

    tiles = []
    for r0 in _tile_starts(h, spec.tile_h, spec.stride_h):
        for c0 in _tile_starts(w, spec.tile_w, spec.stride_w):
            window = (slice(r0, r0 + spec.tile_h), slice(c0, c0 + spec.tile_w))
            tiles.append(Tile(image[window].copy(), labels[window].copy(), (r0, c0)))
    return tiles


def stitch_predictions(tiles, out_h: int, out_w: int) -> np.ndarray:
    """Average overlapping probability tiles back into a (c, out_h, out_w) map.

    Tiles are (score_map, origin) pairs; regions extending past the output
    bounds (from padded tiles) are cropped. Raises if any output pixel is not
    covered by at least one tile.
    """
    acc = None
    count = np.zeros((out_h, out_w), dtype=np.int64)
    for score_map, origin in tiles:
        score_map = np.asarray(score_map, dtype=np.float64)
        if score_map.ndim != 3:
            raise ValueError(f"score map must be (c, h, w), got {score_map.shape}")
        r0, c0 = origin
        if r0 < 0 or c0 < 0:
            raise ValueError(f"negative tile origin {origin}")
        if acc is None:
            acc = np.zeros((score_map.shape[0], out_h, out_w), dtype=np.float64)
        elif score_map.shape[0] != acc.shape[0]:
            raise ValueError("tiles disagree on class count")
        r1 = min(r0 + score_map.shape[1], out_h)
        c1 = min(c0 + score_map.shape[2], out_w)
        if r1 <= r0 or c1 <= c0:
            continue
        acc[:, r0:r1, c0:c1] += score_map[:, :r1 - r0, :c1 - c0]
        count[r0:r1, c0:c1] += 1
    if acc is None:
        raise ValueError("no tiles given")
    if (count == 0).any():
        r, c = np.argwhere(count == 0)[0]
        raise ValueError(f"pixel ({r}, {c}) is not covered by any tile")
    return acc / count


def _draw_shape(label: np.ndarray, cls: int, family: str, rng: np.random.Generator) -> None:
    h, w = label.shape
    sh = rng.integers(max(2, h // 5), max(3, int(h * 0.45)), endpoint=True)
    sw = rng.integers(max(2, w // 5), max(3, int(w * 0.45)), endpoint=True)
    r0 = rng.integers(0, max(1, h - sh), endpoint=True)
    c0 = rng.integers(0, max(1, w - sw), endpoint=True)
    if family == "rects":
        label[r0:r0 + sh, c0:c0 + sw] = cls
    else:
        cy, cx = r0 + sh / 2, c0 + sw / 2
        yy, xx = np.mgrid[0:h, 0:w]
        mask = ((yy - cy) / (sh / 2)) ** 2 + ((xx - cx) / (sw / 2)) ** 2 <= 1.0
        label[mask] = cls


def generate_synthetic(spec: SyntheticSpec) -> SegmentationDataset:
    """Deterministic colored-shapes segmentation dataset.

    Each image is a class-0 background with one shape per remaining class
    drawn on top (later shapes may overlap earlier ones; images are redrawn
    until every class is visible). Pixel color is the class's palette entry
    plus gaussian noise, so the task is easy for a small network but not
    noise-free. With `train_label_noise` set, that fraction of the train
    split's label pixels is flipped to random other classes while images and
    the val split stay clean, which gives a distilling teacher's soft outputs
    something to improve on. Identical specs produce byte-identical datasets.
    """
    rng = np.random.default_rng(spec.seed)
    h, w = spec.size
    images, labels = [], []
    for _ in range(spec.num_images):
        for _attempt in range(100):
            label = np.zeros((h, w), dtype=np.uint8)
            for cls in range(1, spec.num_classes):
                _draw_shape(label, cls, spec.shape_family, rng)
            if len(np.unique(label)) == spec.num_classes:
                break
        else:
            raise RuntimeError("could not place all classes; image too small for num_classes")
        base = _SYNTH_PALETTE[label].astype(np.float64)
        noisy = base + rng.normal(0.0, spec.noise_sigma, size=base.shape)
        images.append(np.clip(noisy, 0, 255).astype(np.uint8))
        labels.append(label)
    ds = SegmentationDataset(images=images, labels=labels, num_classes=spec.num_classes)
    if spec.train_label_noise > 0:
        for i in ds.train_indices:
            lbl = ds.labels[i]
            flip = rng.random(lbl.shape) < spec.train_label_noise
            offset = rng.integers(1, spec.num_classes, size=lbl.shape)
            lbl[flip] = (lbl[flip] + offset[flip]) % spec.num_classes
    return ds


def random_flips(image: np.ndarray, labels: np.ndarray, rng: np.random.Generator):
    """Random horizontal/vertical flip pair, the only augmentation used."""
    if rng.random() < 0.5:
        image, labels = image[:, ::-1], labels[:, ::-1]
    if rng.random() < 0.5:
        image, labels = image[::-1, :], labels[::-1, :]
    return np.ascontiguousarray(image), np.ascontiguousarray(labels)


def rgb_labels_to_indices(rgb: np.ndarray, colors: dict = None,
                          ignore_index: int = IGNORE_INDEX) -> np.ndarray:
    """One-shot conversion of a color-encoded label raster to class indices.

    Unknown colors are an error: a silently mislabeled raster is worse than a
    loud one.
    """
    colors = AERIAL_CLASS_COLORS if colors is None else colors
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) color raster, got {rgb.shape}")
    out = np.full(rgb.shape[:2], -1, dtype=np.int64)
    for color, idx in colors.items():
        out[(rgb == np.array(color, dtype=rgb.dtype)).all(axis=2)] = idx
    if (out == -1).any():
        r, c = np.argwhere(out == -1)[0]
        raise ValueError(f"unknown label color {tuple(int(v) for v in rgb[r, c])} at ({r}, {c})")
    return out


_IMAGE_SUFFIXES = (".png", ".tif", ".tiff")


def load_dataset(root, layout: str = "folder_pairs", num_classes: int | None = None,
                 ignore_index: int = IGNORE_INDEX) -> SegmentationDataset:
    """Load an images/ + labels/ folder-pair dataset.

    Samples are matched by file stem and sorted; labels must be single-band
    class-index rasters. With `num_classes` given, any out-of-range index is
    rejected naming the offending file; otherwise the class count is inferred.
    """
    if layout != "folder_pairs":
        raise ValueError(f"unknown layout {layout!r}")
    root = Path(root)
    image_dir, label_dir = root / "images", root / "labels"
    if not image_dir.is_dir() or not label_dir.is_dir():
        raise ValueError(f"no samples: {root} must contain images/ and labels/")

    image_files = sorted(p for p in image_dir.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES)
    if not image_files:
        raise ValueError(f"no samples under {image_dir}")

    images, labels = [], []
    for img_path in image_files:
        lbl_path = label_dir / (img_path.stem + ".png")
        if not lbl_path.exists():
            raise ValueError(f"missing label for {img_path.name}: expected {lbl_path}")
        img = np.asarray(Image.open(img_path).convert("RGB"))
        lbl = np.asarray(Image.open(lbl_path))
        if lbl.ndim != 2:
            raise ValueError(f"label {lbl_path.name} must be single-band, got shape {lbl.shape}")
        if img.shape[:2] != lbl.shape:
            raise ValueError(f"{img_path.name}: image {img.shape[:2]} vs label {lbl.shape}")
        if num_classes is not None:
            try:
                validate_labels(lbl, num_classes, ignore_index, name=str(lbl_path.name))
            except ValueError as e:
                raise ValueError(str(e)) from None
        images.append(img)
        labels.append(lbl)

    if num_classes is None:
        peak = max(int(l[l != ignore_index].max(initial=0)) for l in labels)
        num_classes = peak + 1
    ds = SegmentationDataset(images=images, labels=labels, num_classes=num_classes,
                             ignore_index=ignore_index)
    log.info("loaded %d samples from %s; per-class pixel counts: %s",
             len(ds), root, ds.class_pixel_counts().tolist())
    return ds


def save_dataset(dataset: SegmentationDataset, root) -> None:
    """Write a dataset as the folder-pairs layout (PNG images and labels)."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "labels").mkdir(parents=True, exist_ok=True)
    digits = max(5, len(str(len(dataset))))
    for i, (img, lbl) in enumerate(zip(dataset.images, dataset.labels)):
        stem = f"sample_{i:0{digits}d}"
        Image.fromarray(np.asarray(img, dtype=np.uint8)).save(root / "images" / f"{stem}.png")
        Image.fromarray(np.asarray(lbl, dtype=np.uint8)).save(root / "labels" / f"{stem}.png")
