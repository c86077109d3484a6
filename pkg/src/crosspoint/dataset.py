"""Tile datasets: annotation I/O, augmentation transforms, train/test split.

A dataset is a list of :class:`AnnotatedTile`. On disk it is one JSON
document (an array of ``{tile_id, image_path, boxes}`` records, boxes in
center form ``[cx, cy, w, h]``) next to a directory of 8-bit RGB PNG tiles.
``image_path`` entries are resolved relative to the JSON file's directory.

The five augmentation transforms mirror common raster practice: horizontal
and vertical flips, rotation by an arbitrary angle with canvas expansion
(white fill, boxes replaced by the axis-aligned hull of their rotated
corners), separable Gaussian blur with clamped borders, and area-average
downscaling by a factor in [3, 5].
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .geometry import Box

__all__ = [
    "AnnotationError",
    "Tile",
    "AnnotatedTile",
    "DatasetSplit",
    "read_tile",
    "write_tile",
    "load_annotations",
    "save_annotations",
    "flip_h",
    "flip_v",
    "rotate",
    "gaussian_blur",
    "downscale",
    "augment_dataset",
    "split_train_test",
    "save_split",
    "load_split",
]

MIN_TILE_SIDE = 8


class AnnotationError(ValueError):
    """Raised when an annotation file or record cannot be used."""


@dataclass
class Tile:
    """One 8-bit RGB map tile."""

    id: str
    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError(
                f"tile {self.id!r}: pixels must be H x W x 3, got shape {self.pixels.shape}"
            )
        if self.pixels.dtype != np.uint8:
            raise ValueError(f"tile {self.id!r}: pixels must be uint8, got {self.pixels.dtype}")
        if self.height < MIN_TILE_SIDE or self.width < MIN_TILE_SIDE:
            raise ValueError(
                f"tile {self.id!r}: sides must be at least {MIN_TILE_SIDE} px, "
                f"got {self.width} x {self.height}"
            )

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass
class AnnotatedTile:
    """A tile plus its ground-truth intersection boxes, in a stable order."""

    tile: Tile
    ground_truths: list[Box] = field(default_factory=list)

    def __post_init__(self):
        w, h = self.tile.width, self.tile.height
        for i, b in enumerate(self.ground_truths):
            x1, y1, x2, y2 = b.corners()
            if x2 <= 0 or y2 <= 0 or x1 >= w or y1 >= h:
                raise ValueError(
                    f"tile {self.tile.id!r}: ground truth {i} at "
                    f"({b.cx}, {b.cy}) lies outside the tile bounds"
                )


@dataclass
class DatasetSplit:
    """Disjoint train/test tile id lists plus the seed that produced them."""

    train: list[str]
    test: list[str]
    seed: int

    def __post_init__(self):
        overlap = set(self.train) & set(self.test)
        if overlap:
            raise ValueError(f"split is not disjoint: {sorted(overlap)[:5]}")


def read_tile(path: str | os.PathLike, tile_id: str) -> Tile:
    """Load a PNG as an RGB tile; an alpha channel is dropped."""
    with Image.open(path) as img:
        pixels = np.asarray(img.convert("RGB"))
    return Tile(id=tile_id, pixels=pixels)


def write_tile(tile: Tile, path: str | os.PathLike) -> None:
    Image.fromarray(tile.pixels, mode="RGB").save(path, format="PNG")


def _record_error(index: int, field_name: str, detail: str) -> AnnotationError:
    return AnnotationError(f"record {index}, field {field_name!r}: {detail}")


def load_annotations(path: str | os.PathLike) -> list[AnnotatedTile]:
    """Read a dataset from its JSON annotation file.

    Image paths are resolved relative to the JSON file's directory.
    """
    path = os.fspath(path)
    with open(path, "r", encoding="utf-8") as fh:
        try:
            records = json.load(fh)
        except json.JSONDecodeError as e:
            raise AnnotationError(
                f"{path}: parse error at line {e.lineno}, column {e.colno}: {e.msg}"
            ) from e
    if not isinstance(records, list):
        raise AnnotationError(f"{path}: top level must be an array of records")

    base = os.path.dirname(os.path.abspath(path))
    items: list[AnnotatedTile] = []
    for i, rec in enumerate(records):
        if not isinstance(rec, dict):
            raise _record_error(i, "<record>", "must be an object")
        try:
            tile_id = rec["tile_id"]
            image_path = rec["image_path"]
            boxes = rec["boxes"]
        except KeyError as e:
            raise _record_error(i, e.args[0], "missing") from e
        if not isinstance(tile_id, str) or not tile_id:
            raise _record_error(i, "tile_id", "must be a non-empty string")
        if not isinstance(boxes, list):
            raise _record_error(i, "boxes", "must be an array of [cx, cy, w, h]")
        resolved = image_path if os.path.isabs(image_path) else os.path.join(base, image_path)
        if not os.path.isfile(resolved):
            raise AnnotationError(
                f"record {i}: tile {tile_id!r} references missing image file {image_path!r}"
            )
        gts = []
        for j, b in enumerate(boxes):
            if not (isinstance(b, list) and len(b) == 4):
                raise _record_error(i, f"boxes[{j}]", "must be [cx, cy, w, h]")
            try:
                gts.append(Box(*(float(v) for v in b)))
            except (TypeError, ValueError) as e:
                raise _record_error(i, f"boxes[{j}]", str(e)) from e
        tile = read_tile(resolved, tile_id)
        try:
            items.append(AnnotatedTile(tile=tile, ground_truths=gts))
        except ValueError as e:
            raise _record_error(i, "boxes", str(e)) from e
    return items


def save_annotations(
    items: list[AnnotatedTile],
    path: str | os.PathLike,
    image_dir: str | os.PathLike | None = None,
) -> None:
    """Write the JSON annotation file and one PNG per tile.

    Tiles go to ``image_dir`` (default: ``<json stem>_tiles`` next to the
    JSON file) as ``<tile_id>.png``; the JSON stores relative paths so the
    directory tree can be moved as a unit.
    """
    path = os.fspath(path)
    base = os.path.dirname(os.path.abspath(path))
    if image_dir is None:
        stem = os.path.splitext(os.path.basename(path))[0]
        image_dir = os.path.join(base, stem + "_tiles")
    image_dir = os.fspath(image_dir)
    os.makedirs(image_dir, exist_ok=True)

    seen: set[str] = set()
    records = []
    for item in items:
        tid = item.tile.id
        if tid in seen:
            raise AnnotationError(f"duplicate tile id {tid!r}")
        seen.add(tid)
        img_path = os.path.join(image_dir, f"{tid}.png")
        write_tile(item.tile, img_path)
        records.append(
            {
                "tile_id": tid,
                "image_path": os.path.relpath(img_path, base),
                "boxes": [[b.cx, b.cy, b.w, b.h] for b in item.ground_truths],
            }
        )
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(records, fh, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


def flip_h(t: AnnotatedTile) -> AnnotatedTile:
    """Mirror left-right; box centers reflect as cx -> W - cx."""
    w = t.tile.width
    tile = Tile(id=t.tile.id, pixels=np.ascontiguousarray(t.tile.pixels[:, ::-1]))
    boxes = [Box(w - b.cx, b.cy, b.w, b.h) for b in t.ground_truths]
    return AnnotatedTile(tile=tile, ground_truths=boxes)


def flip_v(t: AnnotatedTile) -> AnnotatedTile:
    """Mirror top-bottom; box centers reflect as cy -> H - cy."""
    h = t.tile.height
    tile = Tile(id=t.tile.id, pixels=np.ascontiguousarray(t.tile.pixels[::-1]))
    boxes = [Box(b.cx, h - b.cy, b.w, b.h) for b in t.ground_truths]
    return AnnotatedTile(tile=tile, ground_truths=boxes)


def rotate(t: AnnotatedTile, theta: float) -> AnnotatedTile:
    """Rotate by ``theta`` degrees about the tile center.

    The canvas expands to hold every source pixel, new area is white, and
    each box becomes the axis-aligned bounding box of its rotated corners.
    A point at offset (dx, dy) from the center maps to
    (cos t * dx + sin t * dy, -sin t * dx + cos t * dy), which at 90 degrees
    sends (x, y) to (y, W - x). theta = 0 is an exact identity.
    """
    if not 0.0 <= theta < 360.0:
        raise ValueError(f"theta must lie in [0, 360), got {theta}")
    rad = math.radians(theta)
    c, s = math.cos(rad), math.sin(rad)
    w, h = t.tile.width, t.tile.height
    # epsilon guard keeps multiples of 90 degrees at their exact dimensions
    new_w = int(math.ceil(w * abs(c) + h * abs(s) - 1e-9))
    new_h = int(math.ceil(w * abs(s) + h * abs(c) - 1e-9))

    xs = np.arange(new_w) + 0.5 - new_w / 2.0
    ys = np.arange(new_h) + 0.5 - new_h / 2.0
    gx, gy = np.meshgrid(xs, ys)
    # inverse of the forward rotation, evaluated at destination pixel centers
    src_x = c * gx - s * gy + w / 2.0
    src_y = s * gx + c * gy + h / 2.0
    col = np.floor(src_x).astype(np.intp)
    row = np.floor(src_y).astype(np.intp)
    inside = (col >= 0) & (col < w) & (row >= 0) & (row < h)
    out = np.full((new_h, new_w, 3), 255, dtype=np.uint8)
    out[inside] = t.tile.pixels[row[inside], col[inside]]

    boxes = []
    for b in t.ground_truths:
        x1, y1, x2, y2 = b.corners()
        nx, ny = [], []
        for x, y in ((x1, y1), (x2, y1), (x1, y2), (x2, y2)):
            dx, dy = x - w / 2.0, y - h / 2.0
            nx.append(c * dx + s * dy + new_w / 2.0)
            ny.append(-s * dx + c * dy + new_h / 2.0)
        boxes.append(Box.from_corners(min(nx), min(ny), max(nx), max(ny)))
    return AnnotatedTile(tile=Tile(id=t.tile.id, pixels=out), ground_truths=boxes)


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = math.ceil(3.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _correlate_axis(arr: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    radius = len(kernel) // 2
    pad = [(0, 0)] * arr.ndim
    pad[axis] = (radius, radius)
    padded = np.pad(arr, pad, mode="edge")
    out = np.zeros_like(arr)
    for i, ki in enumerate(kernel):
        sl = [slice(None)] * arr.ndim
        sl[axis] = slice(i, i + arr.shape[axis])
        out += ki * padded[tuple(sl)]
    return out


def gaussian_blur(t: AnnotatedTile, sigma: float) -> AnnotatedTile:
    """Separable Gaussian blur, kernel radius ceil(3 sigma), clamped borders.

    Boxes are unchanged: blurring moves no geometry.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    kernel = _gaussian_kernel(sigma)
    work = t.tile.pixels.astype(np.float64)
    work = _correlate_axis(work, kernel, axis=1)
    work = _correlate_axis(work, kernel, axis=0)
    pixels = np.clip(np.rint(work), 0, 255).astype(np.uint8)
    return AnnotatedTile(
        tile=Tile(id=t.tile.id, pixels=pixels), ground_truths=list(t.ground_truths)
    )


def downscale(t: AnnotatedTile, factor: float) -> AnnotatedTile:
    """Area-average downscale by ``factor`` in [3, 5]; boxes divide by factor."""
    if not 3.0 <= factor <= 5.0:
        raise ValueError(f"factor must lie in [3, 5], got {factor}")
    w, h = t.tile.width, t.tile.height
    new_w = int(round(w / factor))
    new_h = int(round(h / factor))
    if new_w < MIN_TILE_SIDE or new_h < MIN_TILE_SIDE:
        raise ValueError(
            f"tile {t.tile.id!r}: downscale by {factor} would shrink below "
            f"{MIN_TILE_SIDE} px ({new_w} x {new_h})"
        )
    img = Image.fromarray(t.tile.pixels, mode="RGB").resize((new_w, new_h), Image.BOX)
    boxes = [Box(b.cx / factor, b.cy / factor, b.w / factor, b.h / factor) for b in t.ground_truths]
    return AnnotatedTile(tile=Tile(id=t.tile.id, pixels=np.asarray(img)), ground_truths=boxes)


def _downscale_fits(t: AnnotatedTile, factor: float) -> bool:
    return (
        int(round(t.tile.width / factor)) >= MIN_TILE_SIDE
        and int(round(t.tile.height / factor)) >= MIN_TILE_SIDE
    )


def augment_dataset(
    items: list[AnnotatedTile], target_count: int, seed
) -> list[AnnotatedTile]:
    """Grow a dataset to ``target_count`` tiles with seeded random transforms.

    Originals come first, unchanged. Each synthetic tile picks a uniform
    source tile and one of the five transforms (flip_h, flip_v, rotate with
    theta ~ U[0, 360), blur with sigma ~ U[0.5, 2], downscale with factor
    ~ U[3, 5]) uniformly; a downscale that would shrink the source below the
    minimum side falls back to a seeded choice among the other four.
    """
    if not items:
        raise ValueError("items must be non-empty")
    if target_count < len(items):
        raise ValueError(
            f"target_count {target_count} is below the current size {len(items)}"
        )
    rng = np.random.default_rng(seed)
    out = list(items)
    counter = 0
    while len(out) < target_count:
        src = items[int(rng.integers(len(items)))]
        choice = int(rng.integers(5))
        if choice == 4 and not _downscale_fits(src, 3.0):
            choice = int(rng.integers(4))
        if choice == 0:
            aug = flip_h(src)
        elif choice == 1:
            aug = flip_v(src)
        elif choice == 2:
            aug = rotate(src, float(rng.uniform(0.0, 360.0)))
        elif choice == 3:
            aug = gaussian_blur(src, float(rng.uniform(0.5, 2.0)))
        else:
            factor = float(rng.uniform(3.0, 5.0))
            if not _downscale_fits(src, factor):
                factor = 3.0
            aug = downscale(src, factor)
        aug.tile.id = f"{src.tile.id}_a{counter}"
        counter += 1
        out.append(aug)
    return out


def split_train_test(items: list[AnnotatedTile], test_fraction: float = 0.2, seed: int = 0) -> DatasetSplit:
    """Seeded shuffle, then carve off floor(n * test_fraction) test tiles."""
    if len(items) < 5:
        raise ValueError(f"need at least 5 tiles to split, got {len(items)}")
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    ids = [item.tile.id for item in items]
    if len(set(ids)) != len(ids):
        raise ValueError("tile ids must be unique to split")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ids))
    n_test = int(len(ids) * test_fraction)
    test = [ids[i] for i in perm[:n_test]]
    train = [ids[i] for i in perm[n_test:]]
    return DatasetSplit(train=train, test=test, seed=int(seed))


def save_split(split: DatasetSplit, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"seed": split.seed, "train": split.train, "test": split.test}, fh, indent=1)
        fh.write("\n")


def load_split(path: str | os.PathLike) -> DatasetSplit:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise AnnotationError(
                f"{os.fspath(path)}: parse error at line {e.lineno}: {e.msg}"
            ) from e
    try:
        return DatasetSplit(
            train=list(doc["train"]), test=list(doc["test"]), seed=int(doc["seed"])
        )
    except (KeyError, TypeError) as e:
        raise AnnotationError(f"{os.fspath(path)}: invalid split manifest: {e}") from e
