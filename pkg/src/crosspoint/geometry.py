"""Axis-aligned box arithmetic shared by the detector and the evaluator.

Boxes live in pixel coordinates with *center form* (cx, cy, w, h). The
dataclasses give a value-level API; the ``*_array`` helpers operate on
float64 ndarrays with one box per row and are what the detector's inner
loops use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Box",
    "ScoredBox",
    "BoxDelta",
    "AnchorGrid",
    "iou",
    "iou_matrix",
    "generate_anchors",
    "generate_anchor_array",
    "encode_box",
    "decode_box",
    "encode_boxes",
    "decode_boxes",
    "nms",
    "nms_indices",
    "cxcywh_to_xyxy",
    "xyxy_to_cxcywh",
    "clip_xyxy",
]


@dataclass(frozen=True)
class Box:
    """Axis-aligned region in center form. Width and height must be positive."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box sides must be positive, got w={self.w}, h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    def corners(self) -> tuple[float, float, float, float]:
        """Corner form (x1, y1, x2, y2) with x1 < x2 and y1 < y2."""
        return (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )

    @staticmethod
    def from_corners(x1: float, y1: float, x2: float, y2: float) -> "Box":
        return Box((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)

    def contains_point(self, x: float, y: float) -> bool:
        """Boundary-inclusive point membership."""
        x1, y1, x2, y2 = self.corners()
        return x1 <= x <= x2 and y1 <= y <= y2


@dataclass(frozen=True)
class ScoredBox:
    """A box with a confidence score in [0, 1]."""

    box: Box
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")


@dataclass(frozen=True)
class BoxDelta:
    """Parameterized offset (tx, ty, tw, th) from an anchor to a target box."""

    tx: float
    ty: float
    tw: float
    th: float


@dataclass(frozen=True)
class AnchorGrid:
    """Anchor layout over a feature map.

    ``stride`` maps feature-map cells back to pixels: cell (row, col) is
    centered at ((col + 0.5) * stride, (row + 0.5) * stride). Each cell
    carries one anchor per (scale, ratio) pair.
    """

    fm_rows: int
    fm_cols: int
    stride: float
    base_size: float = 16.0
    scales: tuple[float, ...] = (0.25, 0.5, 1.0, 2.0)
    ratios: tuple[float, ...] = (0.5, 1.0, 2.0)

    def __post_init__(self):
        if self.fm_rows < 1 or self.fm_cols < 1:
            raise ValueError("feature map must have at least one cell")
        if self.stride <= 0 or self.base_size <= 0:
            raise ValueError("stride and base_size must be positive")
        if not self.scales or not self.ratios:
            raise ValueError("scales and ratios must be non-empty")
        if any(s <= 0 for s in self.scales) or any(r <= 0 for r in self.ratios):
            raise ValueError("scales and ratios must be positive")

    @property
    def anchors_per_cell(self) -> int:
        return len(self.scales) * len(self.ratios)

    @property
    def num_anchors(self) -> int:
        return self.fm_rows * self.fm_cols * self.anchors_per_cell


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes; 0 when they do not overlap."""
    ax1, ay1, ax2, ay2 = a.corners()
    bx1, by1, bx2, by2 = b.corners()
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def cxcywh_to_xyxy(boxes: np.ndarray) -> np.ndarray:
    """(N, 4) center-form rows to corner form."""
    boxes = np.asarray(boxes, dtype=float)
    half = boxes[:, 2:4] / 2.0
    return np.concatenate([boxes[:, 0:2] - half, boxes[:, 0:2] + half], axis=1)


def xyxy_to_cxcywh(boxes: np.ndarray) -> np.ndarray:
    boxes = np.asarray(boxes, dtype=float)
    wh = boxes[:, 2:4] - boxes[:, 0:2]
    return np.concatenate([boxes[:, 0:2] + wh / 2.0, wh], axis=1)


def clip_xyxy(boxes: np.ndarray, width: float, height: float) -> np.ndarray:
    """Clip corner-form boxes to the image rectangle [0, width] x [0, height]."""
    out = np.asarray(boxes, dtype=float).copy()
    out[:, 0::2] = np.clip(out[:, 0::2], 0.0, width)
    out[:, 1::2] = np.clip(out[:, 1::2], 0.0, height)
    return out


def iou_matrix(a_xyxy: np.ndarray, b_xyxy: np.ndarray) -> np.ndarray:
    """Pairwise IoU between two corner-form box arrays, shape (len(a), len(b))."""
    a = np.asarray(a_xyxy, dtype=float)
    b = np.asarray(b_xyxy, dtype=float)
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return np.where(inter > 0, inter / union, 0.0)


def generate_anchor_array(grid: AnchorGrid) -> np.ndarray:
    """All anchors of a grid as an (N, 4) center-form array.

    Ordering is row-major over cells, then scale-major / ratio-minor within a
    cell. For scale s and ratio r the anchor sides are w = s * base * sqrt(r)
    and h = s * base / sqrt(r), so w / h == r and w * h == (s * base) ** 2.
    Anchors are not clipped here; they may overhang the tile.
    """
    scales = np.asarray(grid.scales, dtype=float)
    ratios = np.asarray(grid.ratios, dtype=float)
    side = scales[:, None] * grid.base_size
    root = np.sqrt(ratios)[None, :]
    w = (side * root).ravel()
    h = (side / root).ravel()
    k = w.size

    xs = (np.arange(grid.fm_cols) + 0.5) * grid.stride
    ys = (np.arange(grid.fm_rows) + 0.5) * grid.stride
    gx, gy = np.meshgrid(xs, ys)

    n_cells = grid.fm_rows * grid.fm_cols
    out = np.empty((n_cells * k, 4), dtype=float)
    out[:, 0] = np.repeat(gx.ravel(), k)
    out[:, 1] = np.repeat(gy.ravel(), k)
    out[:, 2] = np.tile(w, n_cells)
    out[:, 3] = np.tile(h, n_cells)
    return out


def generate_anchors(grid: AnchorGrid) -> list[Box]:
    """Anchor boxes of a grid, in the same order as :func:`generate_anchor_array`."""
    return [Box(*row) for row in generate_anchor_array(grid)]


def encode_box(gt: Box, anchor: Box) -> BoxDelta:
    """Offsets that map the anchor onto the target box.

    tx = (gt.cx - a.cx) / a.w, ty analogous, tw = ln(gt.w / a.w), th analogous.
    """
    return BoxDelta(
        (gt.cx - anchor.cx) / anchor.w,
        (gt.cy - anchor.cy) / anchor.h,
        math.log(gt.w / anchor.w),
        math.log(gt.h / anchor.h),
    )


def decode_box(delta: BoxDelta, anchor: Box) -> Box:
    """Inverse of :func:`encode_box`."""
    return Box(
        anchor.cx + delta.tx * anchor.w,
        anchor.cy + delta.ty * anchor.h,
        anchor.w * math.exp(delta.tw),
        anchor.h * math.exp(delta.th),
    )


def encode_boxes(gts: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """Row-wise :func:`encode_box` on (N, 4) center-form arrays."""
    gts = np.asarray(gts, dtype=float)
    anchors = np.asarray(anchors, dtype=float)
    out = np.empty_like(gts)
    out[:, 0] = (gts[:, 0] - anchors[:, 0]) / anchors[:, 2]
    out[:, 1] = (gts[:, 1] - anchors[:, 1]) / anchors[:, 3]
    out[:, 2] = np.log(gts[:, 2] / anchors[:, 2])
    out[:, 3] = np.log(gts[:, 3] / anchors[:, 3])
    return out


def decode_boxes(deltas: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """Row-wise :func:`decode_box` on (N, 4) arrays."""
    deltas = np.asarray(deltas, dtype=float)
    anchors = np.asarray(anchors, dtype=float)
    out = np.empty_like(deltas)
    out[:, 0] = anchors[:, 0] + deltas[:, 0] * anchors[:, 2]
    out[:, 1] = anchors[:, 1] + deltas[:, 1] * anchors[:, 3]
    out[:, 2] = anchors[:, 2] * np.exp(deltas[:, 2])
    out[:, 3] = anchors[:, 3] * np.exp(deltas[:, 3])
    return out


def nms_indices(
    boxes_xyxy: np.ndarray,
    scores: np.ndarray,
    iou_threshold: float,
    max_keep: int | None = None,
) -> list[int]:
    """Greedy non-maximum suppression; returns kept indices.

    Boxes are visited in descending score order, ties broken by input index.
    A box is suppressed when its IoU with an already-kept box is strictly
    greater than ``iou_threshold``. Stops once ``max_keep`` boxes are kept.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError(f"iou_threshold must lie in (0, 1), got {iou_threshold}")
    if max_keep is not None and max_keep < 1:
        raise ValueError(f"max_keep must be at least 1, got {max_keep}")
    boxes = np.asarray(boxes_xyxy, dtype=float)
    scores = np.asarray(scores, dtype=float)
    if boxes.shape[0] != scores.shape[0]:
        raise ValueError("boxes and scores must have equal length")

    x1, y1, x2, y2 = boxes[:, 0], boxes[:, 1], boxes[:, 2], boxes[:, 3]
    areas = (x2 - x1) * (y2 - y1)
    # stable sort on -score keeps equal-score boxes in input order
    order = np.argsort(-scores, kind="stable")

    keep: list[int] = []
    while order.size > 0:
        i = int(order[0])
        keep.append(i)
        if max_keep is not None and len(keep) >= max_keep:
            break
        rest = order[1:]
        iw = np.minimum(x2[i], x2[rest]) - np.maximum(x1[i], x1[rest])
        ih = np.minimum(y2[i], y2[rest]) - np.maximum(y1[i], y1[rest])
        inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
        ovr = inter / (areas[i] + areas[rest] - inter)
        order = rest[ovr <= iou_threshold]
    return keep


def nms(
    boxes: list[ScoredBox],
    iou_threshold: float = 0.7,
    max_keep: int | None = None,
) -> list[ScoredBox]:
    """Greedy NMS over scored boxes; output is sorted by descending score."""
    if not boxes:
        return []
    arr = np.array([b.box.corners() for b in boxes], dtype=float)
    scores = np.array([b.score for b in boxes], dtype=float)
    keep = nms_indices(arr, scores, iou_threshold, max_keep)
    return [boxes[i] for i in keep]
