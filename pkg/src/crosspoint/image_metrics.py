"""Tile complexity metrics: edge density, color diversity, sharpness.

All three operate on H x W x 3 uint8 pixel arrays (a ``Tile`` works too).
Filtering happens on the luma plane with 3x3 kernels applied as
cross-correlation; borders are handled by clamping (edge replication), so
every pixel produces a response and a uniform tile scores zero edges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GRAY_WEIGHTS",
    "TileMetrics",
    "grayscale",
    "edge_density",
    "rgb_diversity",
    "sharpness",
    "tile_metrics",
]

GRAY_WEIGHTS = (0.299, 0.587, 0.114)

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T
LAPLACIAN = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])


@dataclass(frozen=True)
class TileMetrics:
    """Per-tile complexity summary."""

    edge_density: float
    rgb_diversity: int
    sharpness: float


def _pixels(tile, min_side: int = 1) -> np.ndarray:
    arr = np.asarray(getattr(tile, "pixels", tile))
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an H x W x 3 pixel array, got shape {arr.shape}")
    if arr.shape[0] < min_side or arr.shape[1] < min_side:
        raise ValueError(f"tile must be at least {min_side} x {min_side} pixels")
    return arr


def grayscale(tile) -> np.ndarray:
    """Luma plane as float64: 0.299 R + 0.587 G + 0.114 B."""
    arr = _pixels(tile, min_side=3).astype(np.float64)
    return arr[:, :, 0] * GRAY_WEIGHTS[0] + arr[:, :, 1] * GRAY_WEIGHTS[1] + arr[:, :, 2] * GRAY_WEIGHTS[2]


def _correlate3(gray: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """3x3 cross-correlation with clamped (edge-replicated) borders.

    Only zero-sum kernels are supported: the response is accumulated as
    sum of k * (neighbor - center), which is algebraically identical but
    exactly zero on constant regions (no float cancellation residue).
    """
    if abs(float(kernel.sum())) > 1e-12:
        raise ValueError("kernel must sum to zero")
    padded = np.pad(gray, 1, mode="edge")
    h, w = gray.shape
    out = np.zeros_like(gray)
    for i in range(3):
        for j in range(3):
            k = kernel[i, j]
            if k != 0.0 and not (i == 1 and j == 1):
                out += k * (padded[i : i + h, j : j + w] - gray)
    return out


def edge_density(tile) -> float:
    """Mean Sobel gradient magnitude over every pixel of the tile."""
    gray = grayscale(tile)
    gx = _correlate3(gray, SOBEL_X)
    gy = _correlate3(gray, SOBEL_Y)
    return float(np.mean(np.hypot(gx, gy)))


def rgb_diversity(tile) -> int:
    """Number of distinct (r, g, b) triples present in the tile."""
    arr = _pixels(tile)
    if arr.dtype != np.uint8:
        arr = np.asarray(arr, dtype=np.uint8)
    packed = (
        arr[:, :, 0].astype(np.uint32) << 16
        | arr[:, :, 1].astype(np.uint32) << 8
        | arr[:, :, 2].astype(np.uint32)
    )
    return int(np.unique(packed).size)


def sharpness(tile) -> float:
    """Population variance of the 3x3 Laplacian response."""
    gray = grayscale(tile)
    resp = _correlate3(gray, LAPLACIAN)
    return float(np.var(resp))


def tile_metrics(tile) -> TileMetrics:
    """All three metrics at once."""
    return TileMetrics(
        edge_density=edge_density(tile),
        rgb_diversity=rgb_diversity(tile),
        sharpness=sharpness(tile),
    )
