"""Synthetic road-crossing tiles: white background, dark line symbols.

Each positive tile holds straight "road" strokes drawn edge to edge in
either the single-line style (one 1-px stroke) or the double-line style
(two parallel strokes), with a ground-truth box centered on every pair
crossing. Crossing angles stay above a configurable minimum so junctions
are visually sharp. Distractor arcs imitate contour lines: thin, lighter
curves that may cross roads without creating ground truth. Negative
tiles carry non-intersecting strokes and arcs only.

Everything is driven by one seed; tile ids are "syn_<index>".
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image, ImageDraw

from .dataset import AnnotatedTile, Tile
from .geometry import Box

__all__ = ["SyntheticConfig", "generate_dataset"]


@dataclass(frozen=True)
class SyntheticConfig:
    """Fixed defaults with overrides for the synthetic-crossings generator."""

    n_tiles: int = 200
    tile_size: int = 64
    negative_fraction: float = 0.15
    max_lines: int = 3
    double_line_probability: float = 0.5
    min_crossing_angle_deg: float = 20.0
    gt_box_size: float = 16.0
    max_arcs: int = 2

    def __post_init__(self):
        if self.n_tiles < 1:
            raise ValueError(f"n_tiles must be positive, got {self.n_tiles}")
        if self.tile_size < 32:
            raise ValueError(f"tile_size must be at least 32, got {self.tile_size}")
        if not 0.0 <= self.negative_fraction < 1.0:
            raise ValueError("negative_fraction must lie in [0, 1)")
        if self.max_lines < 2:
            raise ValueError("max_lines must be at least 2")
        if not 0.0 < self.min_crossing_angle_deg < 90.0:
            raise ValueError("min_crossing_angle_deg must lie in (0, 90)")
        if not 4.0 <= self.gt_box_size <= self.tile_size:
            raise ValueError("gt_box_size must lie in [4, tile_size]")
        if self.max_arcs < 0:
            raise ValueError("max_arcs must be non-negative")


def _chord_endpoints(px: float, py: float, theta: float, size: float):
    """Clip the infinite line through (px, py) at angle theta to the tile."""
    dx, dy = math.cos(theta), math.sin(theta)
    t_lo, t_hi = -math.inf, math.inf
    for p, d in ((px, dx), (py, dy)):
        if abs(d) < 1e-12:
            if not 0.0 <= p <= size - 1:
                return None
            continue
        t0 = (0.0 - p) / d
        t1 = (size - 1 - p) / d
        lo, hi = min(t0, t1), max(t0, t1)
        t_lo, t_hi = max(t_lo, lo), min(t_hi, hi)
    if t_hi <= t_lo:
        return None
    return (px + t_lo * dx, py + t_lo * dy, px + t_hi * dx, py + t_hi * dy)


def _crossing_angle(theta_a: float, theta_b: float) -> float:
    """Acute angle between two line directions, in degrees."""
    d = abs(theta_a - theta_b) % math.pi
    return math.degrees(min(d, math.pi - d))


def _line_intersection(a, b):
    """Intersection point of two infinite lines given as (px, py, theta)."""
    ax, ay, ta = a
    bx, by, tb = b
    dax, day = math.cos(ta), math.sin(ta)
    dbx, dby = math.cos(tb), math.sin(tb)
    denom = dax * dby - day * dbx
    if abs(denom) < 1e-12:
        return None
    s = ((bx - ax) * dby - (by - ay) * dbx) / denom
    return (ax + s * dax, ay + s * day)


def _sample_lines(rng: np.random.Generator, cfg: SyntheticConfig, want_crossing: bool):
    """Line placements and the resulting crossing points, resampled until valid.

    Valid means: every in-tile pair crossing meets the minimum angle,
    crossings are mutually separated by at least the gt box size, and the
    tile has at least one crossing (positives) or none at all (negatives).
    """
    size = float(cfg.tile_size)
    margin = max(cfg.gt_box_size / 2.0 + 2.0, 6.0)
    for _ in range(200):
        if want_crossing:
            n_lines = int(rng.integers(2, cfg.max_lines + 1))
        else:
            n_lines = int(rng.integers(1, 3))
        lines = []
        for _ in range(n_lines):
            px = rng.uniform(margin, size - margin)
            py = rng.uniform(margin, size - margin)
            theta = rng.uniform(0.0, math.pi)
            lines.append((px, py, theta))

        crossings = []
        ok = True
        for i in range(n_lines):
            for j in range(i + 1, n_lines):
                pt = _line_intersection(lines[i], lines[j])
                if pt is None:
                    continue
                x, y = pt
                if not (margin <= x <= size - margin and margin <= y <= size - margin):
                    # a crossing just off the edge leaves a confusing
                    # partial junction; resample
                    if 0.0 <= x <= size - 1 and 0.0 <= y <= size - 1:
                        ok = False
                    continue
                if _crossing_angle(lines[i][2], lines[j][2]) < cfg.min_crossing_angle_deg:
                    ok = False
                    continue
                crossings.append((x, y))
        if not ok:
            continue
        if any(
            math.hypot(ax - bx, ay - by) < cfg.gt_box_size
            for k, (ax, ay) in enumerate(crossings)
            for bx, by in crossings[k + 1 :]
        ):
            continue
        if want_crossing and crossings:
            return lines, crossings
        if not want_crossing and not crossings:
            return lines, []
    raise RuntimeError("could not place lines after 200 attempts")


def _draw_tile(rng: np.random.Generator, cfg: SyntheticConfig, lines) -> np.ndarray:
    size = cfg.tile_size
    img = Image.new("RGB", (size, size), (255, 255, 255))
    draw = ImageDraw.Draw(img)

    for _ in range(int(rng.integers(0, cfg.max_arcs + 1))):
        radius = rng.uniform(size * 0.3, size * 1.2)
        cx = rng.uniform(-0.3 * size, 1.3 * size)
        cy = rng.uniform(-0.3 * size, 1.3 * size)
        start = rng.uniform(0.0, 360.0)
        extent = rng.uniform(60.0, 300.0)
        g = int(rng.integers(140, 190))
        bbox = (cx - radius, cy - radius, cx + radius, cy + radius)
        draw.arc(bbox, start, start + extent, fill=(g, g, g), width=1)

    for px, py, theta in lines:
        chord = _chord_endpoints(px, py, theta, float(size))
        if chord is None:
            continue
        g = int(rng.integers(25, 85))
        color = (g, g, g)
        if rng.uniform() < cfg.double_line_probability:
            # double-line symbol: two parallel strokes around the center line
            ox = -math.sin(theta) * 1.5
            oy = math.cos(theta) * 1.5
            for sgn in (-1.0, 1.0):
                draw.line(
                    (chord[0] + sgn * ox, chord[1] + sgn * oy,
                     chord[2] + sgn * ox, chord[3] + sgn * oy),
                    fill=color,
                    width=1,
                )
        else:
            draw.line(chord, fill=color, width=1)
    return np.asarray(img)


def generate_dataset(cfg: SyntheticConfig, seed: int) -> list[AnnotatedTile]:
    """n_tiles synthetic tiles, deterministically derived from the seed."""
    root = np.random.SeedSequence(seed)
    children = root.spawn(cfg.n_tiles + 1)
    chooser = np.random.default_rng(children[0])
    n_neg = int(round(cfg.n_tiles * cfg.negative_fraction))
    negatives = set(chooser.permutation(cfg.n_tiles)[:n_neg].tolist())

    out = []
    for i in range(cfg.n_tiles):
        rng = np.random.default_rng(children[i + 1])
        want_crossing = i not in negatives
        lines, crossings = _sample_lines(rng, cfg, want_crossing)
        pixels = _draw_tile(rng, cfg, lines)
        tile = Tile(f"syn_{i:04d}", pixels)
        gts = [Box(x, y, cfg.gt_box_size, cfg.gt_box_size) for x, y in crossings]
        out.append(AnnotatedTile(tile, gts))
    return out
