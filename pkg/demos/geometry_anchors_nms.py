"""Tour of the box toolbox: anchors, IoU, encoding, and NMS."""

import numpy as np

from crosspoint.geometry import (
    AnchorGrid,
    Box,
    ScoredBox,
    decode_box,
    encode_box,
    generate_anchors,
    iou,
    nms,
)

# Twelve anchors per location: four scales times three aspect ratios.
grid = AnchorGrid(fm_rows=4, fm_cols=6, stride=8.0, base_size=16.0)
anchors = generate_anchors(grid)
print(f"{grid.fm_rows}x{grid.fm_cols} grid -> {len(anchors)} anchors "
      f"({len(anchors) // (grid.fm_rows * grid.fm_cols)} per location)")
for a in anchors[:3]:
    print(f"  first location: {a.w:5.1f} x {a.h:5.1f} at ({a.cx}, {a.cy})")

# IoU drops fast as boxes slide apart.
fixed = Box(20, 20, 10, 10)
for shift in (0, 2, 5, 10):
    other = Box(20 + shift, 20, 10, 10)
    print(f"shift {shift:2d}px -> IoU {iou(fixed, other):.3f}")

# Deltas are the regression targets: encode then decode is the identity.
proposal = Box(22, 18, 12, 8)
target = Box(20, 20, 10, 10)
delta = encode_box(target, proposal)
print(f"encode: tx={delta.tx:+.3f} ty={delta.ty:+.3f} tw={delta.tw:+.3f} th={delta.th:+.3f}")
print("decode round trip:", decode_box(delta, proposal))

# NMS keeps the best of each overlapping cluster.
rng = np.random.default_rng(3)
cluster_a = [ScoredBox(Box(30 + rng.uniform(-1, 1), 30 + rng.uniform(-1, 1), 10, 10), float(s))
             for s in rng.uniform(0.5, 1.0, 4)]
cluster_b = [ScoredBox(Box(60 + rng.uniform(-1, 1), 30 + rng.uniform(-1, 1), 10, 10), float(s))
             for s in rng.uniform(0.5, 1.0, 3)]
kept = nms(cluster_a + cluster_b, iou_threshold=0.4)
print(f"\nNMS over {len(cluster_a) + len(cluster_b)} boxes in two clusters keeps {len(kept)}:")
for k in kept:
    print(f"  score {k.score:.3f} at ({k.box.cx:.1f}, {k.box.cy:.1f})")
