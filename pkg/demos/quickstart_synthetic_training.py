"""Train the detector on a small synthetic dataset and inspect the result.

Generates crossing tiles, runs a one-minute training loop, then detects on
held-out tiles at an exploratory score threshold and reports how close the
top detections are to the true crossings. At this budget the scores are not
yet past the default 0.5 decision threshold, but they already separate
crossing tiles from empty ones and cluster around the truth. A longer run
(20k steps on 200 tiles, ~7 minutes) reaches F1 >= 0.8 on a held-out split.
"""

from dataclasses import replace

import numpy as np

from crosspoint.detector import ArchitectureConfig, DetectorConfig, LossConfig, detect, train
from crosspoint.plotting import ema_smooth, loss_curve_svg
from crosspoint.synthetic import SyntheticConfig, generate_dataset

ds = generate_dataset(SyntheticConfig(n_tiles=24, tile_size=48), seed=7)
train_set, test_set = ds[:20], ds[20:]
print(f"dataset: {len(train_set)} training tiles, {len(test_set)} held out")

config = DetectorConfig(
    arch=ArchitectureConfig(init="he_uniform"),
    loss=replace(LossConfig(), nms_threshold=0.3),
)
params, trace = train(train_set, config, seed=0, steps=2000)

smoothed = ema_smooth(trace.totals(), 0.9)
print(f"smoothed total loss: {smoothed[0]:.3f} (start) -> {smoothed[-1]:.3f} (end)")
loss_curve_svg(trace, "quickstart_loss.svg")
print("loss curves written to quickstart_loss.svg")

# peek below the decision threshold to see what the young detector believes
peek = DetectorConfig(arch=config.arch, loss=replace(config.loss, detect_threshold=0.1))
for at in test_set:
    dets = detect(at.tile, params, peek)
    print(f"\ntile {at.tile.id}: {len(at.ground_truths)} true crossings, "
          f"{len(dets)} detections with score >= 0.1")
    for d in dets[:3]:
        if at.ground_truths:
            dist = min(
                np.hypot(d.box.cx - g.cx, d.box.cy - g.cy) for g in at.ground_truths
            )
            print(f"  score {d.score:.2f} at ({d.box.cx:5.1f}, {d.box.cy:5.1f}), {dist:.1f}px from a crossing")
        else:
            print(f"  score {d.score:.2f} at ({d.box.cx:5.1f}, {d.box.cy:5.1f})")
