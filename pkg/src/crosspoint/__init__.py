"""Road-intersection point detection in scanned historical map tiles.

The package covers the whole pipeline: tile datasets with box annotations
and augmentation (:mod:`crosspoint.dataset`), a synthetic map generator
(:mod:`crosspoint.synthetic`), a small two-stage region-proposal detector
written on plain numpy (:mod:`crosspoint.detector`), point-based detection
scoring (:mod:`crosspoint.evaluation`), tile complexity metrics
(:mod:`crosspoint.image_metrics`), and the error-sensitivity regression
(:mod:`crosspoint.regression`). The ``crosspoint`` command line drives the
stages end to end (:mod:`crosspoint.cli`).
"""

__version__ = "0.1.0"

from .geometry import Box, ScoredBox, BoxDelta, AnchorGrid, iou, nms  # noqa: F401
