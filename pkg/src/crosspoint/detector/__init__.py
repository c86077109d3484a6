"""Compact two-stage intersection detector (backbone, RPN, ROI head)."""

from .checkpoint import load_checkpoint, save_checkpoint
from .config import ArchitectureConfig, DetectorConfig, LossConfig, tiny_detector_config
from .model import (
    anchor_grid_for,
    backbone_forward,
    count_params,
    detect,
    detection_head_forward,
    init_params,
    param_shapes,
    propose,
    roi_pool,
    rpn_forward,
)
from .training import (
    AnchorLabel,
    DivergenceError,
    TraceRow,
    TrainTrace,
    detection_loss,
    gradient_check,
    label_anchors,
    rpn_loss,
    sample_minibatch,
    train,
    write_trace_csv,
)

__all__ = [
    "ArchitectureConfig",
    "DetectorConfig",
    "LossConfig",
    "tiny_detector_config",
    "anchor_grid_for",
    "backbone_forward",
    "count_params",
    "detect",
    "detection_head_forward",
    "init_params",
    "param_shapes",
    "propose",
    "roi_pool",
    "rpn_forward",
    "AnchorLabel",
    "DivergenceError",
    "TraceRow",
    "TrainTrace",
    "detection_loss",
    "gradient_check",
    "label_anchors",
    "rpn_loss",
    "sample_minibatch",
    "train",
    "write_trace_csv",
    "load_checkpoint",
    "save_checkpoint",
]
