"""Architecture and loss/training configuration for the detector."""

from __future__ import annotations

from dataclasses import dataclass, field

__all__ = ["ArchitectureConfig", "LossConfig", "DetectorConfig", "tiny_detector_config"]

DEFAULT_BACKBONE = (
    ("conv", 16, 3, 1),
    ("relu",),
    ("pool",),
    ("conv", 32, 3, 1),
    ("relu",),
    ("pool",),
    ("conv", 64, 3, 1),
    ("relu",),
    ("conv", 64, 3, 1),
    ("relu",),
)


@dataclass(frozen=True)
class ArchitectureConfig:
    """Backbone layer list plus RPN/head/anchor dimensions.

    Backbone entries: ("conv", out_channels, kernel, stride) | ("relu",) |
    ("pool",) where pool is 2x2/stride-2 max pooling. Kernels must be odd
    ('same' padding).
    """

    backbone: tuple = DEFAULT_BACKBONE
    rpn_channels: int = 64
    roi_size: int = 4
    head_width: int = 64
    anchor_base_size: float = 16.0
    anchor_scales: tuple = (0.25, 0.5, 1.0, 2.0)
    anchor_ratios: tuple = (0.5, 1.0, 2.0)
    init: str = "uniform"
    init_scale: float = 0.05

    def __post_init__(self):
        if not self.backbone:
            raise ValueError("backbone must have at least one layer")
        n_conv = 0
        for layer in self.backbone:
            kind = layer[0]
            if kind == "conv":
                _, out_ch, kernel, stride = layer
                if out_ch < 1 or kernel < 1 or kernel % 2 == 0 or stride < 1:
                    raise ValueError(f"bad conv spec {layer}")
                n_conv += 1
            elif kind not in ("relu", "pool"):
                raise ValueError(f"unknown backbone layer kind {kind!r}")
        if n_conv == 0:
            raise ValueError("backbone needs at least one conv layer")
        if min(self.rpn_channels, self.roi_size, self.head_width) < 1:
            raise ValueError("rpn_channels, roi_size, head_width must be positive")
        if self.anchor_base_size <= 0:
            raise ValueError("anchor_base_size must be positive")
        if not self.anchor_scales or not self.anchor_ratios:
            raise ValueError("anchor scales and ratios must be non-empty")
        if self.init not in ("uniform", "he_uniform"):
            raise ValueError(f"unknown init mode {self.init!r}")

    @property
    def anchors_per_cell(self) -> int:
        return len(self.anchor_scales) * len(self.anchor_ratios)

    @property
    def total_stride(self) -> int:
        stride = 1
        for layer in self.backbone:
            if layer[0] == "conv":
                stride *= layer[3]
            elif layer[0] == "pool":
                stride *= 2
        return stride

    @property
    def out_channels(self) -> int:
        ch = 3
        for layer in self.backbone:
            if layer[0] == "conv":
                ch = layer[1]
        return ch

    @property
    def min_tile_side(self) -> int:
        return self.total_stride


@dataclass(frozen=True)
class LossConfig:
    """Eq.-1 weighting, anchor labeling thresholds, and selection caps."""

    lam: float = 1.0
    n_cls: int = 256
    head_batch: int = 32
    hi_threshold: float = 0.7
    lo_threshold: float = 0.1
    learning_rate: float = 0.003
    nms_threshold: float = 0.7
    nms_max: int = 300
    proposals_to_head: int = 100
    detect_threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.lo_threshold < self.hi_threshold < 1.0:
            raise ValueError(
                f"need 0 < lo < hi < 1, got lo={self.lo_threshold}, hi={self.hi_threshold}"
            )
        if min(self.n_cls, self.head_batch, self.nms_max, self.proposals_to_head) < 1:
            raise ValueError("n_cls, head_batch, nms_max, proposals_to_head must be at least 1")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 < self.nms_threshold < 1.0:
            raise ValueError("nms_threshold must lie in (0, 1)")
        if not 0.0 <= self.detect_threshold <= 1.0:
            raise ValueError("detect_threshold must lie in [0, 1]")


@dataclass(frozen=True)
class DetectorConfig:
    arch: ArchitectureConfig = field(default_factory=ArchitectureConfig)
    loss: LossConfig = field(default_factory=LossConfig)


def tiny_detector_config() -> DetectorConfig:
    """A detector small enough for finite-difference gradient checks (<5k params)."""
    arch = ArchitectureConfig(
        backbone=(
            ("conv", 4, 3, 1),
            ("relu",),
            ("pool",),
            ("conv", 6, 3, 1),
            ("relu",),
        ),
        rpn_channels=6,
        roi_size=2,
        head_width=8,
        anchor_base_size=8.0,
    )
    return DetectorConfig(arch=arch, loss=LossConfig(n_cls=32))
