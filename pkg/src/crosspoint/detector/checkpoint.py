"""Parameter checkpoints: JSON with base64 arrays, bit-exact round trip."""

from __future__ import annotations

import base64
import json

import numpy as np

from .config import ArchitectureConfig, DetectorConfig, LossConfig
from .model import param_shapes

__all__ = ["save_checkpoint", "load_checkpoint"]

_FORMAT = "crosspoint-checkpoint-v1"


def _encode_array(arr: np.ndarray) -> dict:
    data = np.ascontiguousarray(arr, dtype="<f8")
    return {
        "shape": list(arr.shape),
        "data": base64.b64encode(data.tobytes()).decode("ascii"),
    }


def _decode_array(blob: dict) -> np.ndarray:
    raw = base64.b64decode(blob["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(blob["shape"]).copy()


def save_checkpoint(params: dict, config: DetectorConfig, path) -> None:
    """Self-describing JSON blob: architecture, loss config, parameters."""
    arch, loss = config.arch, config.loss
    doc = {
        "format": _FORMAT,
        "arch": {
            "backbone": [list(layer) for layer in arch.backbone],
            "rpn_channels": arch.rpn_channels,
            "roi_size": arch.roi_size,
            "head_width": arch.head_width,
            "anchor_base_size": arch.anchor_base_size,
            "anchor_scales": list(arch.anchor_scales),
            "anchor_ratios": list(arch.anchor_ratios),
            "init": arch.init,
            "init_scale": arch.init_scale,
        },
        "loss": {
            "lam": loss.lam,
            "n_cls": loss.n_cls,
            "head_batch": loss.head_batch,
            "hi_threshold": loss.hi_threshold,
            "lo_threshold": loss.lo_threshold,
            "learning_rate": loss.learning_rate,
            "nms_threshold": loss.nms_threshold,
            "nms_max": loss.nms_max,
            "proposals_to_head": loss.proposals_to_head,
            "detect_threshold": loss.detect_threshold,
        },
        "params": {name: _encode_array(arr) for name, arr in params.items()},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_checkpoint(path) -> tuple[dict, DetectorConfig]:
    """Inverse of :func:`save_checkpoint`; validates shapes against the config."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != _FORMAT:
        raise ValueError(f"not a detector checkpoint: format {doc.get('format')!r}")
    a = doc["arch"]
    arch = ArchitectureConfig(
        backbone=tuple(tuple(layer) for layer in a["backbone"]),
        rpn_channels=a["rpn_channels"],
        roi_size=a["roi_size"],
        head_width=a["head_width"],
        anchor_base_size=a["anchor_base_size"],
        anchor_scales=tuple(a["anchor_scales"]),
        anchor_ratios=tuple(a["anchor_ratios"]),
        init=a["init"],
        init_scale=a["init_scale"],
    )
    loss = LossConfig(**doc["loss"])
    config = DetectorConfig(arch=arch, loss=loss)
    expected = param_shapes(config)
    params = {}
    for name, shape in expected.items():
        if name not in doc["params"]:
            raise ValueError(f"checkpoint is missing parameter {name!r}")
        arr = _decode_array(doc["params"][name])
        if arr.shape != shape:
            raise ValueError(
                f"checkpoint parameter {name!r} has shape {arr.shape}, expected {shape}"
            )
        params[name] = arr
    extras = set(doc["params"]) - set(expected)
    if extras:
        raise ValueError(f"checkpoint has unexpected parameters: {sorted(extras)}")
    return params, config
