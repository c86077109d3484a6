"""Detector forward paths: backbone, RPN, proposals, ROI pooling, head.

Feature maps are plain float64 arrays (rows x cols x channels). Parameters
live in an ordered dict keyed by layer name; `param_shapes` fixes the
layout and `init_params` fills it reproducibly from a seed.

Tile pixels are scaled to [0, 1] before the first backbone layer.
"""

from __future__ import annotations

import numpy as np

from ..geometry import (
    AnchorGrid,
    Box,
    ScoredBox,
    clip_xyxy,
    cxcywh_to_xyxy,
    decode_boxes,
    generate_anchor_array,
    nms_indices,
    xyxy_to_cxcywh,
)
from .config import ArchitectureConfig, DetectorConfig, LossConfig
from .layers import (
    conv2d_backward,
    conv2d_forward,
    fc_backward,
    fc_forward,
    maxpool2_backward,
    maxpool2_forward,
    relu_backward,
    relu_forward,
    sigmoid,
)

__all__ = [
    "param_shapes",
    "init_params",
    "count_params",
    "anchor_grid_for",
    "backbone_forward",
    "rpn_forward",
    "propose",
    "roi_pool",
    "detection_head_forward",
    "detect",
]

_DEGENERATE_SIDE = 1e-6


def param_shapes(config: DetectorConfig) -> dict[str, tuple[int, ...]]:
    """Parameter layout (name -> shape) in a fixed, documented order."""
    arch = config.arch
    shapes: dict[str, tuple[int, ...]] = {}
    cin = 3
    conv_i = 0
    for layer in arch.backbone:
        if layer[0] == "conv":
            _, out_ch, kernel, _ = layer
            shapes[f"bb{conv_i}_w"] = (kernel, kernel, cin, out_ch)
            shapes[f"bb{conv_i}_b"] = (out_ch,)
            cin = out_ch
            conv_i += 1
    c = arch.out_channels
    r = arch.rpn_channels
    k = arch.anchors_per_cell
    shapes["rpn_w"] = (3, 3, c, r)
    shapes["rpn_b"] = (r,)
    shapes["obj_w"] = (1, 1, r, k)
    shapes["obj_b"] = (k,)
    shapes["reg_w"] = (1, 1, r, 4 * k)
    shapes["reg_b"] = (4 * k,)
    d = arch.roi_size * arch.roi_size * c
    shapes["fc1_w"] = (d, arch.head_width)
    shapes["fc1_b"] = (arch.head_width,)
    shapes["cls_w"] = (arch.head_width, 1)
    shapes["cls_b"] = (1,)
    shapes["ref_w"] = (arch.head_width, 4)
    shapes["ref_b"] = (4,)
    return shapes


def _fan_in(name: str, shape: tuple[int, ...]) -> int:
    if len(shape) == 4:
        return shape[0] * shape[1] * shape[2]
    return shape[0]


def init_params(config: DetectorConfig, seed) -> dict[str, np.ndarray]:
    """Seeded init: weights uniform (flat +-init_scale or He-scaled), zero biases."""
    rng = np.random.default_rng(seed)
    arch = config.arch
    params: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(config).items():
        if name.endswith("_b"):
            params[name] = np.zeros(shape)
        elif arch.init == "uniform":
            params[name] = rng.uniform(-arch.init_scale, arch.init_scale, size=shape)
        else:
            bound = np.sqrt(6.0 / _fan_in(name, shape))
            params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def count_params(config: DetectorConfig) -> int:
    return sum(int(np.prod(s)) for s in param_shapes(config).values())


def anchor_grid_for(fm_shape: tuple[int, ...], arch: ArchitectureConfig) -> AnchorGrid:
    return AnchorGrid(
        fm_rows=fm_shape[0],
        fm_cols=fm_shape[1],
        stride=float(arch.total_stride),
        base_size=arch.anchor_base_size,
        scales=tuple(arch.anchor_scales),
        ratios=tuple(arch.anchor_ratios),
    )


def _check_finite(arr: np.ndarray, layer_name: str) -> None:
    if not np.isfinite(arr).all():
        raise ArithmeticError(f"non-finite activation in layer {layer_name}")


def _run_backbone(x: np.ndarray, params: dict, arch: ArchitectureConfig):
    caches = []
    out = x
    conv_i = 0
    for li, layer in enumerate(arch.backbone):
        kind = layer[0]
        if kind == "conv":
            out, cache = conv2d_forward(out, params[f"bb{conv_i}_w"], params[f"bb{conv_i}_b"], layer[3])
            caches.append(("conv", conv_i, cache))
            conv_i += 1
        elif kind == "relu":
            out, mask = relu_forward(out)
            caches.append(("relu", li, mask))
        else:
            out, cache = maxpool2_forward(out)
            caches.append(("pool", li, cache))
        _check_finite(out, f"backbone[{li}]:{kind}")
    return out, caches


def _backbone_backward(dfm: np.ndarray, caches, grads: dict) -> None:
    d = dfm
    for kind, idx, cache in reversed(caches):
        if kind == "conv":
            d, dw, db = conv2d_backward(d, cache)
            grads[f"bb{idx}_w"] += dw
            grads[f"bb{idx}_b"] += db
        elif kind == "relu":
            d = relu_backward(d, cache)
        else:
            d = maxpool2_backward(d, cache)


def _normalize_tile(tile) -> np.ndarray:
    pixels = np.asarray(getattr(tile, "pixels", tile))
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError(f"expected H x W x 3 pixels, got shape {pixels.shape}")
    return pixels.astype(np.float64) / 255.0


def backbone_forward(tile, params: dict, config: DetectorConfig) -> np.ndarray:
    """Shared feature map for a tile (pixels are scaled to [0, 1] first)."""
    x = _normalize_tile(tile)
    side = config.arch.min_tile_side
    if x.shape[0] < side or x.shape[1] < side:
        raise ValueError(
            f"tile sides must be at least {side} px for this backbone, got "
            f"{x.shape[1]} x {x.shape[0]}"
        )
    fm, _ = _run_backbone(x, params, config.arch)
    return fm


def _run_rpn(fm: np.ndarray, params: dict, arch: ArchitectureConfig):
    hidden_pre, conv_cache = conv2d_forward(fm, params["rpn_w"], params["rpn_b"], 1)
    _check_finite(hidden_pre, "rpn:conv")
    hidden, relu_mask = relu_forward(hidden_pre)
    obj_map, obj_cache = conv2d_forward(hidden, params["obj_w"], params["obj_b"], 1)
    reg_map, reg_cache = conv2d_forward(hidden, params["reg_w"], params["reg_b"], 1)
    _check_finite(obj_map, "rpn:objectness")
    _check_finite(reg_map, "rpn:regression")
    rows, cols, k = obj_map.shape
    logits = obj_map.reshape(rows * cols * k)
    deltas = reg_map.reshape(rows, cols, k, 4).reshape(rows * cols * k, 4)
    caches = (conv_cache, relu_mask, obj_cache, reg_cache, (rows, cols, k))
    return logits, deltas, caches


def _rpn_backward(dlogits: np.ndarray, ddeltas: np.ndarray, caches, grads: dict) -> np.ndarray:
    conv_cache, relu_mask, obj_cache, reg_cache, (rows, cols, k) = caches
    dobj_map = dlogits.reshape(rows, cols, k)
    dreg_map = ddeltas.reshape(rows, cols, k, 4).reshape(rows, cols, 4 * k)
    dh_obj, dw, db = conv2d_backward(dobj_map, obj_cache)
    grads["obj_w"] += dw
    grads["obj_b"] += db
    dh_reg, dw, db = conv2d_backward(dreg_map, reg_cache)
    grads["reg_w"] += dw
    grads["reg_b"] += db
    dhidden = relu_backward(dh_obj + dh_reg, relu_mask)
    dfm, dw, db = conv2d_backward(dhidden, conv_cache)
    grads["rpn_w"] += dw
    grads["rpn_b"] += db
    return dfm


def rpn_forward(
    fm: np.ndarray, params: dict, config: DetectorConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Per-anchor objectness probabilities and box deltas.

    Anchor order matches :func:`crosspoint.geometry.generate_anchor_array`
    on the grid of this feature map: row-major cells, k anchors per cell.
    """
    logits, deltas, _ = _run_rpn(fm, params, config.arch)
    return sigmoid(logits), deltas


def _propose_arrays(
    objectness: np.ndarray,
    deltas: np.ndarray,
    anchors: np.ndarray,
    loss_cfg: LossConfig,
    tile_w: float,
    tile_h: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Decode, clip, NMS to nms_max, keep the proposals_to_head best."""
    boxes = decode_boxes(deltas, anchors)
    xyxy = clip_xyxy(cxcywh_to_xyxy(boxes), tile_w, tile_h)
    wh = xyxy[:, 2:4] - xyxy[:, 0:2]
    valid = np.flatnonzero((wh[:, 0] > _DEGENERATE_SIDE) & (wh[:, 1] > _DEGENERATE_SIDE))
    if valid.size == 0:
        return np.zeros((0, 4)), np.zeros(0)
    keep = nms_indices(
        xyxy[valid], objectness[valid], loss_cfg.nms_threshold, loss_cfg.nms_max
    )
    chosen = valid[keep][: loss_cfg.proposals_to_head]
    return xyxy_to_cxcywh(xyxy[chosen]), objectness[chosen]


def propose(
    objectness: np.ndarray,
    deltas: np.ndarray,
    anchors: np.ndarray,
    config: DetectorConfig,
    tile_w: float,
    tile_h: float,
) -> list[ScoredBox]:
    """RPN outputs to at most `proposals_to_head` scored candidate regions."""
    boxes, scores = _propose_arrays(
        np.asarray(objectness, dtype=float),
        np.asarray(deltas, dtype=float),
        np.asarray(anchors, dtype=float),
        config.loss,
        tile_w,
        tile_h,
    )
    return [ScoredBox(Box(*b), float(s)) for b, s in zip(boxes, scores)]


def _roi_pool_batch(
    fm: np.ndarray, boxes_cxcywh: np.ndarray, out_size: int, stride: float
):
    """Max-pool each region into out_size^2 bins.

    Returns (pooled (P, s, s, C), argmax flat cell indices (P, s, s, C),
    with -1 marking empty bins). Bin edges expand by floor/ceil, so bins
    may share cells when a region is smaller than the output grid.
    """
    rows, cols, ch = fm.shape
    p = boxes_cxcywh.shape[0]
    pooled = np.zeros((p, out_size, out_size, ch), dtype=fm.dtype)
    argmax = np.full((p, out_size, out_size, ch), -1, dtype=np.int64)
    if p == 0:
        return pooled, argmax
    xyxy = cxcywh_to_xyxy(boxes_cxcywh) / stride
    xyxy[:, 0] = np.clip(xyxy[:, 0], 0, cols)
    xyxy[:, 2] = np.clip(xyxy[:, 2], 0, cols)
    xyxy[:, 1] = np.clip(xyxy[:, 1], 0, rows)
    xyxy[:, 3] = np.clip(xyxy[:, 3], 0, rows)
    for pi in range(p):
        x1, y1, x2, y2 = xyxy[pi]
        if x2 - x1 <= 0 or y2 - y1 <= 0:
            continue
        xs = x1 + (x2 - x1) * np.arange(out_size + 1) / out_size
        ys = y1 + (y2 - y1) * np.arange(out_size + 1) / out_size
        cs = np.minimum(np.floor(xs[:-1]).astype(int), cols - 1)
        ce = np.maximum(np.minimum(np.ceil(xs[1:]).astype(int), cols), cs + 1)
        rs = np.minimum(np.floor(ys[:-1]).astype(int), rows - 1)
        re = np.maximum(np.minimum(np.ceil(ys[1:]).astype(int), rows), rs + 1)
        for bi in range(out_size):
            r0, r1 = rs[bi], re[bi]
            for bj in range(out_size):
                c0, c1 = cs[bj], ce[bj]
                window = fm[r0:r1, c0:c1, :].reshape(-1, ch)
                flat = window.argmax(axis=0)
                pooled[pi, bi, bj] = window[flat, np.arange(ch)]
                width = c1 - c0
                argmax[pi, bi, bj] = (r0 + flat // width) * cols + c0 + flat % width
    return pooled, argmax


def _roi_pool_backward(
    dpooled: np.ndarray, argmax: np.ndarray, fm_shape: tuple[int, ...]
) -> np.ndarray:
    rows, cols, ch = fm_shape
    dflat = np.zeros((rows * cols, ch), dtype=dpooled.dtype)
    valid = argmax >= 0
    cells = argmax[valid]
    chans = np.broadcast_to(np.arange(ch), argmax.shape)[valid]
    np.add.at(dflat, (cells, chans), dpooled[valid])
    return dflat.reshape(rows, cols, ch)


def roi_pool(fm: np.ndarray, region: Box, out_size: int, stride: float = 1.0) -> np.ndarray:
    """Max over out_size^2 spatial bins of the region (empty bins give 0)."""
    if out_size < 1:
        raise ValueError(f"out_size must be positive, got {out_size}")
    arr = np.array([[region.cx, region.cy, region.w, region.h]], dtype=float)
    pooled, _ = _roi_pool_batch(fm, arr, out_size, stride)
    return pooled[0]


def _run_head(pooled: np.ndarray, params: dict):
    p = pooled.shape[0]
    flat = pooled.reshape(p, -1)
    h_pre, fc1_cache = fc_forward(flat, params["fc1_w"], params["fc1_b"])
    h, relu_mask = relu_forward(h_pre)
    cls_z, cls_cache = fc_forward(h, params["cls_w"], params["cls_b"])
    ref, ref_cache = fc_forward(h, params["ref_w"], params["ref_b"])
    _check_finite(cls_z, "head:cls")
    _check_finite(ref, "head:refine")
    caches = (fc1_cache, relu_mask, cls_cache, ref_cache, pooled.shape)
    return cls_z[:, 0], ref, caches


def _head_backward(dcls_z: np.ndarray, dref: np.ndarray, caches, grads: dict) -> np.ndarray:
    fc1_cache, relu_mask, cls_cache, ref_cache, pooled_shape = caches
    dh1, dw, db = fc_backward(dcls_z[:, None], cls_cache)
    grads["cls_w"] += dw
    grads["cls_b"] += db
    dh2, dw, db = fc_backward(dref, ref_cache)
    grads["ref_w"] += dw
    grads["ref_b"] += db
    dh_pre = relu_backward(dh1 + dh2, relu_mask)
    dflat, dw, db = fc_backward(dh_pre, fc1_cache)
    grads["fc1_w"] += dw
    grads["fc1_b"] += db
    return dflat.reshape(pooled_shape)


def detection_head_forward(
    pooled: np.ndarray, params: dict, config: DetectorConfig
) -> tuple[float, np.ndarray]:
    """Score one pooled region: (object probability, 4 refinement deltas)."""
    cls_z, ref, _ = _run_head(pooled[None, ...], params)
    return float(sigmoid(cls_z)[0]), ref[0]


def detect(tile, params: dict, config: DetectorConfig) -> list[ScoredBox]:
    """Full inference: propose, refine, keep probability >= detect_threshold.

    Output boxes are clipped to the tile and sorted by descending score;
    every returned score is at least the detection threshold.
    """
    x = _normalize_tile(tile)
    tile_h, tile_w = x.shape[:2]
    fm, _ = _run_backbone(x, params, config.arch)
    logits, deltas, _ = _run_rpn(fm, params, config.arch)
    anchors = generate_anchor_array(anchor_grid_for(fm.shape, config.arch))
    prop_boxes, _ = _propose_arrays(
        sigmoid(logits), deltas, anchors, config.loss, tile_w, tile_h
    )
    if prop_boxes.shape[0] == 0:
        return []
    pooled, _ = _roi_pool_batch(fm, prop_boxes, config.arch.roi_size, config.arch.total_stride)
    cls_z, ref, _ = _run_head(pooled, params)
    probs = sigmoid(cls_z)
    refined = clip_xyxy(cxcywh_to_xyxy(decode_boxes(ref, prop_boxes)), tile_w, tile_h)
    wh = refined[:, 2:4] - refined[:, 0:2]
    keep = np.flatnonzero(
        (probs >= config.loss.detect_threshold)
        & (wh[:, 0] > _DEGENERATE_SIDE)
        & (wh[:, 1] > _DEGENERATE_SIDE)
    )
    if keep.size == 0:
        return []
    kept = nms_indices(refined[keep], probs[keep], config.loss.nms_threshold)
    chosen = keep[kept]
    out_boxes = xyxy_to_cxcywh(refined[chosen])
    return [ScoredBox(Box(*b), float(probs[i])) for b, i in zip(out_boxes, chosen)]
