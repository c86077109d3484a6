"""Training: anchor labeling, loss evaluation, backprop, and the SGD loop.

The two stages are trained jointly on one tile per step. Proposal boxes
feeding the detection head are treated as constants (no gradient flows
back through the proposal coordinates into the RPN regression outputs);
both heads share the backbone gradient.

Recorded trace columns are the four loss parts as they enter the total,
i.e. the regression columns already include the lambda weight, so
``total == rpn_cls + rpn_reg + det_cls + det_reg`` holds for any lambda.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ..dataset import AnnotatedTile
from ..geometry import (
    Box,
    cxcywh_to_xyxy,
    encode_boxes,
    generate_anchor_array,
    iou_matrix,
)
from .config import DetectorConfig, LossConfig
from .layers import bce_with_logits, sigmoid, smooth_l1, smooth_l1_grad
from .model import (
    _backbone_backward,
    _head_backward,
    _normalize_tile,
    _propose_arrays,
    _roi_pool_backward,
    _roi_pool_batch,
    _rpn_backward,
    _run_backbone,
    _run_head,
    _run_rpn,
    anchor_grid_for,
    param_shapes,
    init_params,
)

__all__ = [
    "AnchorLabel",
    "DivergenceError",
    "TraceRow",
    "TrainTrace",
    "label_anchors",
    "sample_minibatch",
    "rpn_loss",
    "detection_loss",
    "train",
    "gradient_check",
    "write_trace_csv",
]

POSITIVE = 1
NEGATIVE = 0
IGNORE = -1

_GRAD_CHECK_SEED = 12345


class DivergenceError(ArithmeticError):
    """Raised when training produces a non-finite loss; carries the step."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class AnchorLabel:
    """Training label for one anchor (or proposal) box."""

    value: str
    matched_gt: Box | None = None

    def __post_init__(self):
        if self.value not in ("positive", "negative", "ignore"):
            raise ValueError(f"unknown label value {self.value!r}")
        if self.value == "positive" and self.matched_gt is None:
            raise ValueError("positive label requires a matched ground truth")


@dataclass(frozen=True)
class TraceRow:
    step: int
    rpn_cls: float
    rpn_reg: float
    det_cls: float
    det_reg: float
    total: float


@dataclass
class TrainTrace:
    """Per-step loss record; total always equals the sum of the four parts."""

    rows: list[TraceRow] = field(default_factory=list)

    def append(self, step: int, rpn_cls: float, rpn_reg: float, det_cls: float, det_reg: float):
        self.rows.append(
            TraceRow(step, rpn_cls, rpn_reg, det_cls, det_reg, rpn_cls + rpn_reg + det_cls + det_reg)
        )

    def totals(self) -> list[float]:
        return [r.total for r in self.rows]

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)


def _loss_cfg(config) -> LossConfig:
    return getattr(config, "loss", config)


def _label_arrays(
    boxes_cxcywh: np.ndarray, gts_cxcywh: np.ndarray, cfg: LossConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Label boxes against ground truths.

    Returns (labels, matched): labels holds 1 / 0 / -1 for positive,
    negative, ignore; matched holds the argmax-IoU gt index for positives
    and -1 elsewhere. Rule: IoU >= hi with any gt is positive, IoU < lo
    with every gt is negative, anything between is ignored. On top of
    that, each gt's own best-IoU box is forced positive (if the IoU is
    nonzero) so no gt is left without a learner. Ties take the lowest
    index, which argmax already guarantees.
    """
    n = boxes_cxcywh.shape[0]
    labels = np.full(n, IGNORE, dtype=np.int64)
    matched = np.full(n, -1, dtype=np.int64)
    if gts_cxcywh.shape[0] == 0:
        labels[:] = NEGATIVE
        return labels, matched

    m = iou_matrix(cxcywh_to_xyxy(boxes_cxcywh), cxcywh_to_xyxy(gts_cxcywh))
    best_iou = m.max(axis=1)
    best_gt = m.argmax(axis=1)

    labels[best_iou < cfg.lo_threshold] = NEGATIVE
    labels[best_iou >= cfg.hi_threshold] = POSITIVE
    forced = m.argmax(axis=0)
    keep = m[forced, np.arange(m.shape[1])] > 0.0
    labels[forced[keep]] = POSITIVE
    pos = labels == POSITIVE
    matched[pos] = best_gt[pos]
    return labels, matched


def label_anchors(anchors, gts: list[Box], config) -> list[AnchorLabel]:
    """Per-anchor training labels (positive boxes carry their matched gt)."""
    arr = _as_box_array(anchors)
    if arr.shape[0] == 0:
        raise ValueError("anchors must be non-empty")
    gt_arr = _as_box_array(gts)
    labels, matched = _label_arrays(arr, gt_arr, _loss_cfg(config))
    names = {POSITIVE: "positive", NEGATIVE: "negative", IGNORE: "ignore"}
    out = []
    for lab, gt_i in zip(labels, matched):
        out.append(AnchorLabel(names[lab], gts[gt_i] if lab == POSITIVE else None))
    return out


def _as_box_array(boxes) -> np.ndarray:
    if isinstance(boxes, np.ndarray):
        return np.asarray(boxes, dtype=float).reshape(-1, 4)
    return np.array([[b.cx, b.cy, b.w, b.h] for b in boxes], dtype=float).reshape(-1, 4)


def _label_ints(labels) -> np.ndarray:
    if isinstance(labels, np.ndarray):
        return labels.astype(np.int64)
    mapping = {"positive": POSITIVE, "negative": NEGATIVE, "ignore": IGNORE}
    return np.array([mapping[l.value] for l in labels], dtype=np.int64)


def _sample_arrays(labels: np.ndarray, n_cls: int, rng: np.random.Generator) -> np.ndarray:
    positives = np.flatnonzero(labels == POSITIVE)
    negatives = np.flatnonzero(labels == NEGATIVE)
    if positives.size == 0 and negatives.size == 0:
        raise ValueError("degenerate tile: every anchor is ignored")
    n_pos = min(positives.size, n_cls // 2)
    pos_sel = rng.permutation(positives)[:n_pos]
    n_neg = min(negatives.size, n_cls - n_pos)
    neg_sel = rng.permutation(negatives)[:n_neg]
    return np.sort(np.concatenate([pos_sel, neg_sel]))


def sample_minibatch(labels, n_cls: int, seed) -> list[int]:
    """Seeded anchor sample: up to n_cls/2 positives, the rest negatives.

    Ignored anchors are never included. Indices come back sorted.
    """
    if n_cls < 1:
        raise ValueError(f"n_cls must be positive, got {n_cls}")
    rng = np.random.default_rng(seed)
    return [int(i) for i in _sample_arrays(_label_ints(labels), n_cls, rng)]


def _bce_from_probs(probs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return -np.where(targets == 1, np.log(probs), np.log1p(-probs))


def _deltas_array(deltas) -> np.ndarray:
    if isinstance(deltas, np.ndarray):
        return np.asarray(deltas, dtype=float).reshape(-1, 4)
    return np.array([[d.tx, d.ty, d.tw, d.th] for d in deltas], dtype=float).reshape(-1, 4)


def _loss_from_probs(probs, deltas, labels, boxes, cfg: LossConfig):
    probs = np.asarray(probs, dtype=float).reshape(-1)
    delta_arr = _deltas_array(deltas)
    label_ints = _label_ints(labels)
    box_arr = _as_box_array(boxes)

    classified = np.flatnonzero(label_ints != IGNORE)
    if classified.size == 0:
        raise ValueError("no classified (non-ignored) entries to score")
    targets = (label_ints[classified] == POSITIVE).astype(float)
    cls_loss = float(np.mean(_bce_from_probs(probs[classified], targets)))

    pos = np.flatnonzero(label_ints == POSITIVE)
    if pos.size:
        if isinstance(labels, np.ndarray):
            raise TypeError("positive labels need matched gts; pass AnchorLabel objects")
        gt_arr = _as_box_array([labels[i].matched_gt for i in pos])
        diff = delta_arr[pos] - encode_boxes(gt_arr, box_arr[pos])
        reg_loss = float(np.mean(smooth_l1(diff).sum(axis=1)))
    else:
        reg_loss = 0.0

    combined = cls_loss + cfg.lam * reg_loss
    if not np.isfinite(combined):
        raise ArithmeticError(
            f"non-finite loss (cls={cls_loss}, reg={reg_loss})"
        )
    return cls_loss, reg_loss, combined


def rpn_loss(objectness, deltas, labels, anchors, config):
    """(cls, reg, combined): mean log loss over the labeled anchors plus
    lambda times the mean summed smooth-L1 over positive anchors."""
    return _loss_from_probs(objectness, deltas, labels, anchors, _loss_cfg(config))


def detection_loss(probs, refines, labels, proposals, config):
    """Detection-stage counterpart of :func:`rpn_loss`, on proposals."""
    return _loss_from_probs(probs, refines, labels, proposals, _loss_cfg(config))


def _forward_backward(
    x: np.ndarray,
    gts: np.ndarray,
    params: dict,
    config: DetectorConfig,
    rng: np.random.Generator | None = None,
    fixed: dict | None = None,
    want_grads: bool = True,
):
    """One tile through both stages; returns (loss parts, grads or None).

    `fixed` freezes the stochastic and discrete choices (minibatch
    indices, proposal boxes) so repeated evaluations differentiate the
    same function; the train loop passes `rng` instead and the choices
    are made fresh. Loss parts are (rpn_cls, rpn_reg, det_cls, det_reg)
    with the regression parts already weighted by lambda.
    """
    arch, cfg = config.arch, config.loss
    tile_h, tile_w = x.shape[:2]
    grads = {k: np.zeros_like(v) for k, v in params.items()} if want_grads else None

    fm, bb_caches = _run_backbone(x, params, arch)
    logits, deltas, rpn_caches = _run_rpn(fm, params, arch)
    anchors = generate_anchor_array(anchor_grid_for(fm.shape, arch))

    labels, matched = _label_arrays(anchors, gts, cfg)
    sel = fixed["rpn_sel"] if fixed else _sample_arrays(labels, cfg.n_cls, rng)

    y_sel = (labels[sel] == POSITIVE).astype(float)
    z_sel = logits[sel]
    rpn_cls = float(np.mean(bce_with_logits(z_sel, y_sel)))

    pos_sel = sel[labels[sel] == POSITIVE]
    if pos_sel.size:
        rpn_targets = encode_boxes(gts[matched[pos_sel]], anchors[pos_sel])
        rpn_diff = deltas[pos_sel] - rpn_targets
        rpn_reg_raw = float(np.mean(smooth_l1(rpn_diff).sum(axis=1)))
    else:
        rpn_reg_raw = 0.0

    if want_grads:
        dlogits = np.zeros_like(logits)
        dlogits[sel] = (sigmoid(z_sel) - y_sel) / sel.size
        ddeltas = np.zeros_like(deltas)
        if pos_sel.size:
            ddeltas[pos_sel] = cfg.lam * smooth_l1_grad(rpn_diff) / pos_sel.size
        dfm = _rpn_backward(dlogits, ddeltas, rpn_caches, grads)
    else:
        dfm = None

    if fixed is not None:
        proposals = fixed["proposals"]
    else:
        proposals, _ = _propose_arrays(
            sigmoid(logits), deltas, anchors, cfg, tile_w, tile_h
        )
        if gts.shape[0]:
            # the gt boxes join the training proposal set so the head
            # always sees well-localized positives, even before the RPN
            # proposes anything useful
            proposals = np.vstack([proposals, gts])

    det_cls = 0.0
    det_reg_raw = 0.0
    if proposals.shape[0]:
        plabels, pmatched = _label_arrays(proposals, gts, cfg)
        if np.any(plabels != IGNORE):
            # balance the head batch the same way as the RPN minibatch
            sel_head = (
                fixed["head_sel"] if fixed else _sample_arrays(plabels, cfg.head_batch, rng)
            )
            pooled, argmax = _roi_pool_batch(
                fm, proposals[sel_head], arch.roi_size, float(arch.total_stride)
            )
            cls_z, ref, head_caches = _run_head(pooled, params)
            y = (plabels[sel_head] == POSITIVE).astype(float)
            det_cls = float(np.mean(bce_with_logits(cls_z, y)))

            pos_mask = y == 1.0
            if pos_mask.any():
                gt_idx = pmatched[sel_head][pos_mask]
                det_targets = encode_boxes(gts[gt_idx], proposals[sel_head][pos_mask])
                det_diff = ref[pos_mask] - det_targets
                det_reg_raw = float(np.mean(smooth_l1(det_diff).sum(axis=1)))

            if want_grads:
                dcls_z = (sigmoid(cls_z) - y) / sel_head.size
                dref = np.zeros_like(ref)
                if pos_mask.any():
                    dref[pos_mask] = cfg.lam * smooth_l1_grad(det_diff) / pos_mask.sum()
                dpooled = _head_backward(dcls_z, dref, head_caches, grads)
                dfm = dfm + _roi_pool_backward(dpooled, argmax, fm.shape)

    if want_grads:
        _backbone_backward(dfm, bb_caches, grads)

    parts = (rpn_cls, cfg.lam * rpn_reg_raw, det_cls, cfg.lam * det_reg_raw)
    return parts, grads


def _gt_array(at: AnnotatedTile) -> np.ndarray:
    return np.array(
        [[b.cx, b.cy, b.w, b.h] for b in at.ground_truths], dtype=float
    ).reshape(-1, 4)


def train(
    dataset: list[AnnotatedTile], config: DetectorConfig, seed: int, steps: int
) -> tuple[dict, TrainTrace]:
    """SGD over one tile per step; returns final params and the loss trace.

    Tiles are visited in seeded per-epoch permutations. Each step records
    its loss (computed from the pre-update parameters) and then applies
    ``param -= learning_rate * grad``. Fully deterministic for a given
    (dataset, config, seed).
    """
    if not dataset:
        raise ValueError("training set is empty")
    if steps < 0:
        raise ValueError(f"steps must be non-negative, got {steps}")
    params = init_params(config, seed)
    trace = TrainTrace()
    n = len(dataset)
    lr = config.loss.learning_rate
    perm = None
    for step in range(steps):
        epoch, offset = divmod(step, n)
        if offset == 0:
            epoch_rng = np.random.default_rng(np.random.SeedSequence((seed, 0, epoch)))
            perm = epoch_rng.permutation(n)
        at = dataset[perm[offset]]
        x = _normalize_tile(at.tile)
        step_rng = np.random.default_rng(np.random.SeedSequence((seed, 1, step)))
        try:
            parts, grads = _forward_backward(x, _gt_array(at), params, config, rng=step_rng)
        except ArithmeticError as exc:
            raise DivergenceError(f"{exc} at step {step}", step) from exc
        total = sum(parts)
        if not np.isfinite(total):
            raise DivergenceError(f"non-finite loss {total} at step {step}", step)
        trace.append(step, *parts)
        for name in params:
            params[name] -= lr * grads[name]
    return params, trace


def _loss_value(x, gts, params, config, fixed) -> float:
    parts, _ = _forward_backward(x, gts, params, config, fixed=fixed, want_grads=False)
    return float(sum(parts))


def gradient_check(
    params: dict, config: DetectorConfig, sample: AnnotatedTile, epsilon: float = 1e-4
) -> float:
    """Max relative error between analytic and central-difference gradients.

    The minibatch and the proposal set are chosen once and frozen, so
    every finite-difference evaluation differentiates exactly the
    function whose analytic gradient was taken. Checks 100 randomly
    chosen parameter coordinates (all of them if the model is smaller).
    """
    x = _normalize_tile(sample.tile)
    gts = _gt_array(sample)
    arch, cfg = config.arch, config.loss

    fm, _ = _run_backbone(x, params, arch)
    logits, deltas, _ = _run_rpn(fm, params, arch)
    anchors = generate_anchor_array(anchor_grid_for(fm.shape, arch))
    labels, _ = _label_arrays(anchors, gts, cfg)
    rng = np.random.default_rng(_GRAD_CHECK_SEED)
    proposals, _ = _propose_arrays(
        sigmoid(logits), deltas, anchors, cfg, x.shape[1], x.shape[0]
    )
    if gts.shape[0]:
        proposals = np.vstack([proposals, gts])
    fixed = {"rpn_sel": _sample_arrays(labels, cfg.n_cls, rng), "proposals": proposals}
    plabels, _ = _label_arrays(proposals, gts, cfg)
    if proposals.shape[0] and np.any(plabels != IGNORE):
        fixed["head_sel"] = _sample_arrays(plabels, cfg.head_batch, rng)

    _, grads = _forward_backward(x, gts, params, config, fixed=fixed)

    names = sorted(params)
    sizes = np.array([params[k].size for k in names])
    total = int(sizes.sum())
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    chosen = rng.permutation(total)[: min(100, total)]

    worst = 0.0
    for flat_idx in chosen:
        which = int(np.searchsorted(offsets, flat_idx, side="right") - 1)
        name = names[which]
        local = int(flat_idx - offsets[which])
        original = params[name].flat[local]
        params[name].flat[local] = original + epsilon
        hi = _loss_value(x, gts, params, config, fixed)
        params[name].flat[local] = original - epsilon
        lo = _loss_value(x, gts, params, config, fixed)
        params[name].flat[local] = original
        fd = (hi - lo) / (2.0 * epsilon)
        analytic = grads[name].flat[local]
        err = abs(analytic - fd) / max(abs(analytic), abs(fd), 1e-6)
        worst = max(worst, err)
    return worst


def write_trace_csv(trace: TrainTrace, path) -> None:
    """Write the trace with header step,rpn_cls,rpn_reg,det_cls,det_reg,total."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "rpn_cls", "rpn_reg", "det_cls", "det_reg", "total"])
        for r in trace:
            writer.writerow(
                [r.step, repr(r.rpn_cls), repr(r.rpn_reg), repr(r.det_cls), repr(r.det_reg), repr(r.total)]
            )
