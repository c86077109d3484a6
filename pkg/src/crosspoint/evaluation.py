"""Point-based detection scoring.

A detection counts through its center point. A point inside a ground-truth
box (boundary-inclusive) is a candidate true positive, with two tie rules:

* several points in one box: only one is a TP (the highest-scored), the
  rest are FP;
* one point inside several boxes: one TP for the box it is assigned to
  (the smallest-area unclaimed one), the remaining boxes stay unmatched
  and end up FN unless another point claims them.

FN is therefore the number of ground truths that received no point, and
tp + fp always equals the number of detections.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

from .geometry import Box, ScoredBox

__all__ = [
    "MatchResult",
    "EvalReport",
    "match_detections",
    "precision_recall",
    "f1",
    "eval_report",
    "merge_results",
    "write_evaluation_csv",
]


@dataclass(frozen=True)
class MatchResult:
    """Counts plus the (detection index, gt index) pairs that matched."""

    tp: int
    fp: int
    fn: int
    matched_pairs: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn) < 0:
            raise ValueError("counts must be non-negative")


@dataclass(frozen=True)
class EvalReport:
    """Precision/recall/F1; fields are None where the ratio is undefined."""

    precision: float | None
    recall: float | None
    f1: float | None


def match_detections(detections: list[ScoredBox], gts: list[Box]) -> MatchResult:
    """Assign detection center points to ground-truth boxes.

    Detections are processed in descending score order (ties by center,
    size, then input index, so the counts never depend on input order).
    Each point goes to the smallest-area containing gt that is still
    unclaimed; points with no containing gt, or whose containing gts are
    all claimed, are FP.
    """
    order = sorted(
        range(len(detections)),
        key=lambda i: (
            -detections[i].score,
            detections[i].box.cx,
            detections[i].box.cy,
            detections[i].box.w,
            detections[i].box.h,
            i,
        ),
    )
    claimed: set[int] = set()
    pairs: list[tuple[int, int]] = []
    fp = 0
    for i in order:
        px, py = detections[i].box.cx, detections[i].box.cy
        containing = [j for j, g in enumerate(gts) if g.contains_point(px, py)]
        open_gts = [j for j in containing if j not in claimed]
        if not open_gts:
            fp += 1
            continue
        j = min(open_gts, key=lambda j: (gts[j].area, j))
        claimed.add(j)
        pairs.append((i, j))
    pairs.sort()
    return MatchResult(tp=len(pairs), fp=fp, fn=len(gts) - len(claimed), matched_pairs=pairs)


def precision_recall(m: MatchResult) -> tuple[float | None, float | None]:
    """Eq.-style ratios; None when the denominator is zero."""
    precision = m.tp / (m.tp + m.fp) if (m.tp + m.fp) > 0 else None
    recall = m.tp / (m.tp + m.fn) if (m.tp + m.fn) > 0 else None
    return precision, recall


def f1(precision: float | None, recall: float | None) -> float | None:
    """Harmonic mean; 0 when both rates are 0; None propagates."""
    if precision is None or recall is None:
        return None
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def eval_report(m: MatchResult) -> EvalReport:
    p, r = precision_recall(m)
    return EvalReport(precision=p, recall=r, f1=f1(p, r))


def merge_results(results: list[MatchResult]) -> MatchResult:
    """Sum counts across tiles (micro-average basis). Pairs are dropped."""
    return MatchResult(
        tp=sum(m.tp for m in results),
        fp=sum(m.fp for m in results),
        fn=sum(m.fn for m in results),
    )


def _fmt(v: float | None) -> str:
    return "" if v is None else f"{v:.6f}"


def write_evaluation_csv(
    rows: list[tuple[str, MatchResult]], path, macro: bool = False
) -> None:
    """Per-tile counts and rates plus a micro-averaged TOTAL row.

    With ``macro=True`` an extra MACRO row averages the per-tile rates over
    the tiles where they are defined.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tile_id", "tp", "fp", "fn", "precision", "recall", "f1"])
        for tile_id, m in rows:
            rep = eval_report(m)
            writer.writerow(
                [tile_id, m.tp, m.fp, m.fn, _fmt(rep.precision), _fmt(rep.recall), _fmt(rep.f1)]
            )
        total = merge_results([m for _, m in rows])
        rep = eval_report(total)
        writer.writerow(
            ["TOTAL", total.tp, total.fp, total.fn, _fmt(rep.precision), _fmt(rep.recall), _fmt(rep.f1)]
        )
        if macro:
            reports = [eval_report(m) for _, m in rows]
            ps = [r.precision for r in reports if r.precision is not None]
            rs = [r.recall for r in reports if r.recall is not None]
            fs = [r.f1 for r in reports if r.f1 is not None]
            mean = lambda xs: sum(xs) / len(xs) if xs else None  # noqa: E731
            writer.writerow(
                ["MACRO", "", "", "", _fmt(mean(ps)), _fmt(mean(rs)), _fmt(mean(fs))]
            )
