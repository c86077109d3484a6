"""Point-in-box matching protocol, tie rules, and the derived rates."""

import numpy as np
import pytest

from crosspoint.evaluation import (
    EvalReport,
    MatchResult,
    eval_report,
    f1,
    match_detections,
    merge_results,
    precision_recall,
    write_evaluation_csv,
)
from crosspoint.geometry import Box, ScoredBox


def max_matching_oracle(dets, gts):
    """Max bipartite matching on the point-containment graph (max possible TP)."""
    adj = [
        [j for j, g in enumerate(gts) if g.contains_point(d.box.cx, d.box.cy)]
        for d in dets
    ]
    match_gt = [-1] * len(gts)

    def try_aug(d, seen):
        for g in adj[d]:
            if g in seen:
                continue
            seen.add(g)
            if match_gt[g] == -1 or try_aug(match_gt[g], seen):
                match_gt[g] = d
                return True
        return False

    return sum(try_aug(d, set()) for d in range(len(dets)))


def random_scene(rng):
    n_det = int(rng.integers(0, 7))
    n_gt = int(rng.integers(0, 7))
    gts = [Box(*rng.uniform(2, 18, 2), *rng.uniform(2, 8, 2)) for _ in range(n_gt)]
    dets = [
        ScoredBox(Box(*rng.uniform(0, 20, 2), *rng.uniform(1, 6, 2)), float(rng.uniform(0, 1)))
        for _ in range(n_det)
    ]
    return dets, gts


class TestTieRules:
    def test_single_match(self):
        gts = [Box(10, 10, 6, 6)]
        dets = [ScoredBox(Box(10, 11, 4, 4), 0.9)]
        m = match_detections(dets, gts)
        assert (m.tp, m.fp, m.fn) == (1, 0, 0)
        assert m.matched_pairs == [(0, 0)]

    def test_two_points_in_one_box(self):
        gts = [Box(10, 10, 8, 8)]
        dets = [
            ScoredBox(Box(9, 10, 3, 3), 0.6),
            ScoredBox(Box(11, 10, 3, 3), 0.8),
        ]
        m = match_detections(dets, gts)
        assert (m.tp, m.fp, m.fn) == (1, 1, 0)
        # the higher-scored point is the TP
        assert m.matched_pairs == [(1, 0)]

    def test_one_point_in_two_gts(self):
        gts = [Box(10, 10, 10, 10), Box(12, 10, 6, 6)]
        dets = [ScoredBox(Box(11, 10, 3, 3), 0.7)]
        m = match_detections(dets, gts)
        assert (m.tp, m.fp, m.fn) == (1, 0, 1)
        # assigned to the smaller-area gt
        assert m.matched_pairs == [(0, 1)]

    def test_equal_area_tie_goes_to_lower_gt_index(self):
        gts = [Box(10, 10, 6, 6), Box(11, 10, 6, 6)]
        dets = [ScoredBox(Box(10.5, 10, 2, 2), 0.9)]
        m = match_detections(dets, gts)
        assert m.matched_pairs == [(0, 0)]

    def test_second_point_claims_the_larger_gt(self):
        gts = [Box(10, 10, 10, 10), Box(12, 10, 6, 6)]
        dets = [
            ScoredBox(Box(11, 10, 3, 3), 0.9),
            ScoredBox(Box(12, 11, 3, 3), 0.5),
        ]
        m = match_detections(dets, gts)
        assert (m.tp, m.fp, m.fn) == (2, 0, 0)
        assert m.matched_pairs == [(0, 1), (1, 0)]

    def test_boundary_inclusive(self):
        gts = [Box(10, 10, 4, 4)]
        dets = [ScoredBox(Box(12, 10, 2, 2), 0.5)]
        m = match_detections(dets, gts)
        assert m.tp == 1

    def test_empty_inputs(self):
        assert match_detections([], []) == MatchResult(0, 0, 0)
        assert match_detections([], [Box(5, 5, 2, 2)]).fn == 1
        m = match_detections([ScoredBox(Box(5, 5, 2, 2), 0.5)], [])
        assert (m.tp, m.fp, m.fn) == (0, 1, 0)


class TestRandomScenes:
    def test_count_identities_and_oracle_bound(self):
        """Greedy never exceeds the max-matching oracle; identities hold.

        Greedy can undershoot the oracle when a high-score point claims the
        only gt a later point could have taken; with this seed that happens
        on exactly 3 of 1000 scenes (the documented limitation of
        score-greedy matching).
        """
        rng = np.random.default_rng(101)
        suboptimal = 0
        for _ in range(1000):
            dets, gts = random_scene(rng)
            m = match_detections(dets, gts)
            assert m.tp + m.fp == len(dets)
            assert m.fn == len(gts) - m.tp
            assert m.tp <= min(len(dets), len(gts))
            opt = max_matching_oracle(dets, gts)
            assert m.tp <= opt
            if m.tp < opt:
                suboptimal += 1
        assert suboptimal == 3

    def test_permutation_invariance(self):
        rng = np.random.default_rng(55)
        for _ in range(200):
            dets, gts = random_scene(rng)
            m = match_detections(dets, gts)
            perm = rng.permutation(len(dets))
            shuffled = [dets[i] for i in perm]
            m2 = match_detections(shuffled, gts)
            assert (m.tp, m.fp, m.fn) == (m2.tp, m2.fp, m2.fn)

    def test_tied_scores_still_order_invariant(self):
        rng = np.random.default_rng(56)
        for _ in range(200):
            dets, gts = random_scene(rng)
            dets = [ScoredBox(d.box, 0.5) for d in dets]
            m = match_detections(dets, gts)
            perm = rng.permutation(len(dets))
            m2 = match_detections([dets[i] for i in perm], gts)
            assert (m.tp, m.fp, m.fn) == (m2.tp, m2.fp, m2.fn)


class TestRates:
    def test_precision_recall_values(self):
        m = MatchResult(tp=90, fp=10, fn=0)
        p, r = precision_recall(m)
        assert p == pytest.approx(0.9)
        m2 = MatchResult(tp=82, fp=0, fn=18)
        assert precision_recall(m2)[1] == pytest.approx(0.82)

    def test_undefined_cases_are_none(self):
        p, r = precision_recall(MatchResult(0, 0, 0))
        assert p is None and r is None
        p, r = precision_recall(MatchResult(0, 0, 3))
        assert p is None and r == 0.0
        p, r = precision_recall(MatchResult(0, 2, 0))
        assert p == 0.0 and r is None

    def test_f1_table_values(self):
        assert round(f1(0.9, 0.82), 2) == 0.86
        assert round(f1(0.76, 0.84), 2) == 0.80

    def test_f1_degenerate_and_propagation(self):
        assert f1(0.0, 0.0) == 0.0
        assert f1(None, 0.5) is None
        assert f1(0.5, None) is None
        assert f1(0.7, 0.7) == pytest.approx(0.7)

    def test_eval_report_and_merge(self):
        tiles = [MatchResult(3, 1, 0), MatchResult(0, 2, 1), MatchResult(5, 0, 2)]
        total = merge_results(tiles)
        assert (total.tp, total.fp, total.fn) == (8, 3, 3)
        rep = eval_report(total)
        assert rep.precision == pytest.approx(8 / 11)
        assert rep.recall == pytest.approx(8 / 11)
        assert rep.f1 == pytest.approx(8 / 11)

    def test_rejects_negative_counts(self):
        with pytest.raises(ValueError):
            MatchResult(-1, 0, 0)


class TestCsv:
    def test_layout_and_micro_total(self, tmp_path):
        rows = [
            ("a", MatchResult(2, 0, 1)),
            ("b", MatchResult(0, 0, 0)),
        ]
        path = tmp_path / "eval.csv"
        write_evaluation_csv(rows, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "tile_id,tp,fp,fn,precision,recall,f1"
        assert lines[1].startswith("a,2,0,1,1.000000,0.666667,")
        # undefined rates stay empty, never 0/0
        assert lines[2] == "b,0,0,0,,,"
        assert lines[3].startswith("TOTAL,2,0,1,")

    def test_macro_row(self, tmp_path):
        rows = [("a", MatchResult(1, 1, 0)), ("b", MatchResult(1, 0, 1))]
        path = tmp_path / "eval.csv"
        write_evaluation_csv(rows, path, macro=True)
        lines = path.read_text().strip().splitlines()
        assert lines[-1].startswith("MACRO,")
        macro_p = lines[-1].split(",")[4]
        assert macro_p == f"{(0.5 + 1.0) / 2:.6f}"
