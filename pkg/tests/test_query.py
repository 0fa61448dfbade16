from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seekmap.encoding import QueryEmbedding
from seekmap.mapcore import SubmapAtlas
from seekmap.query import (
    ActivationMap,
    EvalReport,
    MetricsUndefinedError,
    activation,
    closed_set_labels,
    completeness_and_rmse,
    match_predictions,
    semantic_metrics,
)
from seekmap.segments import SegmentRecord


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    return QueryEmbedding(v / np.linalg.norm(v))


def atlas_with_features(features: dict[int, np.ndarray], pixel_counts=None):
    atlas = SubmapAtlas(0.1)
    for sid, vec in features.items():
        atlas.segments.records[sid] = SegmentRecord(
            segment_id=sid,
            mean_feature=np.asarray(vec, dtype=np.float32),
            pixel_count=(pixel_counts or {}).get(sid, 10),
        )
    return atlas


class TestActivation:
    def test_cosine_values(self):
        atlas = atlas_with_features({1: [2.0, 0.0], 2: [1.0, 1.0]})
        amap = activation(atlas, unit([1.0, 0.0]))
        assert amap.entries[1] == pytest.approx(1.0)
        assert amap.entries[2] == pytest.approx(1.0 / np.sqrt(2))
        assert amap.snapshot_version == atlas.snapshot_version

    def test_skips_empty_and_zero_segments(self):
        atlas = atlas_with_features({1: [1.0, 0.0], 2: [1.0, 0.0], 3: [0.0, 0.0]},
                                    pixel_counts={2: 0})
        amap = activation(atlas, unit([1.0, 0.0]))
        assert set(amap.entries) == {1}

    def test_top_orders_by_similarity_then_id(self):
        amap = ActivationMap(entries={3: 0.5, 1: 0.9, 7: 0.9, 2: 0.1}, query=unit([1.0]), snapshot_version=0)
        assert amap.top(3) == [(1, 0.9), (7, 0.9), (3, 0.5)]


class TestClosedSetLabels:
    def test_argmax_with_low_index_ties(self):
        atlas = atlas_with_features({1: [1.0, 0.0], 2: [0.0, 1.0], 3: [1.0, 1.0]})
        classes = [unit([1.0, 0.0]), unit([0.0, 1.0])]
        labels = closed_set_labels(atlas, classes)
        assert labels == {1: 0, 2: 1, 3: 0}  # segment 3 ties; lowest index wins

    def test_requires_classes(self):
        with pytest.raises(ValueError):
            closed_set_labels(atlas_with_features({}), [])


class TestMatchPredictions:
    def test_exact_cell_first(self):
        pairs = match_predictions({(0, 0, 0): "A"}, {(0, 0, 0): "B", (0, 0, 1): "A"})
        assert pairs == [((0, 0, 0), "A", (0, 0, 0), "B")]

    def test_nearest_within_one_diagonal(self):
        pairs = match_predictions({(0, 0, 0): "A"}, {(0, 1, 1): "B", (5, 5, 5): "A"})
        assert pairs == [((0, 0, 0), "A", (0, 1, 1), "B")]

    def test_same_label_preferred_on_distance_ties(self):
        gt = {(0, 0, 1): "A", (0, 0, -1): "B"}
        assert match_predictions({(0, 0, 0): "B"}, gt)[0][2] == (0, 0, -1)
        assert match_predictions({(0, 0, 0): "A"}, gt)[0][2] == (0, 0, 1)

    def test_unmatched_prediction(self):
        pairs = match_predictions({(9, 9, 9): "A"}, {(0, 0, 0): "A"})
        assert pairs == [((9, 9, 9), "A", None, None)]


class TestSemanticMetrics:
    def test_hand_case(self):
        gt = {(i, 0, 0): ("A" if i < 3 else "B") for i in range(4)}
        pred = {(i, 0, 0): ("A" if i < 2 else "B") for i in range(4)}
        m = semantic_metrics(pred, gt)
        assert m["mAcc"] == pytest.approx(5 / 6, abs=0)
        assert m["f_miou"] == pytest.approx(0.625, abs=0)
        assert m["per_class"]["A"]["recall"] == pytest.approx(2 / 3)
        assert m["per_class"]["B"]["iou"] == pytest.approx(0.5)

    def test_perfect_prediction(self):
        gt = {(i, j, 0): (i + j) % 3 for i in range(4) for j in range(4)}
        m = semantic_metrics(dict(gt), gt)
        assert m["mAcc"] == 1.0 and m["f_miou"] == 1.0

    def test_empty_gt_raises(self):
        with pytest.raises(MetricsUndefinedError):
            semantic_metrics({(0, 0, 0): "A"}, {})

    def test_exclusions(self):
        gt = {(0, 0, 0): "A", (1, 0, 0): "moving"}
        pred = {(0, 0, 0): "A", (1, 0, 0): "moving"}
        m = semantic_metrics(pred, gt, exclude={"moving"})
        assert m["mAcc"] == 1.0 and set(m["per_class"]) == {"A"}

    def test_duplicate_matches_count_one_gt_voxel(self):
        # two predictions land on the same GT voxel; recall stays at 1
        gt = {(0, 0, 0): "A"}
        pred = {(0, 0, 0): "A", (0, 0, 1): "A"}
        m = semantic_metrics(pred, gt)
        assert m["per_class"]["A"]["recall"] == 1.0
        # the second correct match collapses onto the same GT voxel: not an FP
        assert m["per_class"]["A"]["iou"] == 1.0

    @staticmethod
    def _oracle(pred, gt):
        """Scalar re-implementation for same-lattice confusions (exact cells only)."""
        classes = sorted(set(gt.values()) | set(pred.values()))
        tp = {c: 0 for c in classes}
        fp = {c: 0 for c in classes}
        gt_n = {c: 0 for c in classes}
        for c in gt.values():
            gt_n[c] += 1
        for v, p in pred.items():
            if gt.get(v) == p:
                tp[p] += 1
            else:
                fp[p] += 1
        recalls = [Fraction(tp[c], gt_n[c]) for c in classes if gt_n[c] > 0]
        total = sum(gt_n.values())
        f_miou = sum(
            Fraction(gt_n[c], total) * Fraction(tp[c], tp[c] + fp[c] + gt_n[c] - tp[c])
            for c in classes
            if gt_n[c] > 0 and (tp[c] + fp[c] + gt_n[c] - tp[c]) > 0
        )
        return float(sum(recalls, Fraction(0)) / len(recalls)), float(f_miou)

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=100, deadline=None)
    def test_matches_oracle_on_shared_lattice(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 40))
        cells = [(int(x), int(y), 0) for x, y in rng.integers(0, 4, size=(n, 2)) * 3]
        gt = {v: int(c) for v, c in zip(cells, rng.integers(0, 4, size=n))}
        pred = {v: int(c) for v, c in zip(cells, rng.integers(0, 4, size=n))}
        m = semantic_metrics(pred, gt)
        macc, f_miou = self._oracle(pred, gt)
        assert m["mAcc"] == pytest.approx(macc, abs=0)
        assert m["f_miou"] == pytest.approx(f_miou, abs=0)
        ious = [e["iou"] for e in m["per_class"].values()]
        recalls = [e["recall"] for e in m["per_class"].values() if "recall" in e]
        assert m["f_miou"] <= max(ious) + 1e-12
        assert min(recalls) - 1e-12 <= m["mAcc"] <= max(recalls) + 1e-12


class TestCompleteness:
    def test_brute_force_oracle(self, rng):
        gt = rng.uniform(0, 1, size=(50, 3))
        recon = rng.uniform(0, 1, size=(30, 3))
        out = completeness_and_rmse(recon, gt, tau=0.2)
        d = np.linalg.norm(gt[:, None, :] - recon[None, :, :], axis=2).min(axis=1)
        matched = d <= 0.2
        assert out["completeness"] == pytest.approx(matched.mean(), abs=0)
        assert out["rmse"] == pytest.approx(np.sqrt((d[matched] ** 2).mean()))

    def test_empty_recon(self):
        out = completeness_and_rmse(np.zeros((0, 3)), np.zeros((5, 3)))
        assert out == {"completeness": 0.0, "rmse": None}

    def test_validation(self):
        with pytest.raises(MetricsUndefinedError):
            completeness_and_rmse(np.zeros((1, 3)), np.zeros((0, 3)))
        with pytest.raises(ValueError):
            completeness_and_rmse(np.zeros((1, 3)), np.zeros((1, 3)), tau=0.0)


class TestEvalReport:
    def test_dict_and_table(self):
        rep = EvalReport(mAcc=0.5, f_miou=0.25,
                         per_class={"A": {"recall": 0.5, "iou": 0.25, "gt_voxels": 4}},
                         completeness=0.9, rmse=0.01)
        d = rep.to_dict()
        assert d["mAcc"] == 0.5 and d["per_class"]["A"]["iou"] == 0.25
        table = rep.to_table()
        assert "mAcc" in table and "0.9000" in table
