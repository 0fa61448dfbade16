"""Open-vocabulary querying over segment records and the evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.spatial import cKDTree

from seekmap.encoding import QueryEmbedding


class MetricsUndefinedError(ValueError):
    """Raised when a metric has no defined value (e.g. empty ground truth)."""


@dataclass
class ActivationMap:
    entries: dict[int, float]
    query: QueryEmbedding
    snapshot_version: int

    def top(self, k: int = 10):
        """(segment_id, similarity) sorted by similarity descending, ties by id."""
        ranked = sorted(self.entries.items(), key=lambda kv: (-kv[1], kv[0]))
        return ranked[:k]


def activation(atlas, query: QueryEmbedding) -> ActivationMap:
    """Cosine similarity between every non-empty segment's mean feature and the query."""
    entries = {}
    for sid, rec in atlas.segments.records.items():
        if rec.pixel_count == 0:
            continue
        f = rec.normalized_feature()
        if f is None:
            continue
        entries[sid] = float(f @ query.vector)
    return ActivationMap(entries=entries, query=query, snapshot_version=atlas.snapshot_version)


def closed_set_labels(atlas, classes: list[QueryEmbedding]) -> dict[int, int]:
    """argmax-cosine class index per segment; ties break to the lowest class index."""
    if not classes:
        raise ValueError("need at least one class")
    mat = np.stack([c.vector for c in classes])
    out = {}
    for sid, rec in atlas.segments.records.items():
        if rec.pixel_count == 0:
            continue
        f = rec.normalized_feature()
        if f is None:
            continue
        sims = mat @ f
        out[sid] = int(np.argmax(sims))  # argmax returns the first (lowest) index on ties
    return out


_NEIGHBOR_OFFSETS = sorted(
    (
        (dx, dy, dz)
        for dx in (-1, 0, 1)
        for dy in (-1, 0, 1)
        for dz in (-1, 0, 1)
    ),
    key=lambda o: (o[0] * o[0] + o[1] * o[1] + o[2] * o[2], o),
)


def match_predictions(pred: dict, gt: dict):
    """Pair each predicted voxel with a GT voxel: exact cell first, else the nearest
    GT voxel within one voxel diagonal (3x3x3 neighborhood), preferring a same-label
    cell on distance ties; unmatched -> (voxel, label, None, None)."""
    pairs = []
    for v, p_label in sorted(pred.items()):
        g_voxel = v if v in gt else None
        if g_voxel is None:
            best = None
            for ox, oy, oz in _NEIGHBOR_OFFSETS[1:]:
                nb = (v[0] + ox, v[1] + oy, v[2] + oz)
                g_label = gt.get(nb)
                if g_label is None:
                    continue
                rank = (ox * ox + oy * oy + oz * oz, 0 if g_label == p_label else 1, nb)
                if best is None or rank < best[0]:
                    best = (rank, nb)
            g_voxel = best[1] if best is not None else None
        pairs.append((v, p_label, g_voxel, gt.get(g_voxel) if g_voxel is not None else None))
    return pairs


def semantic_metrics(pred: dict, gt: dict, exclude: set | None = None) -> dict:
    """mAcc (class-mean recall) and frequency-weighted mean IoU over voxel labels.

    pred/gt map voxel index tuples on the same lattice to class labels.
    """
    exclude = exclude or set()
    gt = {v: c for v, c in gt.items() if c not in exclude}
    if not gt:
        raise MetricsUndefinedError("empty ground truth")
    pred = {v: c for v, c in pred.items() if c not in exclude}
    classes = sorted({c for c in gt.values()} | {c for c in pred.values()})
    # TP is counted over GT voxels (a GT voxel matched by several correct
    # predictions counts once); an incorrect or unmatched prediction is an FP
    tp_voxels = {c: set() for c in classes}
    fp = {c: 0 for c in classes}
    for _v, p_label, g_voxel, g_label in match_predictions(pred, gt):
        if g_label is not None and p_label == g_label:
            tp_voxels[p_label].add(g_voxel)
        else:
            fp[p_label] += 1
    tp = {c: len(tp_voxels[c]) for c in classes}
    gt_counts = {c: 0 for c in classes}
    for c in gt.values():
        gt_counts[c] += 1
    # exact rational arithmetic so hand-checkable values come out bit-exact
    per_class = {}
    recalls = []
    f_miou = Fraction(0)
    total_gt = sum(gt_counts.values())
    for c in classes:
        fn = gt_counts[c] - tp[c]
        denom = tp[c] + fp[c] + fn
        iou = Fraction(tp[c], denom) if denom > 0 else Fraction(0)
        entry = {"iou": float(iou), "gt_voxels": gt_counts[c]}
        if gt_counts[c] > 0:
            recall = Fraction(tp[c], gt_counts[c])
            entry["recall"] = float(recall)
            recalls.append(recall)
            f_miou += Fraction(gt_counts[c], total_gt) * iou
        per_class[c] = entry
    macc = sum(recalls, Fraction(0)) / len(recalls)
    return {"mAcc": float(macc), "f_miou": float(f_miou), "per_class": per_class}


def completeness_and_rmse(recon_points, gt_samples, tau: float = 0.05) -> dict:
    """Fraction of GT surface samples with reconstructed geometry within tau, and the
    RMSE of nearest-point distances over those matched samples."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    gt = np.asarray(gt_samples, dtype=np.float64).reshape(-1, 3)
    recon = np.asarray(recon_points, dtype=np.float64).reshape(-1, 3)
    if len(gt) == 0:
        raise MetricsUndefinedError("no ground-truth samples")
    if len(recon) == 0:
        return {"completeness": 0.0, "rmse": None}
    dists, _ = cKDTree(recon).query(gt)
    matched = dists <= tau
    completeness = float(matched.mean())
    rmse = float(np.sqrt(np.mean(dists[matched] ** 2))) if matched.any() else None
    return {"completeness": completeness, "rmse": rmse}


@dataclass
class EvalReport:
    mAcc: float
    f_miou: float
    per_class: dict = field(default_factory=dict)
    completeness: float | None = None
    rmse: float | None = None

    def to_dict(self) -> dict:
        return {
            "mAcc": self.mAcc,
            "f_miou": self.f_miou,
            "per_class": {str(k): v for k, v in sorted(self.per_class.items(), key=lambda kv: str(kv[0]))},
            "completeness": self.completeness,
            "rmse": self.rmse,
        }

    def to_table(self) -> str:
        lines = [f"{'class':<16}{'recall':>10}{'iou':>10}{'gt_voxels':>12}"]
        for c, entry in sorted(self.per_class.items(), key=lambda kv: str(kv[0])):
            recall = entry.get("recall")
            lines.append(
                f"{str(c):<16}{(f'{recall:.4f}' if recall is not None else '-'):>10}"
                f"{entry['iou']:>10.4f}{entry['gt_voxels']:>12}"
            )
        lines.append(f"{'mAcc':<16}{self.mAcc:>10.4f}")
        lines.append(f"{'f-mIoU':<16}{self.f_miou:>10.4f}")
        if self.completeness is not None:
            lines.append(f"{'completeness':<16}{self.completeness:>10.4f}")
        if self.rmse is not None:
            lines.append(f"{'rmse':<16}{self.rmse:>10.4f}")
        return "\n".join(lines)
