"""Per-segment records, weighted-mean feature fusion, and query-time grouping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class SegmentError(ValueError):
    pass


class NoCentroidError(SegmentError):
    """Raised when a segment has no occupied voxels to average."""


@dataclass
class FeatureImage:
    """Per-pixel feature vectors with a validity mask."""

    values: np.ndarray  # (h, w, D)
    valid: np.ndarray  # (h, w) bool

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.values.ndim != 3 or self.valid.shape != self.values.shape[:2]:
            raise SegmentError("feature image needs (h,w,D) values and matching (h,w) mask")

    @property
    def dimension(self) -> int:
        return self.values.shape[2]

    @property
    def shape(self):
        return self.valid.shape


@dataclass
class SegmentRecord:
    segment_id: int
    mean_feature: np.ndarray  # unnormalized running mean, float32 (matches the map file)
    pixel_count: int = 0
    voxel_count: int = 0
    centroid_sum: np.ndarray = field(default_factory=lambda: np.zeros(3))
    owner_submap: int = 0

    def normalized_feature(self) -> np.ndarray | None:
        v = self.mean_feature.astype(np.float64)
        n = float(np.linalg.norm(v))
        if n == 0:
            return None
        return v / n


def fuse_features(record: SegmentRecord, frame_features: FeatureImage, pixels) -> SegmentRecord:
    """Weighted running-mean update over the frame's pixel set.

    pixels: (N, 2) array of (row, col) coordinates, N >= 1, all valid in the frame.
    """
    px = np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
    if len(px) == 0:
        raise SegmentError("empty pixel set")
    h, w = frame_features.shape
    if (px[:, 0] < 0).any() or (px[:, 0] >= h).any() or (px[:, 1] < 0).any() or (px[:, 1] >= w).any():
        raise SegmentError("pixel outside image")
    if not frame_features.valid[px[:, 0], px[:, 1]].all():
        raise SegmentError("invalid pixel in fusion set")
    feats = frame_features.values[px[:, 0], px[:, 1]].astype(np.float64)
    n = len(px)
    n_k = record.pixel_count
    # accumulate in float64, store float32 so persistence stays bit-exact
    mean = (n_k * record.mean_feature.astype(np.float64) + feats.sum(axis=0)) / (n_k + n)
    record.mean_feature = mean.astype(np.float32)
    record.pixel_count = n_k + n
    return record


class SegmentTable:
    """Allocation and lookup of segment records; ID 0 is reserved for unassigned."""

    def __init__(self, dimension: int):
        self.dimension = dimension
        self.records: dict[int, SegmentRecord] = {}
        self.next_id = 1

    def allocate(self, owner_submap: int) -> int:
        sid = self.next_id
        self.next_id += 1
        self.records[sid] = SegmentRecord(
            segment_id=sid,
            mean_feature=np.zeros(self.dimension, dtype=np.float32),
            owner_submap=owner_submap,
        )
        return sid

    def get(self, sid: int) -> SegmentRecord:
        return self.records[sid]

    def __contains__(self, sid: int) -> bool:
        return sid in self.records

    def __len__(self) -> int:
        return len(self.records)

    def copy(self) -> "SegmentTable":
        dup = SegmentTable(self.dimension)
        dup.next_id = self.next_id
        for sid, r in self.records.items():
            dup.records[sid] = SegmentRecord(
                segment_id=r.segment_id,
                mean_feature=r.mean_feature.copy(),
                pixel_count=r.pixel_count,
                voxel_count=r.voxel_count,
                centroid_sum=r.centroid_sum.copy(),
                owner_submap=r.owner_submap,
            )
        return dup


def centroid(record: SegmentRecord, atlas) -> np.ndarray:
    """World-frame mean of occupied voxel centers carrying this segment ID."""
    count, world_sum = atlas.segment_voxel_stats(record.segment_id)
    if count == 0:
        raise NoCentroidError(f"segment {record.segment_id} has no occupied voxels")
    return world_sum / count


def group_segments(records, gamma: float):
    """Single-linkage grouping over cosine similarity of normalized mean features.

    Returns (groups, unlabeled): groups is a list of ascending segment-ID lists,
    ordered by smallest member; unlabeled collects records with pixel_count == 0.
    """
    if not 0 < gamma <= 1:
        raise SegmentError("gamma must be in (0, 1]")
    recs = sorted(records, key=lambda r: r.segment_id)
    labeled = [r for r in recs if r.pixel_count > 0]
    unlabeled = [r.segment_id for r in recs if r.pixel_count == 0]
    if not labeled:
        return [], unlabeled
    feats = np.stack([r.normalized_feature() for r in labeled])
    sims = feats @ feats.T
    parent = list(range(len(labeled)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(labeled)):
        for j in range(i + 1, len(labeled)):
            if sims[i, j] >= gamma:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)

    by_root: dict[int, list[int]] = {}
    for i, r in enumerate(labeled):
        by_root.setdefault(find(i), []).append(r.segment_id)
    groups = sorted(by_root.values(), key=lambda g: g[0])
    return groups, unlabeled


# Map-file segment-record section: count u32; per record id u32, owner u64,
# pixel_count u64, voxel_count u64, centroid_sum 3xf64, D u32, mean Dxf32.

def write_segment_section(f, table: SegmentTable):
    import struct

    f.write(struct.pack("<I", len(table.records)))
    for sid in sorted(table.records):
        r = table.records[sid]
        f.write(struct.pack("<IQQQ", r.segment_id, r.owner_submap, r.pixel_count, r.voxel_count))
        f.write(np.asarray(r.centroid_sum, dtype="<f8").tobytes())
        f.write(struct.pack("<I", len(r.mean_feature)))
        f.write(np.asarray(r.mean_feature, dtype="<f4").tobytes())


def read_segment_section(f, dimension_hint: int | None = None) -> SegmentTable:
    import struct

    (count,) = struct.unpack("<I", f.read(4))
    table = SegmentTable(dimension_hint or 0)
    max_id = 0
    for _ in range(count):
        sid, owner, pix, vox = struct.unpack("<IQQQ", f.read(28))
        csum = np.frombuffer(f.read(24), dtype="<f8").copy()
        (dim,) = struct.unpack("<I", f.read(4))
        mean = np.frombuffer(f.read(4 * dim), dtype="<f4").copy()
        table.records[sid] = SegmentRecord(
            segment_id=sid,
            mean_feature=mean,
            pixel_count=pix,
            voxel_count=vox,
            centroid_sum=csum,
            owner_submap=owner,
        )
        table.dimension = dim
        max_id = max(max_id, sid)
    # every allocated ID has a record, so the allocator resumes past the maximum
    table.next_id = max_id + 1
    return table
