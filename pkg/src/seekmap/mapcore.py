"""Sparse block-hashed occupancy submap atlas.

Depth integration, tri-state classification, cross-submap raycasting,
segment-mask rendering, anchor corrections, persistence, and memory accounting.
"""

from __future__ import annotations

import struct
import threading
from dataclasses import dataclass, field

import numpy as np

from seekmap.geometry import CameraModel, GeometryError, Pose, validate_depth
from seekmap.kernels import BLOCK_VOL, SubmapCore, unpack_key
from seekmap.segments import SegmentTable, read_segment_section, write_segment_section

# occupancy update constants (standard log-odds values)
L_OCC = 0.85
L_FREE = -0.4
LOG_ODDS_CLAMP = 5.0

# analytic memory model: f32 log-odds + u32 segment id + u8 observed per voxel
VOXEL_BYTES = 9
BLOCK_KEY_BYTES = 8
SEGMENT_RECORD_OVERHEAD = 64  # id, counts, centroid sum, owner

MAP_MAGIC = b"SKMP"
MAP_VERSION = 1

UNKNOWN = "unknown"
FREE = "free"
OCCUPIED = "occupied"


class MapFormatError(IOError):
    pass


@dataclass
class Voxel:
    log_odds: float
    segment_id: int
    observed: bool


@dataclass
class IntegrationStats:
    updated_voxels: int
    allocated_blocks: int


@dataclass
class CorrectionStats:
    updated: int
    ignored: int


@dataclass
class Hit:
    distance: float
    voxel_coords: tuple
    segment_id: int
    submap_id: int


@dataclass
class CreationPolicy:
    max_frames_per_submap: int = 50
    max_distance_per_submap: float = 5.0


def classify(voxel: Voxel) -> str:
    if not voxel.observed:
        return UNKNOWN
    return OCCUPIED if voxel.log_odds > 0 else FREE


class Submap:
    """Keyframe-anchored sparse voxel grid; voxel data lives in the submap frame."""

    def __init__(self, submap_id: int, keyframe_id: int, anchor_pose: Pose, voxel_size: float):
        self.id = submap_id
        self.keyframe_id = keyframe_id
        self.anchor_pose = anchor_pose
        self.voxel_size = voxel_size
        self.core = SubmapCore(voxel_size)
        self.frames_integrated = 0
        self.creation_position = np.array(anchor_pose.trans, dtype=np.float64)
        self._census = None  # seg_id -> (count, centroid_sum in submap frame)

    def voxel(self, x: int, y: int, z: int) -> Voxel | None:
        raw = self.core.get_voxel(x, y, z)
        if raw is None:
            return None
        return Voxel(*raw)

    def voxel_arrays(self):
        """(coords (N,3) int voxel indices, log_odds, seg, observed) over allocated voxels."""
        n = self.core.n_blocks
        if n == 0:
            return (np.zeros((0, 3), dtype=np.int64),) + tuple(
                np.zeros(0, dtype=d) for d in (np.float32, np.uint32, np.uint8)
            )
        keys = np.fromiter(self.core.block_index.keys(), dtype=np.int64, count=n)
        rows = np.fromiter(self.core.block_index.values(), dtype=np.int64, count=n)
        base = np.stack([(keys >> 42) & 0x1FFFFF, (keys >> 21) & 0x1FFFFF, keys & 0x1FFFFF], axis=1) - (1 << 20)
        coords = (base[:, None, :] * 8 + _LOCAL_OFFSETS[None, :, :]).reshape(-1, 3)
        lo = self.core.log_odds[rows].reshape(-1)
        seg = self.core.seg_ids[rows].reshape(-1)
        obs = self.core.observed[rows].reshape(-1)
        return coords, lo, seg, obs

    def occupied_census(self):
        """seg_id -> (voxel count, sum of voxel centers in the submap frame), occupied voxels only."""
        if self._census is None:
            coords, lo, seg, obs = self.voxel_arrays()
            occ = (obs != 0) & (lo > 0)
            census: dict[int, tuple[int, np.ndarray]] = {}
            if occ.any():
                centers = (coords[occ] + 0.5) * self.voxel_size
                ids = seg[occ]
                order = np.argsort(ids, kind="stable")
                ids_sorted = ids[order]
                centers_sorted = centers[order]
                uniq, starts = np.unique(ids_sorted, return_index=True)
                bounds = np.append(starts, len(ids_sorted))
                for i, sid in enumerate(uniq):
                    sl = slice(bounds[i], bounds[i + 1])
                    census[int(sid)] = (int(bounds[i + 1] - bounds[i]), centers_sorted[sl].sum(axis=0))
            self._census = census
        return self._census

    def mark_dirty(self):
        self._census = None

    def occupied_count(self) -> int:
        _, lo, _, obs = self.voxel_arrays()
        return int(((obs != 0) & (lo > 0)).sum())


_LOCAL_OFFSETS = np.stack(np.meshgrid(np.arange(8), np.arange(8), np.arange(8), indexing="ij"), axis=-1).reshape(-1, 3)


@dataclass
class MemoryReport:
    object_centric_bytes: int
    per_voxel_baseline_bytes: int
    ratio: float
    voxel_bytes: int = 0
    segment_feature_bytes: int = 0
    baseline_feature_bytes: int = 0
    occupied_voxels: int = 0
    n_segments: int = 0

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


class SubmapAtlas:
    """Ordered collection of submaps with exactly one active; single-writer."""

    def __init__(self, voxel_size: float, feature_dim: int = 64, policy: CreationPolicy | None = None):
        if voxel_size <= 0:
            raise ValueError("voxel_size must be positive")
        self.voxel_size = voxel_size
        self.policy = policy or CreationPolicy()
        self.submaps: list[Submap] = []
        self.active_submap_id = -1
        self.segments = SegmentTable(feature_dim)
        self.snapshot_version = 0
        self.lock = threading.Lock()
        self._next_submap_id = 0

    # -- submap lifecycle -------------------------------------------------

    def new_submap(self, keyframe_id: int, anchor_pose: Pose) -> Submap:
        sm = Submap(self._next_submap_id, keyframe_id, anchor_pose, self.voxel_size)
        self._next_submap_id += 1
        self.submaps.append(sm)
        self.active_submap_id = sm.id
        return sm

    @property
    def active_submap(self) -> Submap:
        if self.active_submap_id < 0:
            raise ValueError("atlas has no submaps yet")
        return self._by_id(self.active_submap_id)

    def _by_id(self, submap_id: int) -> Submap:
        for sm in self.submaps:
            if sm.id == submap_id:
                return sm
        raise KeyError(submap_id)

    def creation_due(self, sensor_position) -> bool:
        """Submap creation policy: frame count or travel distance, whichever first."""
        if self.active_submap_id < 0:
            return True
        sm = self.active_submap
        if sm.frames_integrated >= self.policy.max_frames_per_submap:
            return True
        dist = float(np.linalg.norm(np.asarray(sensor_position) - sm.creation_position))
        return dist >= self.policy.max_distance_per_submap

    # -- integration ------------------------------------------------------

    def integrate_depth(self, submap: Submap, pose: Pose, cam: CameraModel, depth, ids=None) -> IntegrationStats:
        """Integrate one depth frame (world-from-sensor pose) into the given submap."""
        d = validate_depth(depth, cam)
        if ids is not None:
            ids = np.asarray(ids)
            if ids.shape != d.shape:
                raise GeometryError("segment-ID image dimensions do not match depth")
            ids = np.ascontiguousarray(ids, dtype=np.uint32)
        t_sensor_in_submap = submap.anchor_pose.inverse().compose(pose)
        updated, allocated = submap.core.integrate(
            t_sensor_in_submap.trans,
            t_sensor_in_submap.rotation_matrix(),
            cam.fx,
            cam.fy,
            cam.cx,
            cam.cy,
            d,
            ids,
            L_OCC,
            L_FREE,
            LOG_ODDS_CLAMP,
        )
        submap.frames_integrated += 1
        submap.mark_dirty()
        self.snapshot_version += 1
        return IntegrationStats(updated, allocated)

    # -- queries ----------------------------------------------------------

    def raycast(self, origin, direction, max_range: float) -> Hit | None:
        direction = np.asarray(direction, dtype=np.float64)
        norm = float(np.linalg.norm(direction))
        if norm == 0:
            raise GeometryError("zero ray direction")
        if abs(norm - 1.0) > 1e-6:
            raise GeometryError("ray direction must be unit-norm")
        origin = np.asarray(origin, dtype=np.float64)
        best = None
        for sm in self.submaps:
            inv = sm.anchor_pose.inverse()
            o = inv.transform(origin)
            d = inv.rotation_matrix() @ direction
            hit = sm.core.raycast(o, d, max_range)
            if hit is not None and (best is None or hit[0] < best[0]):
                best = (hit[0], (hit[1], hit[2], hit[3]), hit[4], sm.id)
        if best is None:
            return None
        return Hit(distance=best[0], voxel_coords=best[1], segment_id=best[2], submap_id=best[3])

    def render_segment_masks(self, pose: Pose, cam: CameraModel, max_range: float | None = None) -> "RenderedSegments":
        """Per-pixel raycast render from the given pose; nearest submap hit wins."""
        max_range = cam.depth_max if max_range is None else max_range
        h, w = cam.height, cam.width
        depth = np.full((h, w), np.inf, dtype=np.float32)
        seg = np.zeros((h, w), dtype=np.uint32)
        sub = np.full((h, w), -1, dtype=np.int32)
        for sm in self.submaps:
            t = sm.anchor_pose.inverse().compose(pose)
            sm.core.render(
                t.trans, t.rotation_matrix(), cam.fx, cam.fy, cam.cx, cam.cy,
                w, h, max_range, depth, seg, sub, sm.id,
            )
        return RenderedSegments(depth=depth, seg=seg, submap=sub)

    def classify_world_points(self, points) -> np.ndarray:
        """Combined tri-state over all submaps: occupied > free > unknown (0/1/2 codes)."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        out = np.zeros(len(pts), dtype=np.int8)
        for sm in self.submaps:
            inv = sm.anchor_pose.inverse()
            states = sm.core.classify_points(inv.transform(pts))
            np.maximum(out, states, out=out)
        return out

    # -- anchors ----------------------------------------------------------

    def apply_anchor_corrections(self, corrections: dict[int, Pose]) -> CorrectionStats:
        updated = 0
        known = {sm.keyframe_id for sm in self.submaps}
        for sm in self.submaps:
            if sm.keyframe_id in corrections:
                sm.anchor_pose = corrections[sm.keyframe_id]
                updated += 1
        ignored = len([k for k in corrections if k not in known])
        self.snapshot_version += 1
        return CorrectionStats(updated=updated, ignored=ignored)

    # -- segment support --------------------------------------------------

    def segment_voxel_stats(self, segment_id: int):
        """(count, world-frame centroid sum) of occupied voxels carrying segment_id."""
        count = 0
        world_sum = np.zeros(3)
        for sm in self.submaps:
            census = sm.occupied_census()
            if segment_id in census:
                c, s = census[segment_id]
                count += c
                # anchor applies to the summed centers: R*sum + c*t
                world_sum += sm.anchor_pose.rotation_matrix() @ s + c * sm.anchor_pose.trans
        return count, world_sum

    def refresh_segment_voxel_counts(self):
        """Sync SegmentRecord voxel_count/centroid_sum with a full census scan."""
        totals: dict[int, tuple[int, np.ndarray]] = {}
        for sm in self.submaps:
            for sid, (c, s) in sm.occupied_census().items():
                prev = totals.get(sid)
                if prev is None:
                    totals[sid] = (c, s.copy())
                else:
                    totals[sid] = (prev[0] + c, prev[1] + s)
        for sid, rec in self.segments.records.items():
            c, s = totals.get(sid, (0, np.zeros(3)))
            rec.voxel_count = c
            rec.centroid_sum = s

    # -- memory accounting ------------------------------------------------

    def memory_report(self, feature_dim: int) -> MemoryReport:
        n_blocks = sum(sm.core.n_blocks for sm in self.submaps)
        voxel_bytes = n_blocks * (BLOCK_VOL * VOXEL_BYTES + BLOCK_KEY_BYTES)
        occupied = sum(sm.occupied_count() for sm in self.submaps)
        n_segments = len(self.segments)
        seg_feature_bytes = n_segments * (feature_dim * 4 + SEGMENT_RECORD_OVERHEAD)
        baseline_feature_bytes = occupied * feature_dim * 4
        oc = voxel_bytes + seg_feature_bytes
        baseline = voxel_bytes + baseline_feature_bytes
        ratio = 1.0 if occupied == 0 else oc / baseline
        return MemoryReport(
            object_centric_bytes=oc,
            per_voxel_baseline_bytes=baseline,
            ratio=ratio,
            voxel_bytes=voxel_bytes,
            segment_feature_bytes=seg_feature_bytes,
            baseline_feature_bytes=baseline_feature_bytes,
            occupied_voxels=occupied,
            n_segments=n_segments,
        )

    # -- snapshots --------------------------------------------------------

    def snapshot(self) -> "SubmapAtlas":
        """Consistent read-only copy; the writer holds self.lock around mutations."""
        with self.lock:
            dup = SubmapAtlas(self.voxel_size, self.segments.dimension, self.policy)
            dup.active_submap_id = self.active_submap_id
            dup._next_submap_id = self._next_submap_id
            dup.snapshot_version = self.snapshot_version
            dup.segments = self.segments.copy()
            for sm in self.submaps:
                s = Submap.__new__(Submap)
                s.id = sm.id
                s.keyframe_id = sm.keyframe_id
                s.anchor_pose = Pose(sm.anchor_pose.quat, sm.anchor_pose.trans)
                s.voxel_size = sm.voxel_size
                s.core = sm.core.copy()
                s.frames_integrated = sm.frames_integrated
                s.creation_position = sm.creation_position.copy()
                s._census = sm._census
                dup.submaps.append(s)
            return dup


@dataclass
class RenderedSegments:
    """Per-pixel rendered z-depth (inf = miss), segment IDs, and source submap (-1 = miss)."""

    depth: np.ndarray
    seg: np.ndarray
    submap: np.ndarray

    @property
    def hit_mask(self) -> np.ndarray:
        return np.isfinite(self.depth)

    def masks(self, include_unsegmented: bool = False):
        """Disjoint binary masks grouped by hit segment ID."""
        out = {}
        hits = self.hit_mask
        for sid in np.unique(self.seg[hits]):
            if sid == 0 and not include_unsegmented:
                continue
            out[int(sid)] = hits & (self.seg == sid)
        return out


# -- persistence ----------------------------------------------------------
# Little-endian: magic "SKMP", version u32, voxel_size f32, submap count u32;
# per submap: id u64, keyframe u64, anchor 7xf64 (qw qx qy qz tx ty tz),
# block count u32, blocks as (3xi32 key, 512 x (f32 log_odds, u32 seg, u8 obs));
# then the segment-record section.

_VOXEL_DTYPE = np.dtype({"names": ["log_odds", "seg", "obs"], "formats": ["<f4", "<u4", "u1"], "itemsize": 9})


def save_atlas(atlas: SubmapAtlas, f):
    close = False
    if isinstance(f, (str, bytes)) or hasattr(f, "__fspath__"):
        f = open(f, "wb")
        close = True
    try:
        f.write(MAP_MAGIC)
        f.write(struct.pack("<If", MAP_VERSION, atlas.voxel_size))
        f.write(struct.pack("<I", len(atlas.submaps)))
        for sm in atlas.submaps:
            f.write(struct.pack("<QQ", sm.id, sm.keyframe_id))
            f.write(sm.anchor_pose.to_array().astype("<f8").tobytes())
            keys = sorted(sm.core.block_index)
            f.write(struct.pack("<I", len(keys)))
            for key in keys:
                bx, by, bz = unpack_key(key)
                f.write(struct.pack("<iii", bx, by, bz))
                row = sm.core.block_index[key]
                rec = np.zeros(BLOCK_VOL, dtype=_VOXEL_DTYPE)
                rec["log_odds"] = sm.core.log_odds[row]
                rec["seg"] = sm.core.seg_ids[row]
                rec["obs"] = sm.core.observed[row]
                f.write(rec.tobytes())
        write_segment_section(f, atlas.segments)
    finally:
        if close:
            f.close()


def load_atlas(f) -> SubmapAtlas:
    close = False
    if isinstance(f, (str, bytes)) or hasattr(f, "__fspath__"):
        f = open(f, "rb")
        close = True
    try:
        magic = f.read(4)
        if magic != MAP_MAGIC:
            raise MapFormatError(f"bad magic {magic!r}")
        header = f.read(12)
        if len(header) < 12:
            raise MapFormatError("truncated header")
        version, voxel_size, n_submaps = struct.unpack("<IfI", header)
        if version != MAP_VERSION:
            raise MapFormatError(f"unsupported map version {version}")
        atlas = SubmapAtlas(float(voxel_size))
        for _ in range(n_submaps):
            head = f.read(16 + 56 + 4)
            if len(head) < 76:
                raise MapFormatError("truncated submap header")
            sid, kf = struct.unpack("<QQ", head[:16])
            anchor = Pose.from_array(np.frombuffer(head[16:72], dtype="<f8"))
            (n_blocks,) = struct.unpack("<I", head[72:76])
            sm = Submap(int(sid), int(kf), anchor, float(voxel_size))
            for _b in range(n_blocks):
                raw = f.read(12 + BLOCK_VOL * 9)
                if len(raw) < 12 + BLOCK_VOL * 9:
                    raise MapFormatError("truncated block data")
                bx, by, bz = struct.unpack("<iii", raw[:12])
                rec = np.frombuffer(raw[12:], dtype=_VOXEL_DTYPE)
                row = sm.core.ensure_block(bx, by, bz)
                sm.core.log_odds[row] = rec["log_odds"]
                sm.core.seg_ids[row] = rec["seg"]
                sm.core.observed[row] = rec["obs"]
            atlas.submaps.append(sm)
        atlas.segments = read_segment_section(f)
        if atlas.submaps:
            atlas.active_submap_id = atlas.submaps[-1].id
            atlas._next_submap_id = max(sm.id for sm in atlas.submaps) + 1
        return atlas
    except struct.error as exc:
        raise MapFormatError(str(exc)) from exc
    finally:
        if close:
            f.close()
