"""Semantic-guided next-best-view exploration: frontiers, segment cubes with 3D
NMS, information gain, utility weighting, goal selection, and A* path planning."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from seekmap.geometry import CameraModel, Pose, camera_pose
from seekmap.query import activation
from seekmap.segments import NoCentroidError, centroid

CUBE_EDGE = 1.0  # meters; the sampling cube around matched segment centroids
FRONTIER_SAMPLE_RADIUS = 1.5


class ExplorationStalled(RuntimeError):
    """No acceptable or reachable candidate view; the mission layer decides termination."""


@dataclass
class ExplorerConfig:
    n_c: int = 20
    beta: float = 0.6
    d_max: float = 4.0
    robot_radius: float = 0.2
    v_max: float = 1.0
    yaw_rate: float = 1.5
    yaw_samples: int = 8
    use_cubes: bool = True  # disabled (with weighting) for the unweighted baseline
    use_weighting: bool = True

    def __post_init__(self):
        if self.n_c < 1:
            raise ValueError("n_c must be >= 1")
        if not 0 < self.beta < 1:
            raise ValueError("beta must be in (0, 1)")


@dataclass
class SegmentCube:
    segment_id: int
    center: np.ndarray
    similarity: float
    half_extent: float = CUBE_EDGE / 2

    def contains(self, point) -> bool:
        return bool(np.all(np.abs(np.asarray(point) - self.center) <= self.half_extent))


@dataclass
class CandidateView:
    pose: Pose
    inside_cube: int | None
    gain: int
    travel_time: float | None = None
    weight: float = 0.0
    utility: float = 0.0
    index: int = 0


_BIAS = 1 << 20
_MASK = (1 << 21) - 1


def _pack(ix, iy, iz):
    return (((ix + _BIAS) & _MASK) << 42) | (((iy + _BIAS) & _MASK) << 21) | ((iz + _BIAS) & _MASK)


class WorldIndex:
    """Combined tri-state world-lattice view of an atlas snapshot.

    occupied-in-any-submap wins over free; unobserved anywhere = unknown.
    """

    def __init__(self, atlas):
        self.voxel_size = atlas.voxel_size
        free_keys = []
        occ_keys = []
        for sm in atlas.submaps:
            coords, lo, seg, obs = sm.voxel_arrays()
            observed = obs != 0
            if not observed.any():
                continue
            centers = (coords[observed] + 0.5) * self.voxel_size
            world = sm.anchor_pose.transform(centers)
            idx = np.floor(world / self.voxel_size).astype(np.int64)
            keys = ((idx[:, 0] + _BIAS) << 42) | ((idx[:, 1] + _BIAS) << 21) | (idx[:, 2] + _BIAS)
            occ = lo[observed] > 0
            occ_keys.append(keys[occ])
            free_keys.append(keys[~occ])
        occ_arr = np.unique(np.concatenate(occ_keys)) if occ_keys else np.zeros(0, dtype=np.int64)
        free_arr = np.unique(np.concatenate(free_keys)) if free_keys else np.zeros(0, dtype=np.int64)
        # occupied in any submap wins
        self.occupied = occ_arr
        self.free = free_arr[~_member(free_arr, occ_arr)]
        self._free_set = None

    @property
    def free_set(self) -> set:
        if self._free_set is None:
            self._free_set = set(int(k) for k in self.free)
        return self._free_set

    def keys_of(self, points) -> np.ndarray:
        idx = np.floor(np.asarray(points, dtype=np.float64) / self.voxel_size).astype(np.int64)
        return ((idx[..., 0] + _BIAS) << 42) | ((idx[..., 1] + _BIAS) << 21) | (idx[..., 2] + _BIAS)

    def states_of_keys(self, keys) -> np.ndarray:
        """0 unknown, 1 free, 2 occupied."""
        out = np.zeros(keys.shape, dtype=np.int8)
        out[_member(keys, self.free)] = 1
        out[_member(keys, self.occupied)] = 2
        return out

    def is_free_ball(self, point, radius: float) -> bool:
        """True iff every voxel whose center lies in the ball is known-free."""
        vs = self.voxel_size
        r_vox = int(math.ceil(radius / vs))
        center = np.asarray(point, dtype=np.float64)
        base = np.floor(center / vs).astype(np.int64)
        rng = np.arange(-r_vox, r_vox + 1)
        offs = np.stack(np.meshgrid(rng, rng, rng, indexing="ij"), axis=-1).reshape(-1, 3)
        cells = base + offs
        centers = (cells + 0.5) * vs
        within = np.linalg.norm(centers - center, axis=1) <= radius
        cells = cells[within]
        if len(cells) == 0:
            cells = base[None, :]
        keys = ((cells[:, 0] + _BIAS) << 42) | ((cells[:, 1] + _BIAS) << 21) | (cells[:, 2] + _BIAS)
        return bool(_member(keys, self.free).all())


def _member(keys, sorted_arr) -> np.ndarray:
    if len(sorted_arr) == 0:
        return np.zeros(np.shape(keys), dtype=bool)
    pos = np.searchsorted(sorted_arr, keys)
    pos = np.clip(pos, 0, len(sorted_arr) - 1)
    return sorted_arr[pos] == keys


_FACE_OFFSETS = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=np.int64)


def detect_frontiers(world: WorldIndex) -> np.ndarray:
    """(N, 3) world voxel indices of free voxels with at least one unknown 6-neighbor."""
    free = world.free
    if len(free) == 0:
        return np.zeros((0, 3), dtype=np.int64)
    idx = np.stack([(free >> 42) & _MASK, (free >> 21) & _MASK, free & _MASK], axis=1) - _BIAS
    frontier = np.zeros(len(free), dtype=bool)
    for off in _FACE_OFFSETS:
        nb = idx + off
        keys = ((nb[:, 0] + _BIAS) << 42) | ((nb[:, 1] + _BIAS) << 21) | (nb[:, 2] + _BIAS)
        unknown = ~_member(keys, world.free) & ~_member(keys, world.occupied)
        frontier |= unknown
    return idx[frontier]


def matched_segment_cubes(atlas, query, cfg: ExplorerConfig) -> list[SegmentCube]:
    """Cubes for all segments with similarity >= beta, pruned by center-distance NMS."""
    act = activation(atlas, query)
    cubes = []
    for sid, sim in act.entries.items():
        if sim < cfg.beta:
            continue
        rec = atlas.segments.get(sid)
        try:
            c = centroid(rec, atlas)
        except NoCentroidError:
            continue
        cubes.append(SegmentCube(segment_id=sid, center=c, similarity=sim))
    cubes.sort(key=lambda c: (-c.similarity, c.segment_id))
    kept: list[SegmentCube] = []
    for cube in cubes:
        if all(np.linalg.norm(cube.center - k.center) >= CUBE_EDGE for k in kept):
            kept.append(cube)
    return kept


def information_gain(world: WorldIndex, pose: Pose, cam: CameraModel, d_max: float) -> int:
    """Distinct unknown voxels intersected by subsampled (32x24) per-pixel rays,
    marching at half-voxel steps up to the first occupied voxel or d_max."""
    sub = CameraModel(32, 24, cam.fx * 32 / cam.width, cam.fy * 24 / cam.height,
                      cam.cx * 32 / cam.width, cam.cy * 24 / cam.height,
                      cam.depth_min, cam.depth_max)
    dirs = sub.ray_directions().reshape(-1, 3)
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    dirs_w = dirs @ pose.rotation_matrix().T
    step = world.voxel_size / 2
    ts = np.arange(step / 2, d_max, step)
    points = pose.trans[None, None, :] + dirs_w[:, None, :] * ts[None, :, None]
    keys = world.keys_of(points)
    # consecutive half-voxel samples revisit voxels; classify each key once
    uniq, inv = np.unique(keys, return_inverse=True)
    states = world.states_of_keys(uniq)[inv].reshape(keys.shape)
    # mask out samples at or beyond the first occupied hit per ray
    occupied = states == 2
    blocked = np.cumsum(occupied, axis=1) > 0
    unknown = (states == 0) & ~blocked
    if not unknown.any():
        return 0
    return int(len(np.unique(keys[unknown])))


def sample_candidates(world: WorldIndex, cubes, frontiers, cfg: ExplorerConfig, cam: CameraModel, rng) -> list[CandidateView]:
    """Candidate views inside segment cubes first (budget 3*n_c attempts), remaining
    slots near frontiers (budget 10*n_c); yaw maximizes gain over discrete samples."""
    candidates: list[CandidateView] = []

    def try_accept(pos, cube_id):
        if not world.is_free_ball(pos, cfg.robot_radius):
            return False
        best_gain, best_yaw = -1, 0.0
        for i in range(cfg.yaw_samples):
            yaw = 2 * math.pi * i / cfg.yaw_samples
            g = information_gain(world, camera_pose(pos, yaw), cam, cfg.d_max)
            if g > best_gain:
                best_gain, best_yaw = g, yaw
        candidates.append(
            CandidateView(
                pose=Pose.from_yaw(best_yaw, pos),
                inside_cube=cube_id,
                gain=best_gain,
                index=len(candidates),
            )
        )
        return True

    if cfg.use_cubes and cubes:
        attempts = 0
        cube_i = 0
        while len(candidates) < cfg.n_c and attempts < 3 * cfg.n_c:
            cube = cubes[cube_i % len(cubes)]
            cube_i += 1
            attempts += 1
            pos = cube.center + rng.uniform(-cube.half_extent, cube.half_extent, size=3)
            try_accept(pos, cube.segment_id)

    if len(frontiers) > 0:
        attempts = 0
        while len(candidates) < cfg.n_c and attempts < 10 * cfg.n_c:
            attempts += 1
            fv = frontiers[int(rng.integers(len(frontiers)))]
            center = (fv + 0.5) * world.voxel_size
            offset = rng.normal(size=3)
            norm = np.linalg.norm(offset)
            if norm == 0:
                continue
            offset = offset / norm * FRONTIER_SAMPLE_RADIUS * rng.uniform() ** (1 / 3)
            pos = center + offset
            cube_id = None
            for cube in cubes:
                if cube.contains(pos):
                    cube_id = cube.segment_id
                    break
            try_accept(pos, cube_id if cfg.use_cubes else None)

    return candidates


def weight(candidate: CandidateView, cubes, query, beta: float) -> float:
    """Similarity weight: cube similarity when inside a matched cube and above beta,
    beta/2 otherwise (covers the zero-feature outside-all-cubes convention)."""
    pos = candidate.pose.trans
    best = None
    for cube in cubes:
        if cube.contains(pos):
            if best is None or cube.similarity > best:
                best = cube.similarity
    if best is not None and best >= beta:
        return float(best)
    return beta / 2


def astar_path(world: WorldIndex, start, goal, max_expansions: int = 300000):
    """26-connected A* over known-free voxels; returns path length in meters or None."""
    vs = world.voxel_size
    start = tuple(int(x) for x in np.floor(np.asarray(start) / vs))
    goal = tuple(int(x) for x in np.floor(np.asarray(goal) / vs))
    free = world.free_set
    if _pack(*goal) not in free or _pack(*start) not in free:
        return None
    if start == goal:
        return 0.0

    def h(n):
        return math.dist(n, goal) * vs

    open_heap = [(h(start), 0.0, start)]
    g_cost = {start: 0.0}
    closed = set()
    expansions = 0
    while open_heap and expansions < max_expansions:
        _, g, node = heapq.heappop(open_heap)
        if node in closed:
            continue
        if node == goal:
            return g
        closed.add(node)
        expansions += 1
        x, y, z = node
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    if dx == dy == dz == 0:
                        continue
                    nb = (x + dx, y + dy, z + dz)
                    if _pack(*nb) not in free:
                        continue
                    ng = g + math.sqrt(dx * dx + dy * dy + dz * dz) * vs
                    if ng < g_cost.get(nb, math.inf):
                        g_cost[nb] = ng
                        heapq.heappush(open_heap, (ng + h(nb), ng, nb))
    return None


def straight_line_clear(world: WorldIndex, start, goal, radius: float) -> bool:
    start = np.asarray(start, dtype=np.float64)
    goal = np.asarray(goal, dtype=np.float64)
    dist = float(np.linalg.norm(goal - start))
    if dist == 0:
        return True
    n = max(2, int(dist / (world.voxel_size / 2)) + 1)
    for t in np.linspace(0, 1, n):
        if not world.is_free_ball(start + t * (goal - start), radius):
            return False
    return True


class PlanningGrid:
    """Free-space lattice coarsened for fast single-source distance queries.

    A coarse cell is traversable when it contains at least one known-free voxel
    and no occupied one; Dijkstra over the 26-connected cells then prices every
    candidate goal in a single pass."""

    def __init__(self, world: WorldIndex, cell_size: float = 0.2):
        self.coarse = max(1, int(round(cell_size / world.voxel_size)))
        self.cell = world.voxel_size * self.coarse

        def to_cell_keys(keys):
            if len(keys) == 0:
                return np.zeros(0, dtype=np.int64)
            ix = ((keys >> 42) - _BIAS) // self.coarse
            iy = (((keys >> 21) & _MASK) - _BIAS) // self.coarse
            iz = ((keys & _MASK) - _BIAS) // self.coarse
            return np.unique(((ix + _BIAS) << 42) | ((iy + _BIAS) << 21) | (iz + _BIAS))

        free_keys = np.setdiff1d(to_cell_keys(world.free), to_cell_keys(world.occupied), assume_unique=True)
        self.free = set(free_keys.tolist())

    _STEPS = [
        ((dx << 42) + (dy << 21) + dz, math.sqrt(dx * dx + dy * dy + dz * dz))
        for dx in (-1, 0, 1)
        for dy in (-1, 0, 1)
        for dz in (-1, 0, 1)
        if (dx, dy, dz) != (0, 0, 0)
    ]

    def _snap(self, point):
        c = np.floor(np.asarray(point) / self.cell).astype(np.int64)
        base = _pack(int(c[0]), int(c[1]), int(c[2]))
        if base in self.free:
            return base
        best = None
        for step, d in self._STEPS:
            nb = base + step
            if nb in self.free and (best is None or d < best[0]):
                best = (d, nb)
        return None if best is None else best[1]

    def distances_from(self, start) -> dict:
        """Dijkstra distances in meters from the cell containing start."""
        s = self._snap(start)
        if s is None:
            return {}
        dist = {s: 0.0}
        heap = [(0.0, s)]
        free = self.free
        cell = self.cell
        while heap:
            g, node = heapq.heappop(heap)
            if g > dist.get(node, math.inf):
                continue
            for step, d in self._STEPS:
                nb = node + step
                if nb not in free:
                    continue
                ng = g + d * cell
                if ng < dist.get(nb, math.inf):
                    dist[nb] = ng
                    heapq.heappush(heap, (ng, nb))
        return dist

    def lookup(self, dist: dict, point) -> float | None:
        cell = self._snap(point)
        if cell is None:
            return None
        return dist.get(cell)


def select_goal(candidates, world: WorldIndex, cfg: ExplorerConfig, current_pose: Pose, cubes, query) -> CandidateView:
    """Highest-utility candidate: utility = w * gain / travel_time; ties by shortest
    travel time then lowest candidate index."""
    if not candidates:
        raise ExplorationStalled("no candidates to select from")
    grid = PlanningGrid(world, cell_size=max(2 * cfg.robot_radius, world.voxel_size))
    dist = grid.distances_from(current_pose.trans)
    best = None
    for cand in candidates:
        path_len = grid.lookup(dist, cand.pose.trans)
        if path_len is None:
            continue
        dyaw = abs((cand.pose.yaw - current_pose.yaw + math.pi) % (2 * math.pi) - math.pi)
        cand.travel_time = max(path_len / cfg.v_max + dyaw / cfg.yaw_rate, 1e-3)
        if cfg.use_weighting:
            cand.weight = weight(cand, cubes, query, cfg.beta)
        else:
            cand.weight = 1.0
        cand.utility = cand.weight * cand.gain / cand.travel_time
        if best is None or (cand.utility, -cand.travel_time, -cand.index) > (best.utility, -best.travel_time, -best.index):
            best = cand
    if best is None:
        raise ExplorationStalled("no reachable candidate")
    return best
