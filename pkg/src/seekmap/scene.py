"""Deterministic synthetic environments: analytic ray-primitive sensor rendering,
ground-truth surface sampling, and scene (de)serialization."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from seekmap.encoding import ConceptVocabulary
from seekmap.geometry import CameraModel, Pose


@dataclass
class ScenePart:
    label: str
    shape: str  # "box" | "sphere"
    position: np.ndarray  # world, meters
    size: np.ndarray  # box: full extents (3,); sphere: (radius,)
    yaw: float = 0.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.size = np.atleast_1d(np.asarray(self.size, dtype=np.float64))
        if self.shape not in ("box", "sphere"):
            raise ValueError(f"unknown shape {self.shape}")


@dataclass
class SceneObject:
    label: str
    shape: str
    position: np.ndarray
    size: np.ndarray
    yaw: float = 0.0
    parts: list = field(default_factory=list)  # optional finer-grained ScenePart pieces

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.size = np.atleast_1d(np.asarray(self.size, dtype=np.float64))

    def primitives(self):
        if self.parts:
            return list(self.parts)
        return [ScenePart(self.label, self.shape, self.position, self.size, self.yaw)]


@dataclass
class Room:
    label: str
    box_min: np.ndarray
    box_max: np.ndarray

    def __post_init__(self):
        self.box_min = np.asarray(self.box_min, dtype=np.float64)
        self.box_max = np.asarray(self.box_max, dtype=np.float64)

    def contains(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return np.all((p >= self.box_min) & (p <= self.box_max), axis=-1)


@dataclass
class SceneDescription:
    bounds_min: np.ndarray
    bounds_max: np.ndarray
    objects: list
    rooms: list = field(default_factory=list)
    start_position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    start_yaw: float = 0.0
    vocabulary: ConceptVocabulary | None = None

    def __post_init__(self):
        self.bounds_min = np.asarray(self.bounds_min, dtype=np.float64)
        self.bounds_max = np.asarray(self.bounds_max, dtype=np.float64)
        self.start_position = np.asarray(self.start_position, dtype=np.float64)

    # flattened primitive lists, cached
    def primitives(self):
        prims = []
        for idx, obj in enumerate(self.objects):
            for part in obj.primitives():
                prims.append((idx, part))
        return prims

    def label_names(self) -> list[str]:
        names = []
        for _, part in self.primitives():
            if part.label not in names:
                names.append(part.label)
        return names

    def room(self, label: str) -> Room:
        for r in self.rooms:
            if r.label == label:
                return r
        raise KeyError(label)

    # -- JSON --------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "bounds": {"min": self.bounds_min.tolist(), "max": self.bounds_max.tolist()},
            "objects": [
                {
                    "label": o.label,
                    "shape": o.shape,
                    "position": o.position.tolist(),
                    "size": o.size.tolist(),
                    "yaw": o.yaw,
                    "parts": [
                        {
                            "label": p.label,
                            "shape": p.shape,
                            "position": p.position.tolist(),
                            "size": p.size.tolist(),
                            "yaw": p.yaw,
                        }
                        for p in o.parts
                    ],
                }
                for o in self.objects
            ],
            "rooms": [{"label": r.label, "min": r.box_min.tolist(), "max": r.box_max.tolist()} for r in self.rooms],
            "start": {"position": self.start_position.tolist(), "yaw": self.start_yaw},
            "vocabulary": self.vocabulary.to_dict() if self.vocabulary else None,
        }

    @staticmethod
    def from_dict(data: dict) -> "SceneDescription":
        objects = []
        for o in data["objects"]:
            parts = [ScenePart(p["label"], p["shape"], p["position"], p["size"], p.get("yaw", 0.0)) for p in o.get("parts", [])]
            objects.append(SceneObject(o["label"], o["shape"], o["position"], o["size"], o.get("yaw", 0.0), parts))
        rooms = [Room(r["label"], r["min"], r["max"]) for r in data.get("rooms", [])]
        vocab = ConceptVocabulary.from_dict(data["vocabulary"]) if data.get("vocabulary") else None
        start = data.get("start", {})
        return SceneDescription(
            bounds_min=data["bounds"]["min"],
            bounds_max=data["bounds"]["max"],
            objects=objects,
            rooms=rooms,
            start_position=start.get("position", [0, 0, 0]),
            start_yaw=start.get("yaw", 0.0),
            vocabulary=vocab,
        )

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=1)

    @staticmethod
    def load(path) -> "SceneDescription":
        with open(path) as f:
            return SceneDescription.from_dict(json.load(f))


# -- ray-primitive intersection (vectorized over rays) ----------------------

def _ray_sphere(origins, dirs, center, radius):
    oc = origins - center
    b = np.einsum("ij,ij->i", oc, dirs)
    c = np.einsum("ij,ij->i", oc, oc) - radius * radius
    disc = b * b - c
    t = np.full(len(dirs), np.inf)
    ok = disc >= 0
    sq = np.sqrt(np.maximum(disc, 0))
    t0 = -b - sq
    t1 = -b + sq
    # nearest positive root
    cand = np.where(t0 > 1e-9, t0, np.where(t1 > 1e-9, t1, np.inf))
    t[ok] = cand[ok]
    t[~ok] = np.inf
    return t


def _ray_box(origins, dirs, center, extents, yaw):
    if yaw != 0.0:
        c, s = math.cos(-yaw), math.sin(-yaw)
        rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
        o = (origins - center) @ rot.T
        d = dirs @ rot.T
    else:
        o = origins - center
        d = dirs
    half = extents / 2
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (-half - o) * inv
        t2 = (half - o) * inv
    tmin = np.nanmax(np.minimum(t1, t2), axis=1)
    tmax = np.nanmin(np.maximum(t1, t2), axis=1)
    # parallel rays outside the slab never hit
    parallel_out = ((d == 0) & (np.abs(o) > half)).any(axis=1)
    hit = (tmax >= np.maximum(tmin, 0)) & ~parallel_out
    t = np.where(tmin > 1e-9, tmin, tmax)  # inside the box: exit distance
    return np.where(hit & (t > 1e-9), t, np.inf)


def primitive_raycast(part: ScenePart, origins, dirs):
    if part.shape == "sphere":
        return _ray_sphere(origins, dirs, part.position, float(part.size[0]))
    return _ray_box(origins, dirs, part.position, part.size, part.yaw)


@dataclass
class SensorFrame:
    depth: np.ndarray  # (h, w) float32, NaN = invalid
    instances: np.ndarray  # (h, w) int32, -1 = background
    parts: np.ndarray  # (h, w) int32 primitive index, -1 = background
    labels: np.ndarray  # (h, w) int32 index into scene.label_names(), -1 = background


def render_sensor(scene: SceneDescription, camera_pose: Pose, cam: CameraModel) -> SensorFrame:
    """Analytic per-pixel ray casting; nearest primitive wins; out-of-range invalid."""
    dirs_cam = cam.ray_directions().reshape(-1, 3)
    norms = np.linalg.norm(dirs_cam, axis=1, keepdims=True)
    unit_cam = dirs_cam / norms
    r = camera_pose.rotation_matrix()
    dirs_w = unit_cam @ r.T
    origins = np.broadcast_to(camera_pose.trans, dirs_w.shape)
    n = len(dirs_w)
    best_t = np.full(n, np.inf)
    best_prim = np.full(n, -1, dtype=np.int32)
    label_names = scene.label_names()
    prims = scene.primitives()
    for pi, (_, part) in enumerate(prims):
        t = primitive_raycast(part, origins, dirs_w)
        closer = t < best_t
        best_t[closer] = t[closer]
        best_prim[closer] = pi
    # z-depth = euclidean distance along unit ray / ray norm (per-pixel)
    zdepth = best_t / norms[:, 0]
    valid = np.isfinite(zdepth) & (zdepth >= cam.depth_min) & (zdepth <= cam.depth_max)
    depth = np.where(valid, zdepth, np.nan).astype(np.float32)
    inst = np.full(n, -1, dtype=np.int32)
    labels = np.full(n, -1, dtype=np.int32)
    pidx = np.full(n, -1, dtype=np.int32)
    hit = valid & (best_prim >= 0)
    obj_of_prim = np.array([obj_idx for obj_idx, _ in prims], dtype=np.int32) if prims else np.zeros(0, np.int32)
    label_of_prim = np.array([label_names.index(part.label) for _, part in prims], dtype=np.int32) if prims else np.zeros(0, np.int32)
    inst[hit] = obj_of_prim[best_prim[hit]]
    labels[hit] = label_of_prim[best_prim[hit]]
    pidx[hit] = best_prim[hit]
    shape = (cam.height, cam.width)
    return SensorFrame(
        depth=depth.reshape(shape),
        instances=inst.reshape(shape),
        parts=pidx.reshape(shape),
        labels=labels.reshape(shape),
    )


# -- ground truth -----------------------------------------------------------

def surface_samples(part: ScenePart, spacing: float) -> np.ndarray:
    """Roughly uniform point samples on the primitive surface."""
    if part.shape == "sphere":
        r = float(part.size[0])
        n = max(16, int(4 * math.pi * r * r / (spacing * spacing)))
        i = np.arange(n)
        phi = math.pi * (3 - math.sqrt(5)) * i
        z = 1 - 2 * (i + 0.5) / n
        rho = np.sqrt(1 - z * z)
        pts = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1) * r
        return pts + part.position
    half = part.size / 2
    samples = []
    for axis in range(3):
        u_axis, v_axis = [a for a in range(3) if a != axis]
        nu = max(2, int(part.size[u_axis] / spacing) + 1)
        nv = max(2, int(part.size[v_axis] / spacing) + 1)
        us = np.linspace(-half[u_axis], half[u_axis], nu)
        vs = np.linspace(-half[v_axis], half[v_axis], nv)
        uu, vv = np.meshgrid(us, vs)
        for sign in (-1, 1):
            face = np.zeros((uu.size, 3))
            face[:, u_axis] = uu.ravel()
            face[:, v_axis] = vv.ravel()
            face[:, axis] = sign * half[axis]
            samples.append(face)
    pts = np.concatenate(samples)
    if part.yaw != 0.0:
        c, s = math.cos(part.yaw), math.sin(part.yaw)
        rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
        pts = pts @ rot.T
    return pts + part.position


def scene_surface_samples(scene: SceneDescription, spacing: float = 0.03, label: str | None = None, room: str | None = None) -> np.ndarray:
    """GT surface samples, optionally restricted to one object label or one room box."""
    pts = []
    for _, part in scene.primitives():
        if label is not None and part.label != label:
            continue
        pts.append(surface_samples(part, spacing))
    if not pts:
        return np.zeros((0, 3))
    all_pts = np.concatenate(pts)
    if room is not None:
        all_pts = all_pts[scene.room(room).contains(all_pts)]
    return all_pts


def point_in_primitive(part: ScenePart, points) -> np.ndarray:
    p = np.asarray(points, dtype=np.float64)
    if part.shape == "sphere":
        return np.linalg.norm(p - part.position, axis=-1) <= float(part.size[0])
    d = p - part.position
    if part.yaw != 0.0:
        c, s = math.cos(-part.yaw), math.sin(-part.yaw)
        rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
        d = d @ rot.T
    return np.all(np.abs(d) <= part.size / 2, axis=-1)


def scene_free_voxel_count(scene: SceneDescription, voxel_size: float) -> int:
    """Voxels whose centers lie inside the bounds and in no primitive (coverage denominator)."""
    lo = scene.bounds_min
    hi = scene.bounds_max
    axes = [np.arange(lo[a] + voxel_size / 2, hi[a], voxel_size) for a in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    inside = np.zeros(len(grid), dtype=bool)
    for _, part in scene.primitives():
        inside |= point_in_primitive(part, grid)
    return int((~inside).sum())


def gt_voxel_labels(scene: SceneDescription, voxel_size: float, spacing: float | None = None) -> dict:
    """World-lattice voxel -> class label over primitive surfaces (analytic GT)."""
    spacing = spacing or voxel_size / 2
    labels: dict[tuple, str] = {}
    for _, part in scene.primitives():
        pts = surface_samples(part, spacing)
        idx = np.floor(pts / voxel_size).astype(np.int64)
        for v in map(tuple, idx):
            labels[v] = part.label
    return labels
