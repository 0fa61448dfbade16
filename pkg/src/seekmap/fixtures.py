"""Built-in scenes and vocabularies used by the CLI, tests, and benchmarks."""

from __future__ import annotations

import numpy as np

from seekmap.encoding import ConceptVocabulary
from seekmap.scene import Room, SceneDescription, SceneObject, ScenePart

WALL_T = 0.2
DEFAULT_DIM = 64


def default_vocabulary(dimension: int = DEFAULT_DIM, seed: int = 7) -> ConceptVocabulary:
    terms = {
        name: None
        for name in (
            "wall", "floor", "ceiling", "bed", "table", "chair", "sofa", "lamp",
            "plant", "shelf", "box", "ball", "door", "bathroom", "crate", "barrel",
            "monitor", "cabinet", "pillow", "rug",
        )
    }
    # part-whole semantics via blends: parts stay similar to each other (group at
    # query time) while part terms still rank their own segment first
    terms.update(
        {
            "toilet": [("toilet_base", 0.5), ("bathroom", 0.5)],
            "sink": [("sink_base", 0.5), ("bathroom", 0.5)],
            "bathtub": [("bathtub_base", 0.5), ("bathroom", 0.5)],
            "car": [("car_base", 1.0)],
            "wheel": [("wheel_base", 0.25), ("car_base", 0.75)],
            "car_body": [("body_base", 0.25), ("car_base", 0.75)],
        }
    )
    return ConceptVocabulary(dimension, seed, terms)


def _room_shell(bounds_min, bounds_max, wall_label="wall"):
    """Floor, ceiling, and four boundary walls as box objects."""
    lo = np.asarray(bounds_min, dtype=np.float64)
    hi = np.asarray(bounds_max, dtype=np.float64)
    cx, cy = (lo[0] + hi[0]) / 2, (lo[1] + hi[1]) / 2
    sx, sy, sz = hi - lo
    cz = (lo[2] + hi[2]) / 2
    objs = [
        SceneObject("floor", "box", [cx, cy, lo[2] + WALL_T / 2], [sx, sy, WALL_T]),
        SceneObject("ceiling", "box", [cx, cy, hi[2] - WALL_T / 2], [sx, sy, WALL_T]),
        SceneObject(wall_label, "box", [lo[0] + WALL_T / 2, cy, cz], [WALL_T, sy, sz]),
        SceneObject(wall_label, "box", [hi[0] - WALL_T / 2, cy, cz], [WALL_T, sy, sz]),
        SceneObject(wall_label, "box", [cx, lo[1] + WALL_T / 2, cz], [sx, WALL_T, sz]),
        SceneObject(wall_label, "box", [cx, hi[1] - WALL_T / 2, cz], [sx, WALL_T, sz]),
    ]
    return objs


def standard_scene(n_objects: int = 20, dimension: int = DEFAULT_DIM) -> SceneDescription:
    """Closed single room with n_objects distinct items; the memory-claim fixture."""
    lo, hi = np.array([0.0, 0.0, 0.0]), np.array([6.0, 6.0, 2.5])
    objects = _room_shell(lo, hi)
    labels = ["bed", "table", "chair", "sofa", "lamp", "plant", "shelf", "box", "ball", "crate",
              "barrel", "monitor", "cabinet", "pillow", "rug", "door", "bathtub", "toilet", "sink", "car"]
    rng = np.random.default_rng(11)
    positions = []
    for i in range(n_objects):
        # deterministic ring placement, away from the start position
        ang = 2 * np.pi * i / n_objects
        radius = 1.6 + 0.6 * ((i % 3) / 2)
        pos = np.array([3.0 + radius * np.cos(ang), 3.0 + radius * np.sin(ang), 0.45 + 0.25 * (i % 2)])
        positions.append(pos)
        label = labels[i % len(labels)]
        if i % 2 == 0:
            objects.append(SceneObject(label, "box", pos, rng.uniform(0.3, 0.6, size=3)))
        else:
            objects.append(SceneObject(label, "sphere", pos, [rng.uniform(0.15, 0.3)]))
    # thin partition screens in the middle of the ring: sub-voxel thickness at
    # coarse resolutions, so refining the grid keeps resolving new surface
    objects.append(SceneObject("door", "box", [3.0, 3.0, 1.2], [0.04, 2.0, 1.8]))
    objects.append(SceneObject("door", "box", [3.0, 3.0, 1.2], [2.0, 0.04, 1.8]))
    return SceneDescription(
        bounds_min=lo,
        bounds_max=hi,
        objects=objects,
        start_position=[1.6, 3.0, 1.2],
        start_yaw=0.0,
        vocabulary=default_vocabulary(dimension),
    )


def multi_room_scene(dimension: int = DEFAULT_DIM) -> SceneDescription:
    """Three-room flat (living / bedroom / bathroom) for exploration missions.

    Target objects ("bed") and the bathroom region are not visible from the start.
    """
    lo, hi = np.array([0.0, 0.0, 0.0]), np.array([10.0, 6.0, 2.4])
    objects = _room_shell(lo, hi)
    cz = hi[2] / 2
    sz = hi[2]
    # interior wall at x=4 with a door gap y in [2.4, 3.6]
    objects.append(SceneObject("wall", "box", [4.0, 1.2, cz], [WALL_T, 2.4, sz]))
    objects.append(SceneObject("wall", "box", [4.0, 4.8, cz], [WALL_T, 2.4, sz]))
    # interior wall at x=7 with a door gap y in [0.8, 2.0]
    objects.append(SceneObject("bathroom_wall", "box", [7.0, 4.0, cz], [WALL_T, 4.0, sz]))
    objects.append(SceneObject("bathroom_wall", "box", [7.0, 0.3, cz], [WALL_T, 0.6, sz]))
    # living room furniture
    objects.append(SceneObject("sofa", "box", [1.2, 4.8, 0.4], [1.6, 0.7, 0.7]))
    objects.append(SceneObject("table", "box", [2.2, 2.8, 0.35], [1.0, 1.0, 0.7]))
    objects.append(SceneObject("plant", "sphere", [3.4, 0.9, 0.5], [0.3]))
    objects.append(SceneObject("lamp", "box", [0.8, 0.8, 0.7], [0.25, 0.25, 1.4]))
    # bedroom
    objects.append(SceneObject("bed", "box", [5.5, 4.6, 0.3], [2.0, 1.4, 0.6]))
    objects.append(SceneObject("chair", "box", [6.3, 1.0, 0.4], [0.5, 0.5, 0.8]))
    objects.append(SceneObject("shelf", "box", [4.6, 0.7, 0.8], [0.4, 1.0, 1.6]))
    # bathroom
    objects.append(SceneObject("toilet", "box", [9.3, 4.8, 0.3], [0.6, 0.6, 0.6]))
    objects.append(SceneObject("sink", "box", [9.4, 2.6, 0.5], [0.5, 0.7, 1.0]))
    objects.append(SceneObject("bathtub", "box", [8.1, 5.2, 0.3], [1.6, 0.8, 0.6]))
    rooms = [
        Room("living", [0, 0, 0], [4.0, 6.0, 2.4]),
        Room("bedroom", [4.0, 0, 0], [7.0, 6.0, 2.4]),
        Room("bathroom", [7.0, 0, 0], [10.0, 6.0, 2.4]),
    ]
    vocab = default_vocabulary(dimension)
    vocab.terms.setdefault("bathroom_wall", [("wall", 0.6), ("bathroom", 0.4)])
    return SceneDescription(
        bounds_min=lo,
        bounds_max=hi,
        objects=objects,
        rooms=rooms,
        start_position=[1.2, 2.0, 1.2],
        start_yaw=0.0,
        vocabulary=vocab,
    )


def loop_scene(dimension: int = DEFAULT_DIM) -> SceneDescription:
    """Square room with a central pillar block; used for drift + loop-closure runs."""
    lo, hi = np.array([0.0, 0.0, 0.0]), np.array([8.0, 8.0, 2.4])
    objects = _room_shell(lo, hi)
    objects.append(SceneObject("cabinet", "box", [4.0, 4.0, 1.2], [1.6, 1.6, 2.4]))
    labels = ["table", "chair", "sofa", "lamp", "plant", "shelf", "box", "crate"]
    spots = [(1.2, 1.2), (6.8, 1.2), (6.8, 6.8), (1.2, 6.8), (4.0, 1.0), (7.0, 4.0), (4.0, 7.0), (1.0, 4.0)]
    for label, (x, y) in zip(labels, spots):
        objects.append(SceneObject(label, "box", [x, y, 0.4], [0.5, 0.5, 0.8]))
    return SceneDescription(
        bounds_min=lo,
        bounds_max=hi,
        objects=objects,
        start_position=[2.0, 2.0, 1.2],
        start_yaw=0.0,
        vocabulary=default_vocabulary(dimension),
    )


def two_part_object_scene(dimension: int = DEFAULT_DIM) -> SceneDescription:
    """A part-labeled 'car' (body + wheels) in a closed room; Fig-style oversegmentation fixture."""
    lo, hi = np.array([0.0, 0.0, 0.0]), np.array([5.0, 4.0, 2.4])
    objects = _room_shell(lo, hi)
    car = SceneObject(
        "car",
        "box",
        [3.4, 2.0, 0.85],
        [1.6, 0.9, 0.7],
        parts=[
            ScenePart("car_body", "box", [3.4, 2.0, 0.97], [1.6, 0.9, 0.55]),
            ScenePart("wheel", "sphere", [2.8, 1.6, 0.57], [0.22]),
            ScenePart("wheel", "sphere", [4.0, 1.6, 0.57], [0.22]),
            ScenePart("wheel", "sphere", [2.8, 2.4, 0.57], [0.22]),
            ScenePart("wheel", "sphere", [4.0, 2.4, 0.57], [0.22]),
        ],
    )
    objects.append(car)
    return SceneDescription(
        bounds_min=lo,
        bounds_max=hi,
        objects=objects,
        start_position=[1.0, 2.0, 1.0],
        start_yaw=0.0,
        vocabulary=default_vocabulary(dimension),
    )


BUILTIN_SCENES = {
    "standard": standard_scene,
    "multi_room": multi_room_scene,
    "loop": loop_scene,
    "two_part": two_part_object_scene,
}
