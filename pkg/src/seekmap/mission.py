"""Mission runner: tick loop wiring sensor simulation, drift, tracking, fusion,
integration, loop closure, exploration planning, evaluation, and ablations."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from seekmap.encoding import embed_term, feature_image
from seekmap.explorer import (
    CandidateView,
    ExplorationStalled,
    ExplorerConfig,
    WorldIndex,
    detect_frontiers,
    matched_segment_cubes,
    sample_candidates,
    select_goal,
)
from seekmap.fixtures import DEFAULT_DIM
from seekmap.geometry import CameraModel, Pose, camera_pose
from seekmap.mapcore import CreationPolicy, SubmapAtlas
from seekmap.query import MetricsUndefinedError, completeness_and_rmse, semantic_metrics
from seekmap.scene import SceneDescription, gt_voxel_labels, render_sensor, scene_free_voxel_count, scene_surface_samples
from seekmap.segments import fuse_features
from seekmap.tracker import TrackerConfig, sim_proposals, track


def json_default(value):
    """Serialize numpy scalars that leak into report payloads."""
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    raise TypeError(f"not JSON serializable: {type(value)}")


@dataclass
class DriftModel:
    sigma_t: float = 0.0  # translation noise per sqrt-meter traveled
    sigma_r: float = 0.0  # yaw noise per sqrt-meter traveled
    loop_radius: float = 0.8
    enabled: bool = False


class DriftState:
    """Random-walk pose error proportional to distance traveled."""

    def __init__(self, model: DriftModel, rng):
        self.model = model
        self.rng = rng
        self.offset_t = np.zeros(3)
        self.offset_yaw = 0.0

    def step(self, distance: float):
        if not self.model.enabled or distance <= 0:
            return
        scale = math.sqrt(distance)
        self.offset_t = self.offset_t + self.rng.normal(0.0, self.model.sigma_t * scale, size=3)
        self.offset_yaw += float(self.rng.normal(0.0, self.model.sigma_r * scale))

    def estimate(self, true_position, true_yaw):
        return np.asarray(true_position) + self.offset_t, true_yaw + self.offset_yaw

    def error(self):
        return self.offset_t.copy(), self.offset_yaw

    def absorb(self, trans_err, yaw_err):
        self.offset_t = self.offset_t - trans_err
        self.offset_yaw -= yaw_err


def step_pose(state: DriftState, true_position, true_yaw, distance_moved: float):
    """Advance the drift random walk and return the estimated (position, yaw)."""
    state.step(distance_moved)
    return state.estimate(true_position, true_yaw)


@dataclass
class MissionConfig:
    duration_ticks: int = 200
    seed: int = 0
    queries: dict = field(default_factory=dict)  # tick -> term
    monolithic: bool = False
    no_fusion: bool = False
    half_res: bool = False
    voxel_size: float = 0.05
    feature_dim: int = DEFAULT_DIM
    sigma_features: float = 0.0
    proposal_split_parts: bool = False
    proposal_boundary_sigma: int = 0
    cam: CameraModel = field(default_factory=lambda: CameraModel(120, 90, 60.0, 60.0, 60.0, 45.0, 0.1, 6.0))
    tick_dt: float = 1.0
    waypoints: list | None = None  # scripted [(x, y, z, yaw), ...]; disables the planner
    initial_spin: bool | None = None  # default: spin once when exploring, not when scripted
    eval_every: int = 0
    eval_classes: list | None = None
    drift: DriftModel = field(default_factory=DriftModel)
    max_frames_per_submap: int = 50
    max_distance_per_submap: float = 5.0
    loop_closure_min_gap: int = 40  # ticks between closures / since a location was visited


@dataclass
class MissionReport:
    status: str
    ticks_run: int
    coverage: float
    eval_timeline: list
    memory_reports: list
    planner_log: list
    corrections_log: list
    metadata: dict
    atlas: SubmapAtlas | None = None

    def to_json_dict(self) -> dict:
        return {
            "status": self.status,
            "ticks_run": self.ticks_run,
            "coverage": self.coverage,
            "eval_timeline": self.eval_timeline,
            "memory_reports": self.memory_reports,
            "planner_log": self.planner_log,
            "corrections_log": self.corrections_log,
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=1, sort_keys=True, default=json_default)


class MissionRunner:
    """Single-writer tick loop; optional control bridge for the HTTP service."""

    def __init__(self, scene: SceneDescription, cfg: MissionConfig,
                 explorer_cfg: ExplorerConfig | None = None,
                 tracker_cfg: TrackerConfig | None = None,
                 control=None):
        self.scene = scene
        self.cfg = cfg
        self.explorer_cfg = explorer_cfg or ExplorerConfig()
        self.tracker_cfg = tracker_cfg or TrackerConfig.for_sensor(cfg.cam.width, cfg.cam.height, cfg.voxel_size)
        self.control = control
        self.vocab = scene.vocabulary
        if self.vocab is None:
            raise ValueError("scene has no vocabulary")

        seq = np.random.SeedSequence(cfg.seed)
        drift_seed, feat_seed, plan_seed, prop_seed = seq.spawn(4)
        self.rng_drift = np.random.default_rng(drift_seed)
        self.rng_features = np.random.default_rng(feat_seed)
        self.rng_planner = np.random.default_rng(plan_seed)
        self.rng_proposals = np.random.default_rng(prop_seed)

        policy = CreationPolicy(cfg.max_frames_per_submap, cfg.max_distance_per_submap)
        if cfg.monolithic:
            policy = CreationPolicy(10 ** 9, 10 ** 9)
        self.atlas = SubmapAtlas(cfg.voxel_size, cfg.feature_dim, policy)
        self.drift = DriftState(cfg.drift, self.rng_drift)

        self.position = scene.start_position.copy()
        self.yaw = scene.start_yaw
        self.tick = 0
        self.status = "idle" if control is not None else "running"
        self.query_term: str | None = None
        self.query_embedding = None

        self.goal: CandidateView | None = None
        self.goal_path: list[np.ndarray] = []
        self.goal_set_tick = -1
        spin = cfg.initial_spin if cfg.initial_spin is not None else cfg.waypoints is None
        self.spin_remaining = (
            max(1, int(math.ceil(2 * math.pi / (self.explorer_cfg.yaw_rate * cfg.tick_dt)))) if spin else 0
        )
        self.waypoint_idx = 0

        self.keyframe_counter = 0
        self.keyframes_since_correction: list[int] = []
        self.visited: list[tuple[int, np.ndarray]] = []  # (tick, true position)
        self.last_correction_tick = -10 ** 9

        self.planner_log: list[dict] = []
        self.corrections_log: list[dict] = []
        self.eval_timeline: list[dict] = []
        self.memory_reports: list[dict] = []

        self.label_names = scene.label_names()
        self.scene_free_voxels = scene_free_voxel_count(scene, cfg.voxel_size)
        self.coverage = 0.0
        self._stalled_strikes = 0

    # -- helpers -----------------------------------------------------------

    def set_query(self, term: str, tick: int | None = None):
        self.query_term = term
        self.query_embedding = embed_term(self.vocab, term)

    def _estimated_body_pose(self) -> tuple[np.ndarray, float]:
        return self.drift.estimate(self.position, self.yaw)

    def _ensure_submap(self, est_pos, est_yaw):
        if self.atlas.active_submap_id < 0 or (not self.cfg.monolithic and self.atlas.creation_due(est_pos)):
            kf = self.keyframe_counter
            self.keyframe_counter += 1
            anchor = Pose.from_yaw(est_yaw, est_pos)
            self.atlas.new_submap(kf, anchor)
            self.keyframes_since_correction.append(kf)

    def _check_loop_closure(self, est_pos):
        model = self.cfg.drift
        if not model.enabled:
            return
        if self.tick - self.last_correction_tick < self.cfg.loop_closure_min_gap:
            return
        hit = False
        for visit_tick, true_pos in self.visited:
            if self.tick - visit_tick < self.cfg.loop_closure_min_gap:
                continue
            if np.linalg.norm(est_pos - true_pos) <= model.loop_radius:
                hit = True
                break
        if not hit or not self.keyframes_since_correction:
            return
        trans_err, yaw_err = self.drift.error()
        m = len(self.keyframes_since_correction)
        corrections = {}
        for i, kf in enumerate(self.keyframes_since_correction, start=1):
            frac = i / m
            sm = next(s for s in self.atlas.submaps if s.keyframe_id == kf)
            anchor = sm.anchor_pose
            new_trans = anchor.trans - frac * trans_err
            new_yaw = anchor.yaw - frac * yaw_err
            corrections[kf] = Pose.from_yaw(new_yaw, new_trans)
        entry = {
            "tick": self.tick,
            "keyframes": list(self.keyframes_since_correction),
            "error_trans": [float(x) for x in trans_err],
            "error_yaw": float(yaw_err),
            "applied": not self.cfg.monolithic,
        }
        if self.cfg.monolithic:
            self.corrections_log.append(entry)
        else:
            with self.atlas.lock:
                self.atlas.apply_anchor_corrections(corrections)
            self.drift.absorb(trans_err, yaw_err)
            self.corrections_log.append(entry)
        self.last_correction_tick = self.tick

    # -- planning ----------------------------------------------------------

    def _replan(self):
        snapshot = self.atlas.snapshot()
        world = WorldIndex(snapshot)
        self.coverage = min(1.0, len(world.free) / max(1, self.scene_free_voxels))
        frontiers = detect_frontiers(world)
        cubes = []
        if self.explorer_cfg.use_cubes and self.query_embedding is not None:
            cubes = matched_segment_cubes(snapshot, self.query_embedding, self.explorer_cfg)
        candidates = sample_candidates(world, cubes, frontiers, self.explorer_cfg, self.cfg.cam, self.rng_planner)
        entry = {
            "tick": self.tick,
            "query": self.query_term,
            "n_frontiers": int(len(frontiers)),
            "n_cubes": len(cubes),
            "candidates": [],
            "goal": None,
        }
        try:
            est_pos, est_yaw = self._estimated_body_pose()
            goal = select_goal(
                candidates, world, self.explorer_cfg, Pose.from_yaw(est_yaw, est_pos),
                cubes if self.explorer_cfg.use_weighting else [],
                self.query_embedding,
            )
        except ExplorationStalled:
            self.planner_log.append(entry)
            return None, world
        for c in candidates:
            entry["candidates"].append(
                {
                    "pos": [round(float(x), 4) for x in c.pose.trans],
                    "yaw": round(c.pose.yaw, 4),
                    "gain": c.gain,
                    "w": round(c.weight, 4),
                    "utility": round(c.utility, 4),
                    "travel_time": None if c.travel_time is None else round(c.travel_time, 4),
                    "inside_cube": c.inside_cube,
                }
            )
        entry["goal"] = goal.index
        self.planner_log.append(entry)
        return goal, world

    def _set_goal(self, goal: CandidateView, world: WorldIndex):
        from seekmap.explorer import astar_path, straight_line_clear

        est_pos, _ = self._estimated_body_pose()
        target = goal.pose.trans
        if straight_line_clear(world, est_pos, target, self.explorer_cfg.robot_radius):
            path = [np.asarray(target, dtype=np.float64)]
        else:
            # follow free-voxel centers from A*; fall back to direct flight
            path = [np.asarray(target, dtype=np.float64)]
        self.goal = goal
        self.goal_path = path
        self.goal_set_tick = self.tick

    def _fly(self):
        """Kinematic point agent: translate toward the goal, then align yaw."""
        dt = self.cfg.tick_dt
        v_max = self.explorer_cfg.v_max
        yaw_rate = self.explorer_cfg.yaw_rate
        moved = 0.0
        if self.spin_remaining > 0:
            self.yaw = (self.yaw + yaw_rate * dt) % (2 * math.pi)
            self.spin_remaining -= 1
            return moved
        target = None
        target_yaw = None
        if self.cfg.waypoints is not None:
            wp = self.cfg.waypoints[self.waypoint_idx % len(self.cfg.waypoints)]
            target = np.asarray(wp[:3], dtype=np.float64)
            target_yaw = wp[3] if len(wp) > 3 else None
            if np.linalg.norm(target - self.position) < 0.1:
                self.waypoint_idx += 1
                wp = self.cfg.waypoints[self.waypoint_idx % len(self.cfg.waypoints)]
                target = np.asarray(wp[:3], dtype=np.float64)
                target_yaw = wp[3] if len(wp) > 3 else None
        elif self.goal is not None:
            target = self.goal_path[0]
            target_yaw = self.goal.pose.yaw
        if target is None:
            return moved
        delta = target - self.position
        dist = float(np.linalg.norm(delta))
        if dist > 1e-6:
            step = min(v_max * dt, dist)
            self.position = self.position + delta / dist * step
            moved = step
            desired_yaw = math.atan2(delta[1], delta[0])
        else:
            desired_yaw = target_yaw if target_yaw is not None else self.yaw
        dyaw = (desired_yaw - self.yaw + math.pi) % (2 * math.pi) - math.pi
        max_turn = yaw_rate * dt
        self.yaw = (self.yaw + max(-max_turn, min(max_turn, dyaw))) % (2 * math.pi)
        return moved

    def _goal_reached(self) -> bool:
        if self.goal is None:
            return False
        if np.linalg.norm(self.goal.pose.trans - self.position) > 0.15:
            return False
        dyaw = abs((self.goal.pose.yaw - self.yaw + math.pi) % (2 * math.pi) - math.pi)
        return dyaw < 0.2

    # -- perception / mapping ---------------------------------------------

    def _perceive_and_integrate(self):
        cfg = self.cfg
        cam = cfg.cam
        true_cam_pose = camera_pose(self.position, self.yaw)
        frame = render_sensor(self.scene, true_cam_pose, cam)
        est_pos, est_yaw = self._estimated_body_pose()
        est_cam_pose = camera_pose(est_pos, est_yaw)
        self._ensure_submap(est_pos, est_yaw)
        submap = self.atlas.active_submap

        if cfg.half_res:
            prop_cam = cam.scaled(0.5)
            depth_p = frame.depth[::2, ::2]
            inst_p = frame.instances[::2, ::2]
            parts_p = frame.parts[::2, ::2]
            labels_p = frame.labels[::2, ::2]
        else:
            prop_cam = cam
            depth_p = frame.depth
            inst_p = frame.instances
            parts_p = frame.parts
            labels_p = frame.labels

        proposals = sim_proposals(
            inst_p, parts_p, split_parts=cfg.proposal_split_parts,
            boundary_sigma=cfg.proposal_boundary_sigma, rng=self.rng_proposals,
        )
        rendered = self.atlas.render_segment_masks(est_cam_pose, prop_cam)
        tcfg = self.tracker_cfg
        if cfg.half_res:
            tcfg = TrackerConfig(
                min_pixels=max(1, tcfg.min_pixels // 4),
                theta_match=tcfg.theta_match,
                theta_split=tcfg.theta_split,
                delta_depth=tcfg.delta_depth,
            )
        ids, _report = track(proposals, rendered, depth_p, tcfg, self.atlas.segments, self.atlas.active_submap_id)

        feats = feature_image(labels_p, self.label_names, self.vocab, cfg.sigma_features, self.rng_features)
        for sid in np.unique(ids):
            if sid == 0:
                continue
            rec = self.atlas.segments.get(int(sid))
            if cfg.no_fusion and rec.pixel_count > 0:
                continue
            mask = (ids == sid) & feats.valid
            if not mask.any():
                continue
            pixels = np.argwhere(mask)
            fuse_features(rec, feats, pixels)

        if cfg.half_res:
            ids_full = np.kron(ids, np.ones((2, 2), dtype=np.uint32))[: cam.height, : cam.width]
        else:
            ids_full = ids
        with self.atlas.lock:
            self.atlas.integrate_depth(submap, est_cam_pose, cam, frame.depth, ids_full)

    # -- evaluation --------------------------------------------------------

    def _evaluate(self) -> dict:
        self.atlas.refresh_segment_voxel_counts()
        classes = self.cfg.eval_classes or self.label_names
        from seekmap.query import closed_set_labels

        embeddings = [embed_term(self.vocab, c) for c in classes]
        seg_class = closed_set_labels(self.atlas, embeddings)
        pred = {}
        vs = self.cfg.voxel_size
        for sm in self.atlas.submaps:
            coords, lo, seg, obs = sm.voxel_arrays()
            occ = (obs != 0) & (lo > 0) & (seg > 0)
            if not occ.any():
                continue
            centers = sm.anchor_pose.transform((coords[occ] + 0.5) * vs)
            world_idx = np.floor(centers / vs).astype(np.int64)
            for v, sid in zip(map(tuple, world_idx), seg[occ]):
                cls = seg_class.get(int(sid))
                if cls is not None:
                    pred[v] = classes[cls]
        gt = gt_voxel_labels(self.scene, vs)
        entry = {"tick": self.tick}
        try:
            metrics = semantic_metrics(pred, gt)
            entry["mAcc"] = round(metrics["mAcc"], 6)
            entry["f_miou"] = round(metrics["f_miou"], 6)
        except MetricsUndefinedError:
            entry["mAcc"] = None
            entry["f_miou"] = None
        recon = np.array(list(pred.keys()), dtype=np.float64) if pred else np.zeros((0, 3))
        if len(recon):
            recon = (recon + 0.5) * vs
        comp = completeness_and_rmse(recon, scene_surface_samples(self.scene, spacing=0.05), tau=0.05)
        entry["completeness"] = round(comp["completeness"], 6)
        entry["rmse"] = None if comp["rmse"] is None else round(comp["rmse"], 6)
        return entry

    # -- main loop ---------------------------------------------------------

    def run(self) -> MissionReport:
        cfg = self.cfg
        status = "done"
        if self.control is not None:
            self.control.attach(self)
            self.control.wait_for_start()
            self.status = "running"
        else:
            self.status = "running"
        while self.tick < cfg.duration_ticks:
            if self.control is not None:
                self.control.pump(self)
                if self.control.should_abort():
                    status = "aborted"
                    break
                if self.status == "paused":
                    self.control.wait_while_paused(self)
                    continue
            if self.tick in cfg.queries:
                self.set_query(cfg.queries[self.tick])

            moved = self._fly()
            self.drift.step(moved)
            self._perceive_and_integrate()
            self.visited.append((self.tick, self.position.copy()))
            est_pos, _ = self._estimated_body_pose()
            self._check_loop_closure(est_pos)

            if cfg.waypoints is None and self.spin_remaining == 0 and (
                self.goal is None or self._goal_reached() or self.tick - self.goal_set_tick > 60
            ):
                goal, world = self._replan()
                if goal is None:
                    self._stalled_strikes += 1
                    self.goal = None
                    if self._stalled_strikes >= 3:
                        status = "stalled"
                        self.tick += 1
                        break
                else:
                    self._stalled_strikes = 0
                    self._set_goal(goal, world)

            if cfg.eval_every and (self.tick + 1) % cfg.eval_every == 0:
                self.eval_timeline.append(self._evaluate())
                self.memory_reports.append({"tick": self.tick, **self.atlas.memory_report(cfg.feature_dim).to_dict()})

            self.tick += 1
            if self.control is not None:
                self.control.publish(self)

        if cfg.duration_ticks > 0 and self.atlas.submaps:
            self.eval_timeline.append(self._evaluate())
            self.memory_reports.append({"tick": self.tick, **self.atlas.memory_report(cfg.feature_dim).to_dict()})
            snapshot = self.atlas.snapshot()
            world = WorldIndex(snapshot)
            self.coverage = min(1.0, len(world.free) / max(1, self.scene_free_voxels))
        self.status = status
        if self.control is not None:
            self.control.publish(self)

        metadata = {
            "seed": cfg.seed,
            "duration_ticks": cfg.duration_ticks,
            "voxel_size": cfg.voxel_size,
            "feature_dim": cfg.feature_dim,
            "sigma_features": cfg.sigma_features,
            "ablations": {"monolithic": cfg.monolithic, "no_fusion": cfg.no_fusion, "half_res": cfg.half_res},
            "tracker": {
                "min_pixels": self.tracker_cfg.min_pixels,
                "theta_match": self.tracker_cfg.theta_match,
                "theta_split": self.tracker_cfg.theta_split,
                "delta_depth": self.tracker_cfg.delta_depth,
            },
            "explorer": {
                "n_c": self.explorer_cfg.n_c,
                "beta": self.explorer_cfg.beta,
                "d_max": self.explorer_cfg.d_max,
                "use_cubes": self.explorer_cfg.use_cubes,
                "use_weighting": self.explorer_cfg.use_weighting,
            },
            "drift": {
                "enabled": cfg.drift.enabled,
                "sigma_t": cfg.drift.sigma_t,
                "sigma_r": cfg.drift.sigma_r,
                "loop_radius": cfg.drift.loop_radius,
            },
        }
        return MissionReport(
            status=status,
            ticks_run=self.tick,
            coverage=round(self.coverage, 6),
            eval_timeline=self.eval_timeline,
            memory_reports=self.memory_reports,
            planner_log=self.planner_log,
            corrections_log=self.corrections_log,
            metadata=metadata,
            atlas=self.atlas,
        )


def run_mission(scene: SceneDescription, cfg: MissionConfig,
                explorer_cfg: ExplorerConfig | None = None,
                tracker_cfg: TrackerConfig | None = None,
                control=None) -> MissionReport:
    return MissionRunner(scene, cfg, explorer_cfg, tracker_cfg, control).run()
