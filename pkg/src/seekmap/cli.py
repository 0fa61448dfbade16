"""Command-line entry points: sim, eval, bench-memory, replay."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from seekmap import kernel_backend


def _load_scene(spec: str):
    """A scene JSON path or the name of a built-in scene."""
    from seekmap.fixtures import BUILTIN_SCENES
    from seekmap.scene import SceneDescription

    if spec in BUILTIN_SCENES:
        return BUILTIN_SCENES[spec]()
    return SceneDescription.load(spec)


def _parse_queries(pairs) -> dict:
    queries = {}
    for pair in pairs or []:
        term, _, tick = pair.rpartition("@")
        if not term:
            raise SystemExit(f"bad --query {pair!r}: expected term@tick")
        queries[int(tick)] = term
    return queries


def cmd_sim(args) -> int:
    from seekmap.explorer import ExplorerConfig
    from seekmap.mapcore import save_atlas
    from seekmap.mission import DriftModel, MissionConfig, json_default, run_mission

    scene = _load_scene(args.scene)
    cfg = MissionConfig(
        duration_ticks=args.ticks,
        seed=args.seed,
        queries=_parse_queries(args.query),
        monolithic=args.monolithic,
        no_fusion=args.no_fusion,
        half_res=args.half_res,
        voxel_size=args.voxel,
        sigma_features=args.sigma,
        eval_every=args.eval_every,
        drift=DriftModel(sigma_t=args.drift_sigma_t, sigma_r=args.drift_sigma_r,
                         enabled=args.drift_sigma_t > 0 or args.drift_sigma_r > 0),
    )
    explorer_cfg = ExplorerConfig(n_c=args.n_c, use_cubes=not args.unweighted, use_weighting=not args.unweighted)

    os.makedirs(args.out, exist_ok=True)
    if args.serve:
        from seekmap.service import serve_mission

        report = serve_mission(scene, cfg, explorer_cfg, addr=args.serve, autostart=args.autostart)
    else:
        report = run_mission(scene, cfg, explorer_cfg)

    with open(os.path.join(args.out, "mission_report.json"), "w") as f:
        f.write(report.to_json())
    with open(os.path.join(args.out, "planner.log.jsonl"), "w") as f:
        for entry in report.planner_log:
            f.write(json.dumps(entry, default=json_default) + "\n")
    with open(os.path.join(args.out, "map.skmp"), "wb") as f:
        save_atlas(report.atlas, f)
    print(f"mission {report.status} after {report.ticks_run} ticks; "
          f"coverage {report.coverage:.3f}; outputs in {args.out}")
    if report.eval_timeline:
        last = report.eval_timeline[-1]
        print(f"final mAcc {last['mAcc']} f-mIoU {last['f_miou']} completeness {last['completeness']}")
    return 0 if report.status in ("done", "stalled") else 1


def cmd_eval(args) -> int:
    from seekmap.encoding import embed_term
    from seekmap.mapcore import load_atlas
    from seekmap.query import EvalReport, closed_set_labels, completeness_and_rmse, semantic_metrics
    from seekmap.scene import gt_voxel_labels, scene_surface_samples

    scene = _load_scene(args.scene)
    with open(args.map, "rb") as f:
        atlas = load_atlas(f)
    atlas.refresh_segment_voxel_counts()
    classes = args.classes.split(",") if args.classes else scene.label_names()
    vocab = scene.vocabulary
    embeddings = [embed_term(vocab, c) for c in classes]
    seg_class = closed_set_labels(atlas, embeddings)

    vs = atlas.voxel_size
    pred = {}
    for sm in atlas.submaps:
        coords, lo, seg, obs = sm.voxel_arrays()
        occ = (obs != 0) & (lo > 0) & (seg > 0)
        if not occ.any():
            continue
        centers = sm.anchor_pose.transform((coords[occ] + 0.5) * vs)
        idx = np.floor(centers / vs).astype(np.int64)
        for v, sid in zip(map(tuple, idx), seg[occ]):
            cls = seg_class.get(int(sid))
            if cls is not None:
                pred[v] = classes[cls]
    gt = gt_voxel_labels(scene, vs)
    metrics = semantic_metrics(pred, gt)
    recon = (np.array(list(pred.keys()), dtype=np.float64) + 0.5) * vs if pred else np.zeros((0, 3))
    comp = completeness_and_rmse(recon, scene_surface_samples(scene, spacing=0.05), tau=0.05)
    report = EvalReport(
        mAcc=metrics["mAcc"],
        f_miou=metrics["f_miou"],
        per_class=metrics["per_class"],
        completeness=comp["completeness"],
        rmse=comp["rmse"],
    )
    print(report.to_table())
    return 0


def cmd_bench_memory(args) -> int:
    from seekmap.mission import MissionConfig, run_mission

    scene = _load_scene(args.scene)
    cfg = MissionConfig(duration_ticks=args.ticks, seed=args.seed, voxel_size=args.voxel,
                        feature_dim=args.dim)
    report = run_mission(scene, cfg)
    mem = report.atlas.memory_report(args.dim)
    print(f"scene {args.scene}, voxel {args.voxel} m, D={args.dim}, "
          f"{report.ticks_run} ticks ({kernel_backend} kernels)")
    for key, value in mem.to_dict().items():
        print(f"  {key:28s} {value}")
    return 0


def cmd_replay(args) -> int:
    from seekmap.geometry import CameraModel, Pose
    from seekmap.mapcore import CreationPolicy, SubmapAtlas, save_atlas
    from seekmap.encoding import load_feature_image
    from seekmap.segments import fuse_features
    from seekmap.tracker import TrackerConfig, load_recorded_masks, rle_decode, track

    frames_dir = args.frames
    meta_path = os.path.join(frames_dir, "camera.json")
    if not os.path.exists(meta_path):
        raise SystemExit(f"missing {meta_path}")
    with open(meta_path) as f:
        meta = json.load(f)
    cam = CameraModel(**meta["camera"])
    voxel = float(meta.get("voxel_size", args.voxel))
    dim = int(meta.get("feature_dim", 768))

    poses = {}
    with open(os.path.join(frames_dir, "poses.jsonl")) as f:
        for line in f:
            rec = json.loads(line)
            poses[int(rec["frame"])] = Pose.from_array(rec["pose"])
    masks = load_recorded_masks(os.path.join(frames_dir, "masks.jsonl"))

    atlas = SubmapAtlas(voxel, dim, CreationPolicy(meta.get("max_frames_per_submap", 50),
                                                   meta.get("max_distance_per_submap", 5.0)))
    tcfg = TrackerConfig.for_sensor(cam.width, cam.height, voxel)
    keyframe = 0
    for frame_idx in sorted(poses):
        pose = poses[frame_idx]
        depth = np.load(os.path.join(frames_dir, f"depth_{frame_idx:06d}.npy"))
        if atlas.active_submap_id < 0 or atlas.creation_due(pose.trans):
            atlas.new_submap(keyframe, Pose.from_yaw(pose.yaw, pose.trans))
            keyframe += 1
        proposals = masks.get(frame_idx, [])
        rendered = atlas.render_segment_masks(pose, cam)
        ids, _ = track(proposals, rendered, depth, tcfg, atlas.segments, atlas.active_submap_id)
        feat_path = os.path.join(frames_dir, f"features_{frame_idx:06d}.skft")
        if os.path.exists(feat_path):
            feats = load_feature_image(feat_path, expected_dim=dim)
            for sid in np.unique(ids):
                if sid == 0:
                    continue
                sel = (ids == sid) & feats.valid
                if sel.any():
                    fuse_features(atlas.segments.get(int(sid)), feats, np.argwhere(sel))
        atlas.integrate_depth(atlas.active_submap, pose, cam, depth, ids)
    atlas.refresh_segment_voxel_counts()

    out = args.out or os.path.join(frames_dir, "replay_out")
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "map.skmp"), "wb") as f:
        save_atlas(atlas, f)
    print(f"replayed {len(poses)} frames into {len(atlas.submaps)} submaps, "
          f"{len(atlas.segments.records)} segments; map written to {out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="seekmap",
                                     description="Object-centric open-vocabulary volumetric mapping")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sim", help="run a simulated mission")
    p.add_argument("--scene", required=True, help="scene JSON path or built-in name")
    p.add_argument("--ticks", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--monolithic", action="store_true")
    p.add_argument("--no-fusion", dest="no_fusion", action="store_true")
    p.add_argument("--half-res", dest="half_res", action="store_true")
    p.add_argument("--query", action="append", metavar="TERM@TICK")
    p.add_argument("--serve", metavar="ADDR", help="host:port for the control service")
    p.add_argument("--autostart", action="store_true", help="with --serve: run without waiting for /mission/start")
    p.add_argument("--out", required=True)
    p.add_argument("--voxel", type=float, default=0.05)
    p.add_argument("--sigma", type=float, default=0.0, help="feature noise")
    p.add_argument("--n-c", dest="n_c", type=int, default=10)
    p.add_argument("--unweighted", action="store_true", help="baseline planner (no cubes, w=1)")
    p.add_argument("--eval-every", dest="eval_every", type=int, default=0)
    p.add_argument("--drift-sigma-t", dest="drift_sigma_t", type=float, default=0.0)
    p.add_argument("--drift-sigma-r", dest="drift_sigma_r", type=float, default=0.0)
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("eval", help="evaluate a saved map against a scene")
    p.add_argument("--map", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--classes", help="comma-separated class terms (default: all scene labels)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench-memory", help="map a scene and print the memory report")
    p.add_argument("--scene", required=True)
    p.add_argument("--voxel", type=float, default=0.05)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--ticks", type=int, default=60)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench_memory)

    p = sub.add_parser("replay", help="rebuild a map from recorded frames")
    p.add_argument("--frames", required=True, help="directory with camera.json, poses.jsonl, masks.jsonl, depth/features")
    p.add_argument("--out")
    p.add_argument("--voxel", type=float, default=0.05)
    p.set_defaults(func=cmd_replay)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
