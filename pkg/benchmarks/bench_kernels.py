"""Compare the compiled voxel kernels against the pure-Python fallback.

Run from a shell:

    python benchmarks/bench_kernels.py [--frames 10] [--width 160] [--height 120]

The pure backend is loaded by spawning a subprocess with SEEKMAP_PURE_KERNELS=1
so both implementations are measured in a fresh interpreter.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import textwrap
import time


def run_backend(pure: bool, frames: int, width: int, height: int) -> dict:
    code = textwrap.dedent(
        f"""
        import json, time
        import numpy as np
        from seekmap import kernel_backend
        from seekmap.kernels import SubmapCore

        rng = np.random.default_rng(0)
        cam = dict(fx={width} / 2, fy={width} / 2, cx={width} / 2, cy={height} / 2)
        core = SubmapCore(0.05)
        depth = 2.0 + 0.5 * rng.random(({height}, {width})).astype(np.float32)
        ids = rng.integers(1, 20, size=({height}, {width}), dtype=np.uint32)
        rot = np.eye(3)
        origin = np.zeros(3)

        t0 = time.perf_counter()
        for i in range({frames}):
            core.integrate(origin, rot, cam["fx"], cam["fy"], cam["cx"], cam["cy"],
                           depth, ids, 0.85, -0.4, 5.0)
        t_int = time.perf_counter() - t0

        out_depth = np.full(({height}, {width}), np.inf, dtype=np.float32)
        out_seg = np.zeros(({height}, {width}), dtype=np.uint32)
        out_sub = np.full(({height}, {width}), -1, dtype=np.int32)
        t0 = time.perf_counter()
        for i in range(5):
            core.render(origin, rot, cam["fx"], cam["fy"], cam["cx"], cam["cy"],
                        {width}, {height}, 8.0, out_depth, out_seg, out_sub, 0)
        t_render = (time.perf_counter() - t0) / 5

        dirs = rng.normal(size=(500, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        t0 = time.perf_counter()
        hits = sum(core.raycast(origin, d, 8.0) is not None for d in dirs)
        t_ray = time.perf_counter() - t0

        print(json.dumps(dict(backend=kernel_backend, blocks=core.n_blocks,
                              integrate_s=t_int / {frames}, render_s=t_render,
                              raycast_500_s=t_ray, hits=int(hits))))
        """
    )
    env = dict(os.environ)
    if pure:
        env["SEEKMAP_PURE_KERNELS"] = "1"
    else:
        env.pop("SEEKMAP_PURE_KERNELS", None)
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    if out.returncode != 0:
        raise RuntimeError(out.stderr)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--frames", type=int, default=10)
    ap.add_argument("--width", type=int, default=160)
    ap.add_argument("--height", type=int, default=120)
    args = ap.parse_args()

    results = {}
    for pure in (False, True):
        t0 = time.perf_counter()
        r = run_backend(pure, args.frames, args.width, args.height)
        results[r["backend"]] = r
        print(f"{r['backend']:>8}: integrate {r['integrate_s'] * 1e3:8.1f} ms/frame  "
              f"render {r['render_s'] * 1e3:8.1f} ms  raycast(500) {r['raycast_500_s'] * 1e3:8.1f} ms  "
              f"({r['blocks']} blocks, {r['hits']} hits, wall {time.perf_counter() - t0:.1f} s)")
    if "compiled" in results and "pure" in results:
        speedup = results["pure"]["integrate_s"] / results["compiled"]["integrate_s"]
        print(f"compiled integrate speedup: {speedup:.1f}x")
        if results["pure"]["blocks"] != results["compiled"]["blocks"]:
            print("WARNING: backends disagree on allocated blocks")
    else:
        print("compiled backend unavailable; only the pure fallback was measured")


if __name__ == "__main__":
    main()
