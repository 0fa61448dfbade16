"""HTTP mission control: start/pause/resume, live queries, map slices, and the
planner log, served from atlas snapshots so readers never block the mapper."""

from __future__ import annotations

import json
import os
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

import numpy as np

from seekmap.encoding import UnknownTermError, embed_term
from seekmap.mission import json_default
from seekmap.query import activation
from seekmap.segments import NoCentroidError, centroid

DEFAULT_ADDR = "127.0.0.1:7607"


def resolve_addr(addr: str | None = None) -> tuple[str, int]:
    """host:port from an explicit argument, SEEKMAP_ADDR, or the default."""
    raw = addr or os.environ.get("SEEKMAP_ADDR") or DEFAULT_ADDR
    host, _, port = raw.rpartition(":")
    return host or "127.0.0.1", int(port)


class MissionControl:
    """Bounded command handoff between HTTP threads and the mission tick loop.

    The tick loop is the single writer; the service only reads published
    snapshots and enqueues commands consumed at tick boundaries."""

    def __init__(self, autostart: bool = False):
        self._cond = threading.Condition()
        self._commands: list[dict] = []
        self._started = autostart
        self._paused = False
        self._abort = False
        self._published: dict = {"state": "idle", "tick": 0, "current_query": None,
                                 "position": None, "yaw": 0.0, "goal": None,
                                 "coverage": 0.0, "snapshot_version": 0}
        self._snapshot = None
        self._runner = None
        self.max_pending = 64

    # -- HTTP side ---------------------------------------------------------

    def post_command(self, cmd: dict) -> bool:
        with self._cond:
            if cmd["type"] == "start":
                self._started = True
                self._cond.notify_all()
                return True
            if len(self._commands) >= self.max_pending:
                return False
            self._commands.append(cmd)
            self._cond.notify_all()
            return True

    def status(self) -> dict:
        with self._cond:
            return dict(self._published)

    def snapshot(self):
        with self._cond:
            return self._snapshot

    def planner_log_since(self, since: int) -> list[dict]:
        with self._cond:
            runner = self._runner
        if runner is None:
            return []
        return [e for e in list(runner.planner_log) if e["tick"] > since]

    def stop(self):
        with self._cond:
            self._abort = True
            self._cond.notify_all()

    # -- mission side ------------------------------------------------------

    def attach(self, runner):
        with self._cond:
            self._runner = runner

    def wait_for_start(self):
        with self._cond:
            while not self._started and not self._abort:
                self._cond.wait(timeout=0.1)

    def should_abort(self) -> bool:
        with self._cond:
            return self._abort

    def pump(self, runner):
        """Apply queued commands at a tick boundary."""
        with self._cond:
            cmds, self._commands = self._commands, []
        for cmd in cmds:
            kind = cmd["type"]
            if kind == "pause":
                self._paused = True
                runner.status = "paused"
            elif kind == "resume":
                self._paused = False
                runner.status = "running"
            elif kind == "query":
                runner.set_query(cmd["term"])

    def wait_while_paused(self, runner):
        self.publish(runner)
        while True:
            with self._cond:
                if self._abort or not self._paused:
                    break
                self._cond.wait(timeout=0.05)
            self.pump(runner)
        runner.status = "running" if not self.should_abort() else runner.status
        self.publish(runner)

    snapshot_every = 5  # ticks between published atlas copies

    def publish(self, runner):
        goal = None
        if runner.goal is not None:
            goal = {"position": [float(x) for x in runner.goal.pose.trans],
                    "yaw": float(runner.goal.pose.yaw)}
        snap = None
        if runner.atlas.submaps and (self._snapshot is None
                                     or runner.tick % self.snapshot_every == 0
                                     or runner.status in ("paused", "done", "stalled")):
            runner.atlas.refresh_segment_voxel_counts()
            snap = runner.atlas.snapshot()
        with self._cond:
            self._published = {
                "state": runner.status,
                "tick": runner.tick,
                "current_query": runner.query_term,
                "position": [round(float(x), 4) for x in runner.position],
                "yaw": round(float(runner.yaw), 4),
                "goal": goal,
                "coverage": round(float(runner.coverage), 6),
                "snapshot_version": runner.atlas.snapshot_version,
            }
            if snap is not None:
                self._snapshot = snap


def _segment_summary(snapshot, vocab, term: str | None, top_k: int | None = None) -> list[dict]:
    """Per-segment rows (id, centroid, similarity, voxel_count), best first."""
    sims = {}
    if term is not None and snapshot is not None:
        sims = activation(snapshot, embed_term(vocab, term)).entries
    rows = []
    if snapshot is None:
        return rows
    for sid, rec in sorted(snapshot.segments.records.items()):
        try:
            c = [round(float(x), 4) for x in centroid(rec, snapshot)]
        except NoCentroidError:
            c = None
        rows.append({
            "id": sid,
            "centroid": c,
            "similarity": round(float(sims.get(sid, 0.0)), 6),
            "voxel_count": int(rec.voxel_count),
            "pixel_count": int(rec.pixel_count),
        })
    rows.sort(key=lambda r: (-r["similarity"], r["id"]))
    if top_k is not None:
        rows = rows[:top_k]
    return rows


def _slice_payload(snapshot, z: float, layer: str, term, vocab) -> dict:
    """Row-major horizontal slice at height z; absent cells are unknown."""
    if snapshot is None:
        return {"z": z, "layer": layer, "voxel_size": None, "origin": [0, 0],
                "width": 0, "height": 0, "cells": [], "snapshot_version": 0}
    vs = snapshot.voxel_size
    iz = int(np.floor(z / vs))
    cells: dict[tuple[int, int], tuple[int, int]] = {}
    for sm in snapshot.submaps:
        coords, lo, seg, obs = sm.voxel_arrays()
        observed = obs != 0
        if not observed.any():
            continue
        world = sm.anchor_pose.transform((coords[observed] + 0.5) * vs)
        idx = np.floor(world / vs).astype(np.int64)
        at_z = idx[:, 2] == iz
        if not at_z.any():
            continue
        occ = lo[observed][at_z] > 0
        sids = seg[observed][at_z]
        for (ix, iy), is_occ, sid in zip(map(tuple, idx[at_z, :2]), occ, sids):
            state = 2 if is_occ else 1
            prev = cells.get((ix, iy))
            if prev is None or state > prev[0]:
                cells[(ix, iy)] = (state, int(sid) if is_occ else 0)
    if not cells:
        return {"z": z, "layer": layer, "voxel_size": vs, "origin": [0, 0],
                "width": 0, "height": 0, "cells": [],
                "snapshot_version": snapshot.snapshot_version}
    xs = [k[0] for k in cells]
    ys = [k[1] for k in cells]
    x0, y0 = min(xs), min(ys)
    w = max(xs) - x0 + 1
    h = max(ys) - y0 + 1
    sims = {}
    if layer == "activation" and term is not None:
        sims = activation(snapshot, embed_term(vocab, term)).entries
    grid = [0] * (w * h)
    for (ix, iy), (state, sid) in cells.items():
        flat = (iy - y0) * w + (ix - x0)
        if layer == "activation":
            grid[flat] = round(float(sims.get(sid, 0.0)), 4) if state == 2 else 0
        else:
            grid[flat] = state
    return {"z": z, "layer": layer, "voxel_size": vs,
            "origin": [x0 * vs, y0 * vs], "width": w, "height": h,
            "cells": grid, "snapshot_version": snapshot.snapshot_version}


class ControlService:
    """Threaded HTTP endpoint over a MissionControl and a vocabulary."""

    def __init__(self, control: MissionControl, vocab, addr: str | None = None):
        self.control = control
        self.vocab = vocab
        host, port = resolve_addr(addr)
        service = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, fmt, *args):
                pass

            def _send(self, code: int, payload, content_type="application/json"):
                body = payload if isinstance(payload, bytes) else json.dumps(payload, default=json_default).encode()
                self.send_response(code)
                self.send_header("Content-Type", content_type)
                self.send_header("Content-Length", str(len(body)))
                self.send_header("Access-Control-Allow-Origin", "*")
                self.end_headers()
                self.wfile.write(body)

            def do_OPTIONS(self):
                # CORS preflight for the browser console's JSON POSTs
                self.send_response(204)
                self.send_header("Access-Control-Allow-Origin", "*")
                self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
                self.send_header("Access-Control-Allow-Headers", "Content-Type")
                self.send_header("Content-Length", "0")
                self.end_headers()

            def do_GET(self):
                url = urlparse(self.path)
                q = parse_qs(url.query)
                if url.path == "/mission/status":
                    self._send(200, service.control.status())
                elif url.path == "/map/slice":
                    try:
                        z = float(q.get("z", ["1.0"])[0])
                    except ValueError:
                        self._send(400, {"error": "bad_request", "detail": "z must be a number"})
                        return
                    layer = q.get("layer", ["occupancy"])[0]
                    if layer not in ("occupancy", "activation"):
                        self._send(400, {"error": "bad_request", "detail": "unknown layer"})
                        return
                    term = service.control.status().get("current_query")
                    self._send(200, _slice_payload(service.control.snapshot(), z, layer, term, service.vocab))
                elif url.path == "/map/segments":
                    term = service.control.status().get("current_query")
                    snap = service.control.snapshot()
                    self._send(200, {"segments": _segment_summary(snap, service.vocab, term),
                                     "snapshot_version": 0 if snap is None else snap.snapshot_version})
                elif url.path == "/planner/log":
                    try:
                        since = int(q.get("since", ["-1"])[0])
                    except ValueError:
                        self._send(400, {"error": "bad_request", "detail": "since must be an integer"})
                        return
                    lines = [json.dumps(e, default=json_default) for e in service.control.planner_log_since(since)]
                    self._send(200, ("\n".join(lines) + ("\n" if lines else "")).encode(),
                               content_type="application/x-ndjson")
                else:
                    self._send(404, {"error": "not_found"})

            def do_POST(self):
                url = urlparse(self.path)
                length = int(self.headers.get("Content-Length") or 0)
                raw = self.rfile.read(length) if length else b""
                try:
                    body = json.loads(raw) if raw else {}
                except json.JSONDecodeError:
                    self._send(400, {"error": "bad_request", "detail": "invalid JSON"})
                    return
                if url.path == "/mission/start":
                    service.control.post_command({"type": "start"})
                    self._send(200, {"ok": True, "state": "running"})
                elif url.path == "/mission/pause":
                    state = service.control.status()["state"]
                    if state not in ("running", "paused"):
                        self._send(409, {"error": "not_running", "state": state})
                        return
                    service.control.post_command({"type": "pause"})
                    self._send(200, {"ok": True})
                elif url.path == "/mission/resume":
                    state = service.control.status()["state"]
                    if state not in ("running", "paused"):
                        self._send(409, {"error": "not_running", "state": state})
                        return
                    service.control.post_command({"type": "resume"})
                    self._send(200, {"ok": True})
                elif url.path == "/query":
                    term = body.get("term")
                    if not isinstance(term, str) or not term:
                        self._send(400, {"error": "bad_request", "detail": "term required"})
                        return
                    state = service.control.status()["state"]
                    if state not in ("running", "paused"):
                        self._send(409, {"error": "not_running", "state": state})
                        return
                    if term not in service.vocab:
                        self._send(422, {"error": "unknown_term", "term": term})
                        return
                    accepted = service.control.post_command({"type": "query", "term": term})
                    if not accepted:
                        self._send(503, {"error": "busy", "detail": "command queue full"})
                        return
                    snap = service.control.snapshot()
                    try:
                        top = _segment_summary(snap, service.vocab, term, top_k=10)
                    except UnknownTermError:
                        self._send(422, {"error": "unknown_term", "term": term})
                        return
                    self._send(200, {"term": term, "top_segments": top,
                                     "snapshot_version": 0 if snap is None else snap.snapshot_version})
                else:
                    self._send(404, {"error": "not_found"})

        self.server = ThreadingHTTPServer((host, port), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def address(self) -> tuple[str, int]:
        return self.server.server_address[:2]

    def start(self):
        self.thread.start()
        return self.address

    def stop(self):
        self.server.shutdown()
        self.server.server_close()
        self.control.stop()


def serve_mission(scene, cfg, explorer_cfg=None, addr=None, autostart=False):
    """Convenience wrapper: start the service, run the mission in the calling
    thread, and stop the service when the mission ends."""
    from seekmap.mission import run_mission

    control = MissionControl(autostart=autostart)
    service = ControlService(control, scene.vocabulary, addr)
    service.start()
    try:
        report = run_mission(scene, cfg, explorer_cfg, control=control)
    finally:
        time.sleep(0.05)
        service.stop()
    return report
