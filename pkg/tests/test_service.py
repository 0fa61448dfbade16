import json
import threading
import time
import urllib.error
import urllib.request

import numpy as np
import pytest

from seekmap.fixtures import standard_scene
from seekmap.geometry import CameraModel, Pose, camera_pose
from seekmap.mapcore import SubmapAtlas
from seekmap.mission import MissionConfig, run_mission
from seekmap.explorer import ExplorerConfig
from seekmap.segments import SegmentRecord
from seekmap.service import (
    ControlService,
    MissionControl,
    _segment_summary,
    _slice_payload,
    resolve_addr,
)


class TestResolveAddr:
    def test_default(self, monkeypatch):
        monkeypatch.delenv("SEEKMAP_ADDR", raising=False)
        assert resolve_addr() == ("127.0.0.1", 7607)

    def test_environment(self, monkeypatch):
        monkeypatch.setenv("SEEKMAP_ADDR", "0.0.0.0:9100")
        assert resolve_addr() == ("0.0.0.0", 9100)

    def test_explicit_wins(self, monkeypatch):
        monkeypatch.setenv("SEEKMAP_ADDR", "0.0.0.0:9100")
        assert resolve_addr("127.0.0.1:8000") == ("127.0.0.1", 8000)


class TestMissionControl:
    def test_start_flag(self):
        control = MissionControl()
        assert control.status()["state"] == "idle"
        control.post_command({"type": "start"})
        control.wait_for_start()  # returns immediately once started

    def test_bounded_queue(self):
        control = MissionControl()
        control.max_pending = 2
        assert control.post_command({"type": "pause"})
        assert control.post_command({"type": "resume"})
        assert not control.post_command({"type": "pause"})

    def test_status_is_a_copy(self):
        control = MissionControl()
        status = control.status()
        status["state"] = "mutated"
        assert control.status()["state"] == "idle"


def slice_atlas():
    atlas = SubmapAtlas(0.1)
    sm = atlas.new_submap(0, Pose.identity())
    sm.core.set_voxel(0, 0, 5, 2.0, seg_id=1)  # occupied at z ~ 0.55
    sm.core.set_voxel(2, 1, 5, -2.0)  # free
    atlas.segments.records[1] = SegmentRecord(
        segment_id=1, mean_feature=np.ones(8, dtype=np.float32), pixel_count=4, voxel_count=1)
    return atlas


class TestSlicePayload:
    def test_empty_snapshot(self):
        payload = _slice_payload(None, 1.0, "occupancy", None, None)
        assert payload["width"] == 0 and payload["cells"] == []

    def test_occupancy_grid_indexing(self):
        payload = _slice_payload(slice_atlas().snapshot(), 0.55, "occupancy", None, None)
        assert payload["voxel_size"] == 0.1
        assert payload["origin"] == [0.0, 0.0]
        assert (payload["width"], payload["height"]) == (3, 2)
        grid = payload["cells"]
        # (0, 0) occupied; (2, 1) free; everything else unknown
        assert grid[0 * 3 + 0] == 2
        assert grid[1 * 3 + 2] == 1
        assert grid[0 * 3 + 1] == 0

    def test_plane_without_voxels_is_empty(self):
        payload = _slice_payload(slice_atlas().snapshot(), 3.0, "occupancy", None, None)
        assert payload["width"] == 0 and payload["cells"] == []


class TestSegmentSummary:
    def test_rows_sorted_and_centroids(self):
        atlas = slice_atlas()
        atlas.segments.records[2] = SegmentRecord(
            segment_id=2, mean_feature=np.zeros(8, dtype=np.float32), pixel_count=0)
        rows = _segment_summary(atlas.snapshot(), None, None)
        assert [r["id"] for r in rows] == [1, 2]
        assert rows[0]["centroid"] == [0.05, 0.05, 0.55]
        assert rows[1]["centroid"] is None

    def test_none_snapshot(self):
        assert _segment_summary(None, None, None) == []


@pytest.fixture(scope="module")
def live_service():
    """A real mission running behind the HTTP service on an ephemeral port."""
    scene = standard_scene()
    cfg = MissionConfig(
        duration_ticks=24,
        seed=2,
        voxel_size=0.1,
        cam=CameraModel(40, 30, 20.0, 20.0, 20.0, 15.0, 0.1, 6.0),
    )
    control = MissionControl()
    service = ControlService(control, scene.vocabulary, addr="127.0.0.1:0")
    host, port = service.start()
    result = {}

    def runner():
        result["report"] = run_mission(scene, cfg, ExplorerConfig(n_c=3, robot_radius=0.15), control=control)

    thread = threading.Thread(target=runner, daemon=True)
    thread.start()
    yield {"base": f"http://{host}:{port}", "thread": thread, "result": result, "control": control}
    control.stop()
    thread.join(timeout=30)
    service.server.shutdown()
    service.server.server_close()


def http(base, method, path, body=None):
    data = None if body is None else json.dumps(body).encode()
    req = urllib.request.Request(base + path, data=data, method=method,
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=10) as resp:
            return resp.status, resp.read(), dict(resp.headers)
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read(), dict(exc.headers)


def wait_until(pred, timeout=30.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if pred():
            return True
        time.sleep(0.05)
    return False


class TestLiveService:
    def _status(self, base):
        code, body, _ = http(base, "GET", "/mission/status")
        assert code == 200
        return json.loads(body)

    def test_full_session(self, live_service):
        base = live_service["base"]

        # idle: control endpoints refuse, status reports idle
        assert self._status(base)["state"] == "idle"
        code, body, _ = http(base, "POST", "/query", {"term": "bed"})
        assert code == 409 and json.loads(body)["error"] == "not_running"
        code, _, _ = http(base, "POST", "/mission/pause")
        assert code == 409

        # start and let a few ticks run
        code, _, _ = http(base, "POST", "/mission/start")
        assert code == 200
        assert wait_until(lambda: self._status(base)["tick"] >= 3)

        # live query
        code, body, _ = http(base, "POST", "/query", {"term": "bed"})
        assert code == 200
        payload = json.loads(body)
        assert payload["term"] == "bed"
        assert isinstance(payload["top_segments"], list)
        code, body, _ = http(base, "POST", "/query", {"term": "warp drive"})
        assert code == 422 and json.loads(body)["error"] == "unknown_term"
        code, _, _ = http(base, "POST", "/query", {})
        assert code == 400

        # pause freezes the tick counter; queries still work
        code, _, _ = http(base, "POST", "/mission/pause")
        assert code == 200
        assert wait_until(lambda: self._status(base)["state"] == "paused")
        frozen = self._status(base)["tick"]
        time.sleep(0.4)
        assert self._status(base)["tick"] == frozen
        code, _, _ = http(base, "POST", "/query", {"term": "table"})
        assert code == 200

        # map reads come from snapshots
        code, body, _ = http(base, "GET", "/map/slice?z=1.2&layer=occupancy")
        assert code == 200
        s = json.loads(body)
        assert s["width"] > 0 and len(s["cells"]) == s["width"] * s["height"]
        assert set(s["cells"]) <= {0, 1, 2}
        code, body, _ = http(base, "GET", "/map/slice?z=1.2&layer=activation")
        assert code == 200
        acts = json.loads(body)["cells"]
        assert all(isinstance(v, (int, float)) for v in acts)
        code, _, _ = http(base, "GET", "/map/slice?z=abc")
        assert code == 400
        code, _, _ = http(base, "GET", "/map/slice?z=1.0&layer=bogus")
        assert code == 400

        code, body, _ = http(base, "GET", "/map/segments")
        assert code == 200
        segments = json.loads(body)["segments"]
        assert segments and {"id", "centroid", "similarity", "voxel_count"} <= set(segments[0])

        code, body, headers = http(base, "GET", "/planner/log?since=-1")
        assert code == 200
        assert headers.get("Content-Type") == "application/x-ndjson"
        lines = [json.loads(l) for l in body.decode().splitlines() if l]
        for entry in lines:
            assert "tick" in entry and "candidates" in entry
        if lines:
            last = lines[-1]["tick"]
            code, body, _ = http(base, "GET", f"/planner/log?since={last}")
            assert all(json.loads(l)["tick"] > last for l in body.decode().splitlines() if l)
        code, _, _ = http(base, "GET", "/planner/log?since=x")
        assert code == 400

        # CORS preflight for browser clients
        code, _, headers = http(base, "OPTIONS", "/query")
        assert code == 204
        assert headers.get("Access-Control-Allow-Methods") == "GET, POST, OPTIONS"

        # unknown routes
        code, _, _ = http(base, "GET", "/nope")
        assert code == 404
        code, _, _ = http(base, "POST", "/nope")
        assert code == 404

        # resume and run to completion
        code, _, _ = http(base, "POST", "/mission/resume")
        assert code == 200
        assert wait_until(lambda: self._status(base)["state"] in ("done", "stalled"), timeout=60)
        live_service["thread"].join(timeout=30)
        report = live_service["result"]["report"]
        assert report.status in ("done", "stalled")

        # finished missions refuse control commands but still serve reads
        code, _, _ = http(base, "POST", "/mission/pause")
        assert code == 409
        code, body, _ = http(base, "GET", "/map/segments")
        assert code == 200 and json.loads(body)["segments"]
