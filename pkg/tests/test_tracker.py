import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seekmap.geometry import GeometryError
from seekmap.mapcore import RenderedSegments
from seekmap.segments import SegmentTable
from seekmap.tracker import (
    TrackerConfig,
    load_recorded_masks,
    rle_decode,
    rle_encode,
    save_recorded_masks,
    sim_proposals,
    track,
)

H, W = 20, 30


def rendered_from(seg: np.ndarray, depth: np.ndarray) -> RenderedSegments:
    d = np.where(seg > 0, depth, np.inf).astype(np.float32)
    return RenderedSegments(depth=d, seg=seg.astype(np.uint32),
                            submap=np.where(seg > 0, 0, -1).astype(np.int32))


def flat_depth(value=2.0):
    return np.full((H, W), value, dtype=np.float32)


@pytest.fixture
def cfg():
    return TrackerConfig(min_pixels=5, delta_depth=0.2)


@pytest.fixture
def table():
    t = SegmentTable(8)
    # IDs 1..4 already exist in the map
    for _ in range(4):
        t.allocate(0)
    return t


class TestTrackerConfig:
    def test_threshold_validation(self):
        with pytest.raises(ValueError):
            TrackerConfig(theta_match=0.0)
        with pytest.raises(ValueError):
            TrackerConfig(theta_split=1.0)

    def test_for_sensor_scales_min_pixels(self):
        cfg = TrackerConfig.for_sensor(160, 120, 0.05)
        assert cfg.min_pixels == 50 and cfg.delta_depth == pytest.approx(0.1)
        half = TrackerConfig.for_sensor(80, 60, 0.05)
        assert half.min_pixels == pytest.approx(50 / 4, abs=1)


class TestTrack:
    def test_reobserved_segment_keeps_its_id(self, cfg, table):
        seg = np.zeros((H, W), dtype=np.uint32)
        seg[5:15, 5:15] = 3
        rendered = rendered_from(seg, flat_depth())
        proposal = seg == 3
        out, report = track([proposal], rendered, flat_depth(), cfg, table, 0)
        assert set(np.unique(out)) == {0, 3}
        assert report.tracked == 1 and report.created == 0 and report.split == 0
        assert table.next_id == 5  # nothing allocated

    def test_novel_proposal_allocates_fresh_id(self, cfg, table):
        rendered = rendered_from(np.zeros((H, W), dtype=np.uint32), flat_depth())
        proposal = np.zeros((H, W), dtype=bool)
        proposal[2:8, 2:8] = True
        out, report = track([proposal], rendered, flat_depth(), cfg, table, 7)
        fresh = int(out.max())
        assert fresh == 5 and report.created == 1
        assert table.get(fresh).owner_submap == 7
        assert (out[proposal] == fresh).all()

    def test_oversized_rendered_region_splits(self, cfg, table):
        # the map carries one big segment; the proposal covers a small part of it
        seg = np.zeros((H, W), dtype=np.uint32)
        seg[:, :] = 2
        rendered = rendered_from(seg, flat_depth())
        proposal = np.zeros((H, W), dtype=bool)
        proposal[0:4, 0:10] = True  # 40 px vs 600 rendered; ratio below theta_split
        out, report = track([proposal], rendered, flat_depth(), cfg, table, 0)
        assert report.split == 1
        fresh = int(out[2, 2])
        assert fresh == 5
        # the rest of the rendered segment keeps its original ID
        assert out[10, 10] == 2

    def test_depth_gate_drops_stale_rendered(self, cfg, table):
        seg = np.zeros((H, W), dtype=np.uint32)
        seg[5:15, 5:15] = 3
        rendered = rendered_from(seg, flat_depth(4.0))  # map says 4 m, sensor says 2 m
        proposal = seg == 3
        out, report = track([proposal], rendered, flat_depth(2.0), cfg, table, 0)
        assert 3 not in np.unique(out)
        assert report.created == 1

    def test_min_pixels_filters_slivers(self, cfg, table):
        rendered = rendered_from(np.zeros((H, W), dtype=np.uint32), flat_depth())
        sliver = np.zeros((H, W), dtype=bool)
        sliver[0, 0:3] = True
        out, report = track([sliver], rendered, flat_depth(), cfg, table, 0)
        assert out.max() == 0 and report.created == 0

    def test_invalid_depth_pixels_excluded(self, cfg, table):
        depth = flat_depth()
        depth[:, 15:] = np.nan
        rendered = rendered_from(np.zeros((H, W), dtype=np.uint32), depth)
        proposal = np.zeros((H, W), dtype=bool)
        proposal[5:15, 10:25] = True
        out, _ = track([proposal], rendered, depth, cfg, table, 0)
        assert (out[:, 15:] == 0).all()

    def test_output_is_a_partition(self, cfg, table):
        seg = np.zeros((H, W), dtype=np.uint32)
        seg[0:10, 0:10] = 1
        seg[10:20, 10:20] = 2
        rendered = rendered_from(seg, flat_depth())
        proposals = [seg == 1, seg == 2]
        out, _ = track(proposals, rendered, flat_depth(), cfg, table, 0)
        assert set(np.unique(out)) <= {0, 1, 2}
        assert (out[0:10, 0:10] == 1).all()
        assert (out[10:20, 10:20] == 2).all()

    def test_dimension_mismatch(self, cfg, table):
        rendered = rendered_from(np.zeros((H, W), dtype=np.uint32), flat_depth())
        with pytest.raises(GeometryError):
            track([], rendered, np.zeros((4, 4), dtype=np.float32), cfg, table, 0)
        with pytest.raises(GeometryError):
            track([np.zeros((4, 4), dtype=bool)], rendered, flat_depth(), cfg, table, 0)


class TestSimProposals:
    def test_instance_masks(self):
        img = np.array([[0, 0, 1], [2, -1, 1]])
        masks = sim_proposals(img)
        assert len(masks) == 3
        total = sum(m.sum() for m in masks)
        assert total == 5  # the -1 pixel belongs to no mask

    def test_part_split(self):
        inst = np.zeros((2, 4), dtype=int)
        parts = np.array([[0, 0, 1, 1], [0, 0, 1, 1]])
        assert len(sim_proposals(inst, parts, split_parts=True)) == 2
        assert len(sim_proposals(inst, parts, split_parts=False)) == 1

    def test_boundary_noise_needs_rng(self):
        with pytest.raises(ValueError):
            sim_proposals(np.zeros((4, 4), dtype=int), boundary_sigma=2)

    def test_boundary_noise_keeps_boolean_masks(self, rng):
        img = np.zeros((12, 12), dtype=int)
        img[4:8, 4:8] = 1
        masks = sim_proposals(img, boundary_sigma=2, rng=rng)
        for m in masks:
            assert m.dtype == bool and m.any()


class TestRle:
    @given(st.lists(st.booleans(), min_size=1, max_size=200))
    @settings(max_examples=150, deadline=None)
    def test_round_trip(self, bits):
        mask = np.array(bits, dtype=bool).reshape(1, -1)
        assert np.array_equal(rle_decode(rle_encode(mask), mask.shape), mask)

    def test_runs_are_maximal(self):
        mask = np.array([[0, 1, 1, 0, 1]], dtype=bool)
        assert rle_encode(mask) == [1, 2, 4, 1]

    def test_recorded_mask_file_round_trip(self, tmp_path, rng):
        frames = {
            0: [rng.random((6, 8)) > 0.5 for _ in range(3)],
            2: [rng.random((6, 8)) > 0.2],
        }
        path = tmp_path / "masks.jsonl"
        save_recorded_masks(path, frames)
        loaded = load_recorded_masks(path)
        assert set(loaded) == {0, 2}
        for idx in frames:
            for a, b in zip(frames[idx], loaded[idx]):
                assert np.array_equal(a, b)
