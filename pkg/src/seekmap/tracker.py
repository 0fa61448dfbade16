"""As-fine-as-possible greedy association between segmenter proposals and
rendered map segments, producing the per-pixel segment-ID image."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from seekmap.geometry import GeometryError


@dataclass
class TrackerConfig:
    min_pixels: int = 50
    theta_match: float = 0.5  # overlap ratio (intersection over proposal area)
    theta_split: float = 0.7  # proposal/rendered area ratio below which a split is made
    delta_depth: float = 0.2  # meters; rendered-vs-measured depth gate

    def __post_init__(self):
        if not 0 < self.theta_match <= 1:
            raise ValueError("theta_match must be in (0, 1]")
        if not 0 < self.theta_split < 1:
            raise ValueError("theta_split must be in (0, 1)")

    @staticmethod
    def for_sensor(width: int, height: int, voxel_size: float) -> "TrackerConfig":
        """Defaults scaled from the 160x120 reference resolution."""
        scale = (width * height) / (160 * 120)
        return TrackerConfig(min_pixels=max(1, round(50 * scale)), delta_depth=2 * voxel_size)


@dataclass
class TrackReport:
    tracked: int
    created: int
    split: int


def track(proposals, rendered, depth, cfg: TrackerConfig, segment_table, owner_submap: int):
    """Greedy smallest-first partition of proposal and rendered masks.

    proposals: list of (h, w) boolean masks. rendered: RenderedSegments.
    Returns (segment_id_image uint32, TrackReport). Fresh IDs are allocated
    from segment_table with the given owner submap.
    """
    depth = np.asarray(depth, dtype=np.float32)
    h, w = depth.shape
    if rendered.depth.shape != (h, w):
        raise GeometryError("rendered and depth dimensions differ")
    for m in proposals:
        if m.shape != (h, w):
            raise GeometryError("proposal mask dimensions differ from depth")
    valid = np.isfinite(depth)

    # (1) depth-gate rendered masks against the measured depth
    gate = valid & np.isfinite(rendered.depth) & (np.abs(rendered.depth - depth) <= cfg.delta_depth)
    gated: dict[int, np.ndarray] = {}
    for sid, mask in rendered.masks().items():
        gm = mask & gate
        if gm.any():
            gated[sid] = gm

    # (2) one work list, smallest first; rendered before proposals on area ties
    work = []
    for sid, mask in gated.items():
        work.append((int(mask.sum()), 0, sid, mask))
    for idx, mask in enumerate(proposals):
        pm = mask & valid
        if pm.any():
            work.append((int(pm.sum()), 1, idx, pm))
    work.sort(key=lambda item: item[:3])

    out = np.zeros((h, w), dtype=np.uint32)
    tracked_ids: set[int] = set()
    created = 0
    split = 0

    # (3) smallest-first scan; each item claims its still-unclaimed pixels
    for area, kind, ident, mask in work:
        unclaimed = mask & (out == 0)
        n_unclaimed = int(unclaimed.sum())
        if kind == 0:
            if n_unclaimed >= cfg.min_pixels:
                out[unclaimed] = ident
                tracked_ids.add(ident)
            continue
        # proposal: overlap against every rendered ID materialized so far or gated
        candidates = set(gated) | {int(s) for s in np.unique(out) if s != 0}
        best_k, best_r = 0, 0.0
        for k in sorted(candidates):
            claimed_k = (out == k)
            if k in gated:
                claimed_k = claimed_k | gated[k]
            r = int((mask & claimed_k).sum()) / area
            if r > best_r:
                best_k, best_r = k, r
        if best_r >= cfg.theta_match:
            ref_area = int(gated[best_k].sum()) if best_k in gated else int((out == best_k).sum())
            if ref_area > 0 and area / ref_area > cfg.theta_split:
                # same object: track under the existing ID
                out[unclaimed] = best_k
                tracked_ids.add(best_k)
            elif n_unclaimed >= cfg.min_pixels:
                fresh = segment_table.allocate(owner_submap)
                out[unclaimed] = fresh
                split += 1
        elif n_unclaimed >= cfg.min_pixels:
            fresh = segment_table.allocate(owner_submap)
            out[unclaimed] = fresh
            created += 1

    return out, TrackReport(tracked=len(tracked_ids), created=created, split=split)


# -- proposal backends ---------------------------------------------------

def sim_proposals(instance_image, part_image=None, split_parts=False, boundary_sigma=0, rng=None):
    """Ground-truth proposal masks from the simulator, optionally per part and with
    boundary noise (random dilation/erosion up to boundary_sigma pixels)."""
    source = part_image if (split_parts and part_image is not None) else instance_image
    source = np.asarray(source)
    masks = []
    for val in np.unique(source):
        if val < 0:
            continue
        masks.append(source == val)
    if boundary_sigma > 0:
        from scipy.ndimage import binary_dilation, binary_erosion

        if rng is None:
            raise ValueError("boundary noise needs the mission RNG")
        noisy = []
        for mask in masks:
            k = int(rng.integers(-boundary_sigma, boundary_sigma + 1))
            if k > 0:
                mask = binary_dilation(mask, iterations=k)
            elif k < 0:
                mask = binary_erosion(mask, iterations=-k)
            if mask.any():
                noisy.append(mask)
        masks = noisy
    return masks


# -- recorded-mask files (JSON lines, run-length encoded; see docs/formats.md) --

def rle_encode(mask: np.ndarray) -> list[int]:
    """[start, length, start, length, ...] runs of True over the flattened mask."""
    flat = np.asarray(mask, dtype=bool).ravel()
    edges = np.flatnonzero(np.diff(np.concatenate([[False], flat, [False]])))
    runs = []
    for start, end in zip(edges[::2], edges[1::2]):
        runs.extend([int(start), int(end - start)])
    return runs


def rle_decode(runs: list[int], shape) -> np.ndarray:
    flat = np.zeros(int(np.prod(shape)), dtype=bool)
    for start, length in zip(runs[::2], runs[1::2]):
        flat[start : start + length] = True
    return flat.reshape(shape)


def save_recorded_masks(path, frames: dict[int, list[np.ndarray]]):
    with open(path, "w") as f:
        for frame_idx in sorted(frames):
            masks = frames[frame_idx]
            record = {
                "frame": frame_idx,
                "shape": list(masks[0].shape) if masks else [0, 0],
                "masks": [rle_encode(m) for m in masks],
            }
            f.write(json.dumps(record) + "\n")


def load_recorded_masks(path) -> dict[int, list[np.ndarray]]:
    frames = {}
    try:
        with open(path) as f:
            for line in f:
                if not line.strip():
                    continue
                record = json.loads(line)
                shape = tuple(record["shape"])
                frames[record["frame"]] = [rle_decode(runs, shape) for runs in record["masks"]]
    except FileNotFoundError:
        raise
    return frames
