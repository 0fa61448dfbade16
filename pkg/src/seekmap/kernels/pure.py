"""Pure-Python voxel-block kernels (fallback when the compiled extension is unavailable).

Storage layout shared with the compiled backend: a dict mapping packed block
coordinates to a row in (n, 512) numpy arrays. Blocks are 8x8x8 voxels, local
index = lx*64 + ly*8 + lz.
"""

from __future__ import annotations

import math

import numpy as np

BLOCK = 8
BLOCK_VOL = BLOCK * BLOCK * BLOCK
_KEY_MASK = (1 << 21) - 1
_KEY_BIAS = 1 << 20


def pack_key(bx: int, by: int, bz: int) -> int:
    return (((bx + _KEY_BIAS) & _KEY_MASK) << 42) | (((by + _KEY_BIAS) & _KEY_MASK) << 21) | ((bz + _KEY_BIAS) & _KEY_MASK)


def unpack_key(key: int):
    return (
        ((key >> 42) & _KEY_MASK) - _KEY_BIAS,
        ((key >> 21) & _KEY_MASK) - _KEY_BIAS,
        (key & _KEY_MASK) - _KEY_BIAS,
    )


class SubmapCore:
    """Sparse block-hashed voxel storage plus the per-ray hot loops."""

    def __init__(self, voxel_size: float, initial_capacity: int = 64):
        if voxel_size <= 0:
            raise ValueError("voxel_size must be positive")
        self.voxel_size = float(voxel_size)
        self.block_index: dict[int, int] = {}
        self.n_blocks = 0
        cap = max(1, initial_capacity)
        self.log_odds = np.zeros((cap, BLOCK_VOL), dtype=np.float32)
        self.seg_ids = np.zeros((cap, BLOCK_VOL), dtype=np.uint32)
        self.observed = np.zeros((cap, BLOCK_VOL), dtype=np.uint8)

    # -- storage ----------------------------------------------------------

    def _grow(self):
        cap = self.log_odds.shape[0] * 2
        for name in ("log_odds", "seg_ids", "observed"):
            old = getattr(self, name)
            new = np.zeros((cap, BLOCK_VOL), dtype=old.dtype)
            new[: old.shape[0]] = old
            setattr(self, name, new)

    def ensure_block(self, bx: int, by: int, bz: int) -> int:
        key = pack_key(bx, by, bz)
        row = self.block_index.get(key)
        if row is None:
            if self.n_blocks == self.log_odds.shape[0]:
                self._grow()
            row = self.n_blocks
            self.block_index[key] = row
            self.n_blocks += 1
        return row

    def find_block(self, bx: int, by: int, bz: int) -> int:
        return self.block_index.get(pack_key(bx, by, bz), -1)

    def get_voxel(self, x: int, y: int, z: int):
        """(log_odds, segment_id, observed) at integer voxel coords, or None if unallocated."""
        row = self.find_block(x >> 3, y >> 3, z >> 3)
        if row < 0:
            return None
        li = (x & 7) * 64 + (y & 7) * 8 + (z & 7)
        return (
            float(self.log_odds[row, li]),
            int(self.seg_ids[row, li]),
            bool(self.observed[row, li]),
        )

    def set_voxel(self, x: int, y: int, z: int, log_odds: float, seg_id: int = 0, observed: bool = True):
        row = self.ensure_block(x >> 3, y >> 3, z >> 3)
        li = (x & 7) * 64 + (y & 7) * 8 + (z & 7)
        self.log_odds[row, li] = log_odds
        self.seg_ids[row, li] = seg_id
        self.observed[row, li] = 1 if observed else 0

    def copy(self) -> "SubmapCore":
        dup = SubmapCore.__new__(SubmapCore)
        dup.voxel_size = self.voxel_size
        dup.block_index = dict(self.block_index)
        dup.n_blocks = self.n_blocks
        dup.log_odds = self.log_odds[: self.n_blocks].copy()
        dup.seg_ids = self.seg_ids[: self.n_blocks].copy()
        dup.observed = self.observed[: self.n_blocks].copy()
        return dup

    def iter_blocks(self):
        """Yield (key, log_odds[512], seg_ids[512], observed[512]) per allocated block."""
        for key, row in self.block_index.items():
            yield key, self.log_odds[row], self.seg_ids[row], self.observed[row]

    # -- hot loops --------------------------------------------------------

    def integrate(
        self,
        origin,
        rot,
        fx,
        fy,
        cx,
        cy,
        depth,
        ids,
        l_occ,
        l_free,
        clamp,
    ):
        """Carve free space and mark the surface band for every valid depth pixel.

        origin/rot place camera rays in the submap frame. Returns
        (updated_voxels, allocated_blocks).
        """
        vs = self.voxel_size
        band = vs
        h, w = depth.shape
        ox, oy, oz = float(origin[0]), float(origin[1]), float(origin[2])
        r = np.asarray(rot, dtype=np.float64)
        updated = 0
        allocated_before = self.n_blocks
        have_ids = ids is not None
        for v in range(h):
            dv = (v + 0.5 - cy) / fy
            for u in range(w):
                d = float(depth[v, u])
                if not math.isfinite(d) or d <= 0:
                    continue
                du = (u + 0.5 - cx) / fx
                pcx, pcy, pcz = du * d, dv * d, d
                px = r[0, 0] * pcx + r[0, 1] * pcy + r[0, 2] * pcz + ox
                py = r[1, 0] * pcx + r[1, 1] * pcy + r[1, 2] * pcz + oy
                pz = r[2, 0] * pcx + r[2, 1] * pcy + r[2, 2] * pcz + oz
                dist = math.sqrt((px - ox) ** 2 + (py - oy) ** 2 + (pz - oz) ** 2)
                if dist <= 0:
                    continue
                dirx, diry, dirz = (px - ox) / dist, (py - oy) / dist, (pz - oz) / dist
                sid = int(ids[v, u]) if have_ids else 0
                updated += self._march_update(ox, oy, oz, dirx, diry, dirz, dist, band, l_occ, l_free, clamp, sid)
        return updated, self.n_blocks - allocated_before

    def _march_update(self, ox, oy, oz, dirx, diry, dirz, dist, band, l_occ, l_free, clamp, sid):
        vs = self.voxel_size
        ix = math.floor(ox / vs)
        iy = math.floor(oy / vs)
        iz = math.floor(oz / vs)
        stepx = 1 if dirx > 0 else -1
        stepy = 1 if diry > 0 else -1
        stepz = 1 if dirz > 0 else -1
        big = float("inf")
        tmaxx = ((ix + (stepx > 0)) * vs - ox) / dirx if dirx != 0 else big
        tmaxy = ((iy + (stepy > 0)) * vs - oy) / diry if diry != 0 else big
        tmaxz = ((iz + (stepz > 0)) * vs - oz) / dirz if dirz != 0 else big
        tdx = abs(vs / dirx) if dirx != 0 else big
        tdy = abs(vs / diry) if diry != 0 else big
        tdz = abs(vs / dirz) if dirz != 0 else big
        t_entry = 0.0
        t_end = dist + band
        updated = 0
        while t_entry < t_end:
            t_exit = min(tmaxx, tmaxy, tmaxz)
            row = self.ensure_block(ix >> 3, iy >> 3, iz >> 3)
            li = (ix & 7) * 64 + (iy & 7) * 8 + (iz & 7)
            # accumulate in float64 (the compiled backend uses doubles too)
            if t_exit <= dist - band:
                lo = float(self.log_odds[row, li]) + l_free
            else:
                lo = float(self.log_odds[row, li]) + l_occ
            lo = min(clamp, max(-clamp, lo))
            self.log_odds[row, li] = lo
            self.observed[row, li] = 1
            if t_exit > dist - band and sid != 0 and lo > 0:
                self.seg_ids[row, li] = sid
            updated += 1
            if tmaxx <= tmaxy and tmaxx <= tmaxz:
                ix += stepx
                t_entry = tmaxx
                tmaxx += tdx
            elif tmaxy <= tmaxz:
                iy += stepy
                t_entry = tmaxy
                tmaxy += tdy
            else:
                iz += stepz
                t_entry = tmaxz
                tmaxz += tdz
        return updated

    def raycast(self, origin, direction, max_range):
        """First occupied voxel along the ray; returns (t_entry, ix, iy, iz, seg_id) or None."""
        vs = self.voxel_size
        ox, oy, oz = float(origin[0]), float(origin[1]), float(origin[2])
        dirx, diry, dirz = float(direction[0]), float(direction[1]), float(direction[2])
        ix = math.floor(ox / vs)
        iy = math.floor(oy / vs)
        iz = math.floor(oz / vs)
        stepx = 1 if dirx > 0 else -1
        stepy = 1 if diry > 0 else -1
        stepz = 1 if dirz > 0 else -1
        big = float("inf")
        tmaxx = ((ix + (stepx > 0)) * vs - ox) / dirx if dirx != 0 else big
        tmaxy = ((iy + (stepy > 0)) * vs - oy) / diry if diry != 0 else big
        tmaxz = ((iz + (stepz > 0)) * vs - oz) / dirz if dirz != 0 else big
        tdx = abs(vs / dirx) if dirx != 0 else big
        tdy = abs(vs / diry) if diry != 0 else big
        tdz = abs(vs / dirz) if dirz != 0 else big
        t_entry = 0.0
        while t_entry <= max_range:
            row = self.find_block(ix >> 3, iy >> 3, iz >> 3)
            if row >= 0:
                li = (ix & 7) * 64 + (iy & 7) * 8 + (iz & 7)
                if self.observed[row, li] and self.log_odds[row, li] > 0:
                    return (t_entry, ix, iy, iz, int(self.seg_ids[row, li]))
            if tmaxx <= tmaxy and tmaxx <= tmaxz:
                ix += stepx
                t_entry = tmaxx
                tmaxx += tdx
            elif tmaxy <= tmaxz:
                iy += stepy
                t_entry = tmaxy
                tmaxy += tdy
            else:
                iz += stepz
                t_entry = tmaxz
                tmaxz += tdz
        return None

    def render(self, origin, rot, fx, fy, cx, cy, width, height, max_range, out_depth, out_seg, out_sub, submap_id):
        """Per-pixel raycast; composites into out_* where this submap's hit is nearer.

        out_depth holds z-depth (inf = miss so far).
        """
        r = np.asarray(rot, dtype=np.float64)
        for v in range(height):
            dv = (v + 0.5 - cy) / fy
            for u in range(width):
                du = (u + 0.5 - cx) / fx
                norm = math.sqrt(du * du + dv * dv + 1.0)
                dcx, dcy, dcz = du / norm, dv / norm, 1.0 / norm
                dx = r[0, 0] * dcx + r[0, 1] * dcy + r[0, 2] * dcz
                dy = r[1, 0] * dcx + r[1, 1] * dcy + r[1, 2] * dcz
                dz = r[2, 0] * dcx + r[2, 1] * dcy + r[2, 2] * dcz
                hit = self.raycast(origin, (dx, dy, dz), max_range)
                if hit is None:
                    continue
                zdepth = hit[0] / norm
                if zdepth < out_depth[v, u]:
                    out_depth[v, u] = zdepth
                    out_seg[v, u] = hit[4]
                    out_sub[v, u] = submap_id

    def classify_points(self, points) -> np.ndarray:
        """Tri-state per submap-frame point: 0 unknown, 1 free, 2 occupied."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        out = np.zeros(len(pts), dtype=np.int8)
        vs = self.voxel_size
        for i, (x, y, z) in enumerate(pts):
            ix = math.floor(x / vs)
            iy = math.floor(y / vs)
            iz = math.floor(z / vs)
            row = self.find_block(ix >> 3, iy >> 3, iz >> 3)
            if row < 0:
                continue
            li = (ix & 7) * 64 + (iy & 7) * 8 + (iz & 7)
            if not self.observed[row, li]:
                continue
            out[i] = 2 if self.log_odds[row, li] > 0 else 1
        return out
