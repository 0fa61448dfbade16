# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled voxel-block kernels. Mirrors kernels/pure.py exactly."""

import math

import numpy as np

cimport numpy as cnp
from libc.math cimport floor, sqrt, isfinite, INFINITY

cnp.import_array()

BLOCK = 8
BLOCK_VOL = 512

cdef long long _KEY_MASK = (1 << 21) - 1
cdef long long _KEY_BIAS = 1 << 20


cdef inline long long c_pack_key(long long bx, long long by, long long bz) nogil:
    return (((bx + _KEY_BIAS) & _KEY_MASK) << 42) | (((by + _KEY_BIAS) & _KEY_MASK) << 21) | ((bz + _KEY_BIAS) & _KEY_MASK)


def pack_key(bx, by, bz):
    return int(c_pack_key(bx, by, bz))


def unpack_key(key):
    return (
        ((key >> 42) & int(_KEY_MASK)) - int(_KEY_BIAS),
        ((key >> 21) & int(_KEY_MASK)) - int(_KEY_BIAS),
        (key & int(_KEY_MASK)) - int(_KEY_BIAS),
    )


cdef class SubmapCore:
    """Sparse block-hashed voxel storage plus the per-ray hot loops."""

    cdef public double voxel_size
    cdef public dict block_index
    cdef public int n_blocks
    cdef public object log_odds
    cdef public object seg_ids
    cdef public object observed
    # cached views over the backing arrays; refreshed after growth
    cdef float[:, ::1] _lo
    cdef cnp.uint32_t[:, ::1] _seg
    cdef cnp.uint8_t[:, ::1] _obs
    cdef long long _last_key
    cdef int _last_row

    def __init__(self, voxel_size, initial_capacity=64):
        if voxel_size <= 0:
            raise ValueError("voxel_size must be positive")
        self.voxel_size = float(voxel_size)
        self.block_index = {}
        self.n_blocks = 0
        cap = max(1, int(initial_capacity))
        self.log_odds = np.zeros((cap, BLOCK_VOL), dtype=np.float32)
        self.seg_ids = np.zeros((cap, BLOCK_VOL), dtype=np.uint32)
        self.observed = np.zeros((cap, BLOCK_VOL), dtype=np.uint8)
        self._refresh_views()
        self._last_key = -1
        self._last_row = -1

    cdef void _refresh_views(self):
        self._lo = self.log_odds
        self._seg = self.seg_ids
        self._obs = self.observed

    # -- storage ----------------------------------------------------------

    cdef void _grow(self):
        cap = self.log_odds.shape[0] * 2
        for name in ("log_odds", "seg_ids", "observed"):
            old = getattr(self, name)
            new = np.zeros((cap, BLOCK_VOL), dtype=old.dtype)
            new[: old.shape[0]] = old
            setattr(self, name, new)
        self._refresh_views()

    cdef int _ensure(self, long long bx, long long by, long long bz):
        cdef long long key = c_pack_key(bx, by, bz)
        cdef int row
        if key == self._last_key:
            return self._last_row
        row_obj = self.block_index.get(key)
        if row_obj is None:
            if self.n_blocks == self.log_odds.shape[0]:
                self._grow()
            row = self.n_blocks
            self.block_index[key] = row
            self.n_blocks += 1
        else:
            row = row_obj
        self._last_key = key
        self._last_row = row
        return row

    cdef int _find(self, long long bx, long long by, long long bz):
        cdef long long key = c_pack_key(bx, by, bz)
        cdef int row
        if key == self._last_key:
            return self._last_row
        row_obj = self.block_index.get(key)
        row = -1 if row_obj is None else <int>row_obj
        self._last_key = key
        self._last_row = row
        return row

    def ensure_block(self, bx, by, bz):
        return self._ensure(bx, by, bz)

    def find_block(self, bx, by, bz):
        return self._find(bx, by, bz)

    def get_voxel(self, x, y, z):
        cdef int row = self._find(x >> 3, y >> 3, z >> 3)
        if row < 0:
            return None
        li = (x & 7) * 64 + (y & 7) * 8 + (z & 7)
        return (
            float(self.log_odds[row, li]),
            int(self.seg_ids[row, li]),
            bool(self.observed[row, li]),
        )

    def set_voxel(self, x, y, z, log_odds, seg_id=0, observed=True):
        cdef int row = self._ensure(x >> 3, y >> 3, z >> 3)
        li = (x & 7) * 64 + (y & 7) * 8 + (z & 7)
        self.log_odds[row, li] = log_odds
        self.seg_ids[row, li] = seg_id
        self.observed[row, li] = 1 if observed else 0

    def copy(self):
        dup = SubmapCore(self.voxel_size, max(1, self.n_blocks))
        dup.block_index = dict(self.block_index)
        dup.n_blocks = self.n_blocks
        dup.log_odds = self.log_odds[: self.n_blocks].copy()
        dup.seg_ids = self.seg_ids[: self.n_blocks].copy()
        dup.observed = self.observed[: self.n_blocks].copy()
        (<SubmapCore>dup)._refresh_views()
        (<SubmapCore>dup)._last_key = -1
        return dup

    def iter_blocks(self):
        for key, row in self.block_index.items():
            yield key, self.log_odds[row], self.seg_ids[row], self.observed[row]

    # -- hot loops --------------------------------------------------------

    def integrate(self, origin, rot, fx, fy, cx, cy, depth, ids, l_occ, l_free, clamp):
        cdef double vs = self.voxel_size
        cdef double band = vs
        cdef cnp.float32_t[:, ::1] d_view = np.ascontiguousarray(depth, dtype=np.float32)
        cdef cnp.uint32_t[:, ::1] id_view = None
        cdef bint have_ids = ids is not None
        if have_ids:
            id_view = np.ascontiguousarray(ids, dtype=np.uint32)
        cdef double[:, ::1] r = np.ascontiguousarray(rot, dtype=np.float64)
        cdef double ox = origin[0], oy = origin[1], oz = origin[2]
        cdef double c_fx = fx, c_fy = fy, c_cx = cx, c_cy = cy
        cdef double c_occ = l_occ, c_free = l_free, c_clamp = clamp
        cdef int h = d_view.shape[0], w = d_view.shape[1]
        cdef int u, v
        cdef long long updated = 0
        cdef int allocated_before = self.n_blocks
        cdef double dv, du, dd, pcx, pcy, pcz, px, py, pz, dist
        cdef unsigned int sid
        self._last_key = -1
        for v in range(h):
            dv = (v + 0.5 - c_cy) / c_fy
            for u in range(w):
                dd = d_view[v, u]
                if not isfinite(dd) or dd <= 0:
                    continue
                du = (u + 0.5 - c_cx) / c_fx
                pcx = du * dd
                pcy = dv * dd
                pcz = dd
                px = r[0, 0] * pcx + r[0, 1] * pcy + r[0, 2] * pcz + ox
                py = r[1, 0] * pcx + r[1, 1] * pcy + r[1, 2] * pcz + oy
                pz = r[2, 0] * pcx + r[2, 1] * pcy + r[2, 2] * pcz + oz
                dist = sqrt((px - ox) ** 2 + (py - oy) ** 2 + (pz - oz) ** 2)
                if dist <= 0:
                    continue
                sid = id_view[v, u] if have_ids else 0
                updated += self._march_update(
                    ox, oy, oz, (px - ox) / dist, (py - oy) / dist, (pz - oz) / dist,
                    dist, band, c_occ, c_free, c_clamp, sid,
                )
        return int(updated), self.n_blocks - allocated_before

    cdef long long _march_update(
        self, double ox, double oy, double oz, double dirx, double diry, double dirz,
        double dist, double band, double l_occ, double l_free, double clamp, unsigned int sid,
    ):
        cdef double vs = self.voxel_size
        cdef long long ix = <long long>floor(ox / vs)
        cdef long long iy = <long long>floor(oy / vs)
        cdef long long iz = <long long>floor(oz / vs)
        cdef int stepx = 1 if dirx > 0 else -1
        cdef int stepy = 1 if diry > 0 else -1
        cdef int stepz = 1 if dirz > 0 else -1
        cdef double tmaxx = ((ix + (stepx > 0)) * vs - ox) / dirx if dirx != 0 else INFINITY
        cdef double tmaxy = ((iy + (stepy > 0)) * vs - oy) / diry if diry != 0 else INFINITY
        cdef double tmaxz = ((iz + (stepz > 0)) * vs - oz) / dirz if dirz != 0 else INFINITY
        cdef double tdx = vs / dirx if dirx > 0 else (-vs / dirx if dirx < 0 else INFINITY)
        cdef double tdy = vs / diry if diry > 0 else (-vs / diry if diry < 0 else INFINITY)
        cdef double tdz = vs / dirz if dirz > 0 else (-vs / dirz if dirz < 0 else INFINITY)
        cdef double t_entry = 0.0
        cdef double t_end = dist + band
        cdef double t_exit, lo
        cdef long long updated = 0
        cdef int row, li
        while t_entry < t_end:
            t_exit = tmaxx
            if tmaxy < t_exit:
                t_exit = tmaxy
            if tmaxz < t_exit:
                t_exit = tmaxz
            row = self._ensure(ix >> 3, iy >> 3, iz >> 3)
            li = <int>((ix & 7) * 64 + (iy & 7) * 8 + (iz & 7))
            if t_exit <= dist - band:
                lo = self._lo[row, li] + l_free
            else:
                lo = self._lo[row, li] + l_occ
            if lo > clamp:
                lo = clamp
            elif lo < -clamp:
                lo = -clamp
            self._lo[row, li] = <float>lo
            self._obs[row, li] = 1
            if t_exit > dist - band and sid != 0 and lo > 0:
                self._seg[row, li] = sid
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

    cdef int _raycast(
        self, double ox, double oy, double oz, double dirx, double diry, double dirz,
        double max_range, double* out_t, long long* out_ixyz, unsigned int* out_seg,
    ):
        cdef double vs = self.voxel_size
        cdef long long ix = <long long>floor(ox / vs)
        cdef long long iy = <long long>floor(oy / vs)
        cdef long long iz = <long long>floor(oz / vs)
        cdef int stepx = 1 if dirx > 0 else -1
        cdef int stepy = 1 if diry > 0 else -1
        cdef int stepz = 1 if dirz > 0 else -1
        cdef double tmaxx = ((ix + (stepx > 0)) * vs - ox) / dirx if dirx != 0 else INFINITY
        cdef double tmaxy = ((iy + (stepy > 0)) * vs - oy) / diry if diry != 0 else INFINITY
        cdef double tmaxz = ((iz + (stepz > 0)) * vs - oz) / dirz if dirz != 0 else INFINITY
        cdef double tdx = vs / dirx if dirx > 0 else (-vs / dirx if dirx < 0 else INFINITY)
        cdef double tdy = vs / diry if diry > 0 else (-vs / diry if diry < 0 else INFINITY)
        cdef double tdz = vs / dirz if dirz > 0 else (-vs / dirz if dirz < 0 else INFINITY)
        cdef double t_entry = 0.0
        cdef int row, li
        while t_entry <= max_range:
            row = self._find(ix >> 3, iy >> 3, iz >> 3)
            if row >= 0:
                li = <int>((ix & 7) * 64 + (iy & 7) * 8 + (iz & 7))
                if self._obs[row, li] and self._lo[row, li] > 0:
                    out_t[0] = t_entry
                    out_ixyz[0] = ix
                    out_ixyz[1] = iy
                    out_ixyz[2] = iz
                    out_seg[0] = self._seg[row, li]
                    return 1
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
        return 0

    def raycast(self, origin, direction, max_range):
        cdef double t
        cdef long long ixyz[3]
        cdef unsigned int seg
        self._last_key = -1
        if self._raycast(
            origin[0], origin[1], origin[2], direction[0], direction[1], direction[2],
            max_range, &t, ixyz, &seg,
        ):
            return (t, int(ixyz[0]), int(ixyz[1]), int(ixyz[2]), int(seg))
        return None

    def render(self, origin, rot, fx, fy, cx, cy, width, height, max_range, out_depth, out_seg, out_sub, submap_id):
        cdef double[:, ::1] r = np.ascontiguousarray(rot, dtype=np.float64)
        cdef cnp.float32_t[:, ::1] od = out_depth
        cdef cnp.uint32_t[:, ::1] osg = out_seg
        cdef cnp.int32_t[:, ::1] osb = out_sub
        cdef double ox = origin[0], oy = origin[1], oz = origin[2]
        cdef double c_fx = fx, c_fy = fy, c_cx = cx, c_cy = cy, c_max = max_range
        cdef int w = width, h = height, sub = submap_id
        cdef int u, v
        cdef double du, dv, norm, dcx, dcy, dcz, dx, dy, dz, t, zdepth
        cdef long long ixyz[3]
        cdef unsigned int seg
        self._last_key = -1
        for v in range(h):
            dv = (v + 0.5 - c_cy) / c_fy
            for u in range(w):
                du = (u + 0.5 - c_cx) / c_fx
                norm = sqrt(du * du + dv * dv + 1.0)
                dcx = du / norm
                dcy = dv / norm
                dcz = 1.0 / norm
                dx = r[0, 0] * dcx + r[0, 1] * dcy + r[0, 2] * dcz
                dy = r[1, 0] * dcx + r[1, 1] * dcy + r[1, 2] * dcz
                dz = r[2, 0] * dcx + r[2, 1] * dcy + r[2, 2] * dcz
                if self._raycast(ox, oy, oz, dx, dy, dz, c_max, &t, ixyz, &seg):
                    zdepth = t / norm
                    if zdepth < od[v, u]:
                        od[v, u] = <float>zdepth
                        osg[v, u] = seg
                        osb[v, u] = sub

    def classify_points(self, points):
        pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        cdef double[:, ::1] p = pts
        cdef cnp.ndarray[cnp.int8_t, ndim=1] out = np.zeros(p.shape[0], dtype=np.int8)
        cdef cnp.int8_t[::1] o = out
        cdef double vs = self.voxel_size
        cdef Py_ssize_t i
        cdef long long ix, iy, iz
        cdef int row, li
        self._last_key = -1
        for i in range(p.shape[0]):
            ix = <long long>floor(p[i, 0] / vs)
            iy = <long long>floor(p[i, 1] / vs)
            iz = <long long>floor(p[i, 2] / vs)
            row = self._find(ix >> 3, iy >> 3, iz >> 3)
            if row < 0:
                continue
            li = <int>((ix & 7) * 64 + (iy & 7) * 8 + (iz & 7))
            if not self._obs[row, li]:
                continue
            o[i] = 2 if self._lo[row, li] > 0 else 1
        return out
