"""Tri-state voxel partitions carved from LiDAR scans.

Every voxel is labeled OCC (contains at least one hit point), FREE
(traversed by a ray before its hit, or up to max_range for misses), or UNK
(everything else). The label codes 1/2/3 follow the reference convention.
Ray traversal uses exact 3-D DDA voxel walking; when a voxel receives
conflicting evidence, OCC beats FREE beats UNK: a hit is direct surface
evidence, a pass-through only indirect.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .lidar import SensorScan

OCC = 1
FREE = 2
UNK = 3

LABEL_NAMES = {OCC: "OCC", FREE: "FREE", UNK: "UNK"}


@dataclass
class VoxelPartition:
    origin: np.ndarray        # (3,) lower corner of voxel (0,0,0) [m]
    voxel_size: float         # [m]
    labels: np.ndarray        # (Vx, Vy, Vz) uint8 of {OCC, FREE, UNK}
    no_rays: bool = False     # warning flag: carved from zero rays (all UNK)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.labels.shape

    @property
    def domain_hi(self) -> np.ndarray:
        return self.origin + self.voxel_size * np.asarray(self.labels.shape)

    def voxel_of(self, pos) -> np.ndarray:
        """Containing-voxel indices (floor), clipped into the grid."""
        pos = np.atleast_2d(np.asarray(pos, dtype=np.float64))
        idx = np.floor((pos - self.origin) / self.voxel_size).astype(np.int64)
        return np.clip(idx, 0, np.asarray(self.labels.shape) - 1)

    def label_at(self, pos) -> np.ndarray:
        v = self.voxel_of(pos)
        return self.labels[v[:, 0], v[:, 1], v[:, 2]]

    def voxel_centers(self, idx) -> np.ndarray:
        idx = np.atleast_2d(np.asarray(idx))
        return self.origin + (idx + 0.5) * self.voxel_size

    def label_counts(self) -> dict[str, int]:
        return {
            name: int(np.count_nonzero(self.labels == code))
            for code, name in LABEL_NAMES.items()
        }


@njit(cache=True)
def _carve_kernel(labels, origin, h, ray_o, ray_d, t_end, skip_end, end_vox):
    """Mark voxels traversed by each ray FREE (UNK only; OCC is applied by
    the caller afterwards and wins). Rays are clipped to the grid box;
    traversal stops before end_vox when skip_end is set (hit voxels)."""
    nx, ny, nz = labels.shape
    for r in range(ray_o.shape[0]):
        ta = 0.0
        tb = t_end[r]
        ok = True
        for a in range(3):
            o = ray_o[r, a] - origin[a]
            d = ray_d[r, a]
            lo = 0.0
            hi = labels.shape[a] * h
            if abs(d) < 1e-300:
                if o < lo or o > hi:
                    ok = False
                    break
            else:
                t1 = (lo - o) / d
                t2 = (hi - o) / d
                if t1 > t2:
                    t1, t2 = t2, t1
                if t1 > ta:
                    ta = t1
                if t2 < tb:
                    tb = t2
        if not ok or ta > tb:
            continue

        # entry voxel
        vx = int(np.floor((ray_o[r, 0] + ta * ray_d[r, 0] - origin[0]) / h))
        vy = int(np.floor((ray_o[r, 1] + ta * ray_d[r, 1] - origin[1]) / h))
        vz = int(np.floor((ray_o[r, 2] + ta * ray_d[r, 2] - origin[2]) / h))
        if vx < 0:
            vx = 0
        if vy < 0:
            vy = 0
        if vz < 0:
            vz = 0
        if vx > nx - 1:
            vx = nx - 1
        if vy > ny - 1:
            vy = ny - 1
        if vz > nz - 1:
            vz = nz - 1

        sx = 1 if ray_d[r, 0] > 0 else (-1 if ray_d[r, 0] < 0 else 0)
        sy = 1 if ray_d[r, 1] > 0 else (-1 if ray_d[r, 1] < 0 else 0)
        sz = 1 if ray_d[r, 2] > 0 else (-1 if ray_d[r, 2] < 0 else 0)

        big = 1.0e308
        if sx != 0:
            bx = origin[0] + (vx + (1 if sx > 0 else 0)) * h
            tmx = (bx - ray_o[r, 0]) / ray_d[r, 0]
            tdx = h / abs(ray_d[r, 0])
        else:
            tmx = big
            tdx = big
        if sy != 0:
            by = origin[1] + (vy + (1 if sy > 0 else 0)) * h
            tmy = (by - ray_o[r, 1]) / ray_d[r, 1]
            tdy = h / abs(ray_d[r, 1])
        else:
            tmy = big
            tdy = big
        if sz != 0:
            bz = origin[2] + (vz + (1 if sz > 0 else 0)) * h
            tmz = (bz - ray_o[r, 2]) / ray_d[r, 2]
            tdz = h / abs(ray_d[r, 2])
        else:
            tmz = big
            tdz = big

        while True:
            if skip_end[r] and vx == end_vox[r, 0] and vy == end_vox[r, 1] and vz == end_vox[r, 2]:
                break
            if labels[vx, vy, vz] == UNK:
                labels[vx, vy, vz] = FREE
            if tmx <= tmy and tmx <= tmz:
                if tmx > tb:
                    break
                vx += sx
                if vx < 0 or vx >= nx:
                    break
                tmx += tdx
            elif tmy <= tmz:
                if tmy > tb:
                    break
                vy += sy
                if vy < 0 or vy >= ny:
                    break
                tmy += tdy
            else:
                if tmz > tb:
                    break
                vz += sz
                if vz < 0 or vz >= nz:
                    break
                tmz += tdz


def carve(scans: list[SensorScan], bounds_lo, bounds_hi, voxel_size: float) -> VoxelPartition:
    """Build the tri-state partition from ray records.

    Zero rays is not an error: the result is an all-UNK partition with its
    no_rays warning flag set.
    """
    if voxel_size <= 0:
        raise ValueError("voxel_size must be positive")
    lo = np.asarray(bounds_lo, dtype=np.float64)
    hi = np.asarray(bounds_hi, dtype=np.float64)
    if not np.all(hi > lo):
        raise ValueError("degenerate bounds")
    dims = np.maximum(1, np.ceil((hi - lo) / voxel_size - 1e-9).astype(np.int64))
    labels = np.full(tuple(dims), UNK, dtype=np.uint8)

    n_rays = sum(s.directions.shape[0] for s in scans)
    if n_rays == 0:
        return VoxelPartition(origin=lo, voxel_size=voxel_size, labels=labels, no_rays=True)

    ray_o = np.concatenate([np.broadcast_to(s.origin, s.directions.shape) for s in scans])
    ray_d = np.concatenate([s.directions for s in scans])
    t_end = np.concatenate([s.distance for s in scans])
    is_hit = np.concatenate([s.is_hit for s in scans])

    end_pts = ray_o + t_end[:, None] * ray_d
    end_vox = np.floor((end_pts - lo) / voxel_size).astype(np.int64)

    _carve_kernel(
        labels,
        np.ascontiguousarray(lo),
        float(voxel_size),
        np.ascontiguousarray(ray_o),
        np.ascontiguousarray(ray_d),
        np.ascontiguousarray(t_end),
        np.ascontiguousarray(is_hit),
        np.ascontiguousarray(end_vox),
    )

    # OCC wins over FREE: hit-point voxels are direct surface evidence.
    hits = end_pts[is_hit]
    inside = np.all((hits >= lo) & (hits < hi), axis=1)
    occ = np.floor((hits[inside] - lo) / voxel_size).astype(np.int64)
    occ = np.minimum(occ, dims - 1)
    labels[occ[:, 0], occ[:, 1], occ[:, 2]] = OCC

    return VoxelPartition(origin=lo, voxel_size=voxel_size, labels=labels)
