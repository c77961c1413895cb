"""Exact Euclidean distance transforms on 3-D voxel grids.

Distances are measured between voxel centers, in meters (voxel units times
the voxel edge length). The transform is separable: the first pass scans
every grid line along x for its nearest seed cell, the remaining two passes
minimize lower envelopes of parabolas over the squared distances of the
previous pass. All intermediate squared distances are sums of integer
squares held in float64, so results are exact up to the final square root
and match a brute-force nearest-seed search bitwise.

Each transform can also report the generating seed cell of every voxel.
The validation harness uses generator jumps to detect ridge crossings of
the distance field, where its gradient is discontinuous.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# Distance reported where no seed exists (empty seed set). [m]
SENTINEL = 1.0e9

# Internal marker for "no parabola here"; far above any reachable squared
# distance in voxel units but small enough that envelope arithmetic stays
# finite.
_NO_SEED = 1.0e30


@njit(cache=True)
def _envelope_lines(f, out, arg):
    """Lower-envelope squared-distance pass over every row of f.

    f:   (L, n) squared distances from the previous pass, _NO_SEED where
         no seed reaches the cell yet.
    out: (L, n) transformed squared distances.
    arg: (L, n) int32 row position of the winning parabola, -1 if none.
    """
    L, n = f.shape
    v = np.empty(n, dtype=np.int64)
    z = np.empty(n + 1, dtype=np.float64)
    for line in range(L):
        k = -1
        for q in range(n):
            fq = f[line, q]
            if fq >= _NO_SEED:
                continue
            if k < 0:
                k = 0
                v[0] = q
                z[0] = -_NO_SEED
                z[1] = _NO_SEED
                continue
            s = ((fq + q * q) - (f[line, v[k]] + v[k] * v[k])) / (2.0 * (q - v[k]))
            while s <= z[k]:
                k -= 1
                s = ((fq + q * q) - (f[line, v[k]] + v[k] * v[k])) / (2.0 * (q - v[k]))
            k += 1
            v[k] = q
            z[k] = s
            z[k + 1] = _NO_SEED
        if k < 0:
            for q in range(n):
                out[line, q] = _NO_SEED
                arg[line, q] = -1
            continue
        j = 0
        for q in range(n):
            while z[j + 1] < q:
                j += 1
            vq = v[j]
            dq = q - vq
            out[line, q] = dq * dq + f[line, vq]
            arg[line, q] = vq


def _nearest_seed_along_x(mask):
    """First pass: per (y, z) line, squared distance to the nearest seed
    along x and that seed's x index (-1 if the line has no seed)."""
    n = mask.shape[0]
    idx = np.arange(n, dtype=np.int64).reshape(-1, 1, 1)
    left = np.maximum.accumulate(np.where(mask, idx, -1), axis=0)
    right = np.flip(
        np.minimum.accumulate(np.flip(np.where(mask, idx, 2 * n), axis=0), axis=0),
        axis=0,
    )
    dl = np.where(left >= 0, idx - left, n + 1)
    dr = np.where(right < 2 * n, right - idx, n + 1)
    use_left = dl <= dr
    d = np.where(use_left, dl, dr)
    site = np.where(use_left, left, right)
    none = d > n
    d2 = np.where(none, _NO_SEED, (d * d).astype(np.float64))
    return d2, np.where(none, -1, site).astype(np.int32)


def _envelope_pass(d2, axis):
    """Apply the envelope transform along `axis`; returns (d2', argpos)."""
    moved = np.ascontiguousarray(np.moveaxis(d2, axis, -1))
    shape = moved.shape
    flat = moved.reshape(-1, shape[-1])
    out = np.empty_like(flat)
    arg = np.empty(flat.shape, dtype=np.int32)
    _envelope_lines(flat, out, arg)
    out = np.moveaxis(out.reshape(shape), -1, axis)
    arg = np.moveaxis(arg.reshape(shape), -1, axis)
    return out, arg


def distance_transform_with_sites(mask, voxel_size):
    """Exact EDT of `mask` plus the generating seed cell per voxel.

    Returns (dist, sites): dist is (X, Y, Z) float64 meters (SENTINEL where
    the seed set is empty), sites is (X, Y, Z, 3) int32 seed indices (-1
    where none).
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 3:
        raise ValueError(f"expected a 3-D mask, got shape {mask.shape}")
    if voxel_size <= 0:
        raise ValueError("voxel_size must be positive")
    X, Y, Z = mask.shape
    sites = np.empty(mask.shape + (3,), dtype=np.int32)
    if not mask.any():
        sites.fill(-1)
        return np.full(mask.shape, SENTINEL, dtype=np.float64), sites

    d2, sx = _nearest_seed_along_x(mask)
    sites[..., 0] = sx
    sites[..., 1] = np.arange(Y, dtype=np.int32)[None, :, None]
    sites[..., 2] = np.arange(Z, dtype=np.int32)[None, None, :]
    sites[sx < 0] = -1

    for axis in (1, 2):
        d2, arg = _envelope_pass(d2, axis)
        take = np.clip(arg, 0, mask.shape[axis] - 1)
        sites = np.take_along_axis(sites, np.expand_dims(take, -1), axis=axis)
        sites[arg < 0] = -1

    dist = np.sqrt(d2) * voxel_size
    dist[sites[..., 0] < 0] = SENTINEL
    return dist, sites


def distance_transform(mask, voxel_size):
    """Exact EDT of `mask` in meters; SENTINEL everywhere if mask is empty."""
    return distance_transform_with_sites(mask, voxel_size)[0]
