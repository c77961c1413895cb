"""Distance/gradient grids over a voxel partition and their interpolation.

Built once per partition (the expensive O(V^3) step), then queried in O(1)
per position:

  d_occ    distance to the nearest hit-bearing (OCC) voxel center
  d_trust  penetration depth into FREE: distance to the nearest non-FREE
           voxel center, zero outside FREE
  d_unk    distance to the nearest UNK voxel center, zero inside UNK

plus one central-difference gradient grid per distance grid (dimensionless,
one-sided at the grid boundary). Queries trilinearly interpolate distances
and gradients from the surrounding eight voxel-center nodes; the region
label is taken from the containing voxel and never interpolated (labels are
categorical). Positions outside the domain clamp to the boundary cell and
are flagged rather than rejected, so relaxation dynamics stay total.

The grid dump format (magic `EGSF`) stores labels and the three distance
grids (f32, x-fastest, little-endian); gradients are recomputed on load.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .edt import SENTINEL, distance_transform_with_sites
from .grid import FREE, OCC, UNK, VoxelPartition

EGSF_MAGIC = b"EGSF"
EGSF_VERSION = 1


@dataclass
class DistanceFieldSet:
    origin: np.ndarray          # (3,) [m]
    voxel_size: float           # [m]
    d_occ: np.ndarray           # (X, Y, Z) [m]
    d_trust: np.ndarray         # (X, Y, Z) [m]
    d_unk: np.ndarray           # (X, Y, Z) [m]
    grad_occ: np.ndarray        # (X, Y, Z, 3) dimensionless
    grad_trust: np.ndarray
    grad_unk: np.ndarray
    occ_empty: bool = False     # no occupied evidence: E_occ disabled downstream
    # Generating seed cell per voxel, (X, Y, Z, 3) int32 or None after a
    # load (recomputable from labels). Used to detect distance-field ridges.
    sites_occ: np.ndarray | None = None
    sites_trust: np.ndarray | None = None
    sites_unk: np.ndarray | None = None

    def __post_init__(self):
        self._flat_cache = None
        self._ridge_cache = {}

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.d_occ.shape

    def _flat(self) -> np.ndarray:
        """(12, V) channel stack used by the vectorized gather:
        d_occ, d_trust, d_unk, then the three gradient grids' components."""
        if self._flat_cache is None:
            grids = [self.d_occ, self.d_trust, self.d_unk]
            for g in (self.grad_occ, self.grad_trust, self.grad_unk):
                grids.extend(g[..., k] for k in range(3))
            self._flat_cache = np.ascontiguousarray(
                np.stack([np.ravel(g) for g in grids], axis=0)
            )
        return self._flat_cache


@dataclass
class FieldQuery:
    """Vectorized query result at N positions."""

    label: np.ndarray      # (N,) uint8, containing-voxel label
    d_occ: np.ndarray      # (N,) [m]
    d_trust: np.ndarray    # (N,) [m]
    d_unk: np.ndarray      # (N,) [m]
    g_occ: np.ndarray      # (N, 3) dimensionless
    g_trust: np.ndarray
    g_unk: np.ndarray
    clamped: np.ndarray    # (N,) bool, position was outside the domain

    def take(self, sel) -> "FieldQuery":
        return FieldQuery(
            label=self.label[sel],
            d_occ=self.d_occ[sel],
            d_trust=self.d_trust[sel],
            d_unk=self.d_unk[sel],
            g_occ=self.g_occ[sel],
            g_trust=self.g_trust[sel],
            g_unk=self.g_unk[sel],
            clamped=self.clamped[sel],
        )


def _gradient_grid(d: np.ndarray, h: float) -> np.ndarray:
    """Central differences (one-sided at boundaries), divided by the voxel
    size so components are dimensionless. A sentinel-valued field (empty
    seed set) has zero gradient by definition."""
    if np.all(d >= SENTINEL):
        return np.zeros(d.shape + (3,), dtype=np.float64)
    comps = []
    for a in range(3):
        if d.shape[a] == 1:
            comps.append(np.zeros_like(d))
        else:
            comps.append(np.gradient(d, h, axis=a))
    return np.stack(comps, axis=-1)


def build_distance_fields(partition: VoxelPartition, cloud: np.ndarray | None = None) -> DistanceFieldSet:
    """Distance and gradient grids for a partition.

    The OCC seed set equals the set of voxels containing cloud points (carve
    gives hit voxels OCC priority), so the cloud argument is only validated
    against the partition, not re-voxelized. An empty cloud leaves d_occ at
    the sentinel everywhere and sets occ_empty, which disables the occupied
    attraction downstream.
    """
    h = partition.voxel_size
    labels = partition.labels

    if cloud is not None and len(cloud):
        cloud = np.asarray(cloud, dtype=np.float64)
        inside = np.all((cloud >= partition.origin) & (cloud < partition.domain_hi), axis=1)
        if inside.any():
            v = partition.voxel_of(cloud[inside])
            if not np.all(labels[v[:, 0], v[:, 1], v[:, 2]] == OCC):
                raise ValueError("cloud and partition disagree: hit voxel not OCC "
                                 "(coordinate frames likely mismatch)")

    d_occ, s_occ = distance_transform_with_sites(labels == OCC, h)
    d_trust, s_trust = distance_transform_with_sites(labels != FREE, h)
    d_trust[labels != FREE] = 0.0
    d_unk, s_unk = distance_transform_with_sites(labels == UNK, h)

    return DistanceFieldSet(
        origin=partition.origin.copy(),
        voxel_size=h,
        d_occ=d_occ,
        d_trust=d_trust,
        d_unk=d_unk,
        grad_occ=_gradient_grid(d_occ, h),
        grad_trust=_gradient_grid(d_trust, h),
        grad_unk=_gradient_grid(d_unk, h),
        occ_empty=not bool(np.any(labels == OCC)),
        sites_occ=s_occ,
        sites_trust=s_trust,
        sites_unk=s_unk,
    )


# ---------------------------------------------------------------------------
# trilinear interpolation
# ---------------------------------------------------------------------------

def _interp_setup(fields: DistanceFieldSet, pos: np.ndarray):
    """Cell base indices, fractional offsets and corner gather indices for
    interpolation on the voxel-center node lattice."""
    dims = np.asarray(fields.dims)
    h = fields.voxel_size
    u = (pos - fields.origin) / h - 0.5
    i0 = np.clip(np.floor(u).astype(np.int64), 0, np.maximum(dims - 2, 0))
    t = np.clip(u - i0, 0.0, 1.0)
    i1 = np.minimum(i0 + 1, dims - 1)

    X, Y, Z = dims
    corners = np.empty((pos.shape[0], 8), dtype=np.int64)
    for c in range(8):
        cx = i1[:, 0] if (c & 4) else i0[:, 0]
        cy = i1[:, 1] if (c & 2) else i0[:, 1]
        cz = i1[:, 2] if (c & 1) else i0[:, 2]
        corners[:, c] = (cx * Y + cy) * Z + cz

    wx = np.stack([1.0 - t[:, 0], t[:, 0]], axis=1)
    wy = np.stack([1.0 - t[:, 1], t[:, 1]], axis=1)
    wz = np.stack([1.0 - t[:, 2], t[:, 2]], axis=1)
    w8 = np.empty((pos.shape[0], 8))
    for c in range(8):
        w8[:, c] = wx[:, (c >> 2) & 1] * wy[:, (c >> 1) & 1] * wz[:, c & 1]
    return corners, w8, t


def _check_positions(pos) -> np.ndarray:
    pos = np.atleast_2d(np.asarray(pos, dtype=np.float64))
    if pos.ndim != 2 or pos.shape[1] != 3:
        raise ValueError(f"positions must be (N, 3), got {pos.shape}")
    if np.isnan(pos).any():
        raise ValueError("NaN position rejected")
    return pos


def query(fields: DistanceFieldSet, partition: VoxelPartition, pos) -> FieldQuery:
    """Interpolated distances and gradients plus the containing-voxel label
    at each position. Out-of-domain positions clamp to the boundary cell
    and are flagged."""
    pos = _check_positions(pos)
    corners, w8, _ = _interp_setup(fields, pos)
    flat = fields._flat()
    vals = flat[:, corners]                     # (12, N, 8)
    out = np.einsum("cnk,nk->cn", vals, w8)

    vox = partition.voxel_of(pos)
    label = partition.labels[vox[:, 0], vox[:, 1], vox[:, 2]]
    clamped = np.any((pos < fields.origin) | (pos > fields.origin + np.asarray(fields.dims) * fields.voxel_size), axis=1)

    return FieldQuery(
        label=label,
        d_occ=out[0],
        d_trust=out[1],
        d_unk=out[2],
        g_occ=out[3:6].T.copy(),
        g_trust=out[6:9].T.copy(),
        g_unk=out[9:12].T.copy(),
        clamped=clamped,
    )


def _plus_stencil_shifts(arr: np.ndarray):
    """The array itself and its six axis-neighbor shifts with edge clamping
    (the exact stencil central differences read, one-sided at boundaries)."""
    yield arr
    for a in range(3):
        for shift in (-1, 1):
            rolled = np.roll(arr, shift, axis=a)
            sl = [slice(None)] * arr.ndim
            sl[a] = slice(0, 1) if shift == 1 else slice(-1, None)
            rolled[tuple(sl)] = arr[tuple(sl)]
            yield rolled


def kink_node_mask(d: np.ndarray, sites: np.ndarray, jump_voxels: float) -> np.ndarray:
    """Nodes whose central-difference stencil straddles a discontinuity of
    the distance field's gradient.

    An EDT gradient is discontinuous exactly on the medial set (where the
    generating seed jumps) and on the boundary of the zero set (the cone
    apex at seeds, the plateau edge of a zeroed region). A node is flagged
    when the generators seen by itself and its six axis neighbors spread
    over more than `jump_voxels` in index space, or when that stencil
    mixes zero and positive distances. A stencil of all zeros (plateau
    interior) or all positive values is a smooth piece where the stored
    gradients are faithful.
    """
    lo = sites.astype(np.int64)
    hi = lo
    any_zero = np.zeros(d.shape, dtype=bool)
    any_pos = np.zeros(d.shape, dtype=bool)
    for shifted_sites, shifted_d in zip(_plus_stencil_shifts(sites), _plus_stencil_shifts(d)):
        lo = np.minimum(lo, shifted_sites)
        hi = np.maximum(hi, shifted_sites)
        any_zero |= shifted_d <= 0.0
        any_pos |= shifted_d > 0.0
    spread = np.linalg.norm((hi - lo).astype(np.float64), axis=-1)
    return (spread > jump_voxels) | (any_zero & any_pos)


def smooth_stencil_mask(fields: DistanceFieldSet, pos, jump_voxels: float = 4.0) -> np.ndarray:
    """True where a position's interpolation stencil touches no kink node
    of any of the three distance fields (see kink_node_mask). Requires the
    generator maps, so it is unavailable on field sets loaded from a dump."""
    if fields.sites_occ is None:
        raise ValueError("generator maps unavailable (field set was loaded from a dump)")
    pos = _check_positions(pos)
    corners, _, _ = _interp_setup(fields, pos)
    key = float(jump_voxels)
    if key not in fields._ridge_cache:
        kinked = np.zeros(int(np.prod(fields.dims)), dtype=bool)
        for d, sites in (
            (fields.d_occ, fields.sites_occ),
            (fields.d_trust, fields.sites_trust),
            (fields.d_unk, fields.sites_unk),
        ):
            kinked |= kink_node_mask(d, sites, key).ravel()
        fields._ridge_cache[key] = kinked
    return ~np.any(fields._ridge_cache[key][corners], axis=1)


def exact_distance_gradients(fields: DistanceFieldSet, pos):
    """Analytic gradients of the trilinearly interpolated distance fields.

    Unlike the precomputed central-difference grids returned by `query`,
    these are the exact per-cell derivatives of the interpolants, so they
    match a finite difference of the interpolated values to rounding error
    (away from cell faces). Returns (g_occ, g_trust, g_unk), each (N, 3).
    """
    pos = _check_positions(pos)
    corners, _, t = _interp_setup(fields, pos)
    h = fields.voxel_size
    flat = fields._flat()

    out = []
    for ch in range(3):
        c = flat[ch][corners]                   # (N, 8), bit order (x, y, z)
        tx, ty, tz = t[:, 0], t[:, 1], t[:, 2]
        wy0, wy1 = 1.0 - ty, ty
        wz0, wz1 = 1.0 - tz, tz
        wx0, wx1 = 1.0 - tx, tx
        gx = (
            (c[:, 4] - c[:, 0]) * wy0 * wz0
            + (c[:, 5] - c[:, 1]) * wy0 * wz1
            + (c[:, 6] - c[:, 2]) * wy1 * wz0
            + (c[:, 7] - c[:, 3]) * wy1 * wz1
        ) / h
        gy = (
            (c[:, 2] - c[:, 0]) * wx0 * wz0
            + (c[:, 3] - c[:, 1]) * wx0 * wz1
            + (c[:, 6] - c[:, 4]) * wx1 * wz0
            + (c[:, 7] - c[:, 5]) * wx1 * wz1
        ) / h
        gz = (
            (c[:, 1] - c[:, 0]) * wx0 * wy0
            + (c[:, 3] - c[:, 2]) * wx0 * wy1
            + (c[:, 5] - c[:, 4]) * wx1 * wy0
            + (c[:, 7] - c[:, 6]) * wx1 * wy1
        ) / h
        out.append(np.stack([gx, gy, gz], axis=1))
    return tuple(out)


# ---------------------------------------------------------------------------
# EGSF binary dump
# ---------------------------------------------------------------------------

def save_egsf(path, partition: VoxelPartition, fields: DistanceFieldSet) -> None:
    """Write the grid dump: magic, version u16, dims 3xu32, origin 3xf64,
    voxel_size f64, labels u8, then d_occ/d_trust/d_unk as f32. All grids
    row-major with x fastest, little-endian."""
    dims = partition.labels.shape
    with open(path, "wb") as fh:
        fh.write(EGSF_MAGIC)
        fh.write(struct.pack("<H", EGSF_VERSION))
        fh.write(struct.pack("<3I", *dims))
        fh.write(struct.pack("<3d", *partition.origin))
        fh.write(struct.pack("<d", partition.voxel_size))
        fh.write(np.ascontiguousarray(partition.labels.ravel(order="F"), dtype=np.uint8).tobytes())
        for g in (fields.d_occ, fields.d_trust, fields.d_unk):
            fh.write(g.ravel(order="F").astype("<f4").tobytes())


def load_egsf(path) -> tuple[VoxelPartition, DistanceFieldSet]:
    """Read a grid dump back. Distances come back f32-quantized (exact in
    float64 containers), gradients are recomputed from them, generator maps
    are not stored and come back None."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != EGSF_MAGIC:
        raise ValueError("not an EGSF grid dump (bad magic)")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != EGSF_VERSION:
        raise ValueError(f"unsupported EGSF version {version}")
    dims = struct.unpack_from("<3I", blob, 6)
    origin = np.asarray(struct.unpack_from("<3d", blob, 18), dtype=np.float64)
    (voxel_size,) = struct.unpack_from("<d", blob, 42)
    n = dims[0] * dims[1] * dims[2]
    off = 50
    labels = np.frombuffer(blob, dtype=np.uint8, count=n, offset=off).reshape(dims, order="F").copy()
    off += n
    grids = []
    for _ in range(3):
        g = np.frombuffer(blob, dtype="<f4", count=n, offset=off).reshape(dims, order="F")
        grids.append(g.astype(np.float64))
        off += 4 * n
    if off != len(blob):
        raise ValueError("EGSF dump has trailing or missing bytes")

    partition = VoxelPartition(origin=origin, voxel_size=float(voxel_size), labels=labels)
    d_occ, d_trust, d_unk = grids
    fields = DistanceFieldSet(
        origin=origin.copy(),
        voxel_size=float(voxel_size),
        d_occ=d_occ,
        d_trust=d_trust,
        d_unk=d_unk,
        grad_occ=_gradient_grid(d_occ, float(voxel_size)),
        grad_trust=_gradient_grid(d_trust, float(voxel_size)),
        grad_unk=_gradient_grid(d_unk, float(voxel_size)),
        occ_empty=bool(np.all(d_occ >= SENTINEL * (1.0 - 1e-6))),
    )
    return partition, fields
