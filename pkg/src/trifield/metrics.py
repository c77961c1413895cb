"""Geometric metric suite over a particle set and a voxel partition.

The five quantities (precise instantiations chosen for this artifact;
membership always uses the containing voxel):

  leak_pct    100 x (alive particles in FREE voxels) / alive
  occcov_pct  100 x (OCC voxels holding >= 1 alive particle) / (OCC voxels)
  margin_m    mean over alive particles in OCC or UNK voxels of the
              interpolated distance to the nearest FREE voxel center
  thick_m     2 x mean interpolated d_occ over alive particles in OCC
              voxels (band half-width -> thickness; pure convention)
  num_alive   alive particle count

plus (mean, p50, p95, max) of the force norms over alive particles.
Interpolated rather than voxel-valued distances drive margin and thick
because every OCC voxel has d_occ = 0 by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .edt import distance_transform
from .fields import DistanceFieldSet, query
from .grid import FREE, OCC, UNK, VoxelPartition
from .relax import ParticleSet

CSV_HEADER = "leak_pct,occcov_pct,margin_m,thick_m,num_alive,force_mean,force_p50,force_p95,force_max"


@dataclass
class MetricsReport:
    leak_pct: float
    occcov_pct: float
    margin_m: float
    thick_m: float
    num_alive: int
    force_mean: float
    force_p50: float
    force_p95: float
    force_max: float
    empty: bool = False              # no alive particles: all rates zeroed
    occcov_undefined: bool = False   # no OCC voxels to cover

    def csv_row(self) -> str:
        return (
            f"{self.leak_pct:.17g},{self.occcov_pct:.17g},{self.margin_m:.17g},"
            f"{self.thick_m:.17g},{self.num_alive},{self.force_mean:.17g},"
            f"{self.force_p50:.17g},{self.force_p95:.17g},{self.force_max:.17g}"
        )

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(CSV_HEADER + "\n")
            fh.write(self.csv_row() + "\n")


def compute_metrics(
    particles: ParticleSet,
    partition: VoxelPartition,
    fields: DistanceFieldSet,
    forces: np.ndarray | None = None,
) -> MetricsReport:
    """Pure function of its inputs; permutation invariant over particles.

    forces is (N, 3) aligned with the particle set (dead rows ignored);
    None yields zeroed force statistics.
    """
    n_occ_vox = int(np.count_nonzero(partition.labels == OCC))
    occcov_undefined = n_occ_vox == 0

    alive = np.flatnonzero(particles.alive)
    if len(alive) == 0:
        return MetricsReport(
            leak_pct=0.0, occcov_pct=0.0, margin_m=0.0, thick_m=0.0,
            num_alive=0, force_mean=0.0, force_p50=0.0, force_p95=0.0,
            force_max=0.0, empty=True, occcov_undefined=occcov_undefined,
        )

    pos = particles.positions[alive]
    vox = partition.voxel_of(pos)
    lab = partition.labels[vox[:, 0], vox[:, 1], vox[:, 2]]

    leak = 100.0 * np.count_nonzero(lab == FREE) / len(alive)

    if occcov_undefined:
        occcov = 0.0
    else:
        occ_rows = lab == OCC
        covered = np.unique(vox[occ_rows], axis=0) if occ_rows.any() else np.empty((0, 3))
        occcov = 100.0 * len(covered) / n_occ_vox

    q = query(fields, partition, pos)

    in_solid = (lab == OCC) | (lab == UNK)
    if in_solid.any():
        d_free = distance_transform(partition.labels == FREE, partition.voxel_size)
        if np.all(d_free >= 1e9):
            margin = 0.0  # no FREE voxels at all: separation undefined, reported as 0
        else:
            margin = float(_interp_scalar(d_free, fields, pos[in_solid]).mean())
    else:
        margin = 0.0

    in_occ = lab == OCC
    thick = 2.0 * float(q.d_occ[in_occ].mean()) if in_occ.any() else 0.0

    if forces is not None:
        fnorm = np.linalg.norm(np.asarray(forces)[alive], axis=1)
        stats = (
            float(fnorm.mean()),
            float(np.percentile(fnorm, 50)),
            float(np.percentile(fnorm, 95)),
            float(fnorm.max()),
        )
    else:
        stats = (0.0, 0.0, 0.0, 0.0)

    return MetricsReport(
        leak_pct=float(leak),
        occcov_pct=float(occcov),
        margin_m=margin,
        thick_m=thick,
        num_alive=len(alive),
        force_mean=stats[0],
        force_p50=stats[1],
        force_p95=stats[2],
        force_max=stats[3],
        occcov_undefined=occcov_undefined,
    )


def _interp_scalar(grid: np.ndarray, fields: DistanceFieldSet, pos: np.ndarray) -> np.ndarray:
    """Trilinear interpolation of an arbitrary scalar grid on the same
    voxel-center lattice as the field set."""
    from .fields import _interp_setup

    corners, w8, _ = _interp_setup(fields, np.atleast_2d(pos))
    return np.einsum("nk,nk->n", np.ravel(grid)[corners], w8)


def force_norm_histogram(
    particles: ParticleSet,
    forces: np.ndarray,
    bins: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Histogram of force norms over alive particles with uniform bin edges
    over [0, max]; all-zero forces land in a single spike at bin 0."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    alive = np.flatnonzero(particles.alive)
    fnorm = np.linalg.norm(np.asarray(forces)[alive], axis=1) if len(alive) else np.zeros(0)
    top = float(fnorm.max()) if len(fnorm) and fnorm.max() > 0 else 1.0
    counts, edges = np.histogram(fnorm, bins=bins, range=(0.0, top))
    return counts, edges


def histogram_to_csv(path, counts: np.ndarray, edges: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("bin_left,count\n")
        for left, c in zip(edges[:-1], counts):
            fh.write(f"{left:.17g},{int(c)}\n")
