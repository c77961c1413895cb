"""Decoupled relaxation of particle sets over a frozen field bundle.

Positions follow the geometric force only (decoupled mode); a synthetic
photometric channel (sum of isotropic Gaussian wells with analytic
gradients) exists for two purposes: it updates the per-particle scalar
payload in every mode, and in joint mode it is added to the position
update to reproduce the coupled-optimization ablation. In decoupled mode
the photometric gradient is masked off the position path entirely, so
trajectories are bitwise independent of it.

Steps are clipped to max_step_factor * voxel_size. Every T_prune
iterations the discrete pruning pass kills particles whose interpolated
penetration depth strictly exceeds tau_margin (equality keeps the
particle). Particles with a non-finite force are frozen for the step and
counted, rather than aborting the run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .energy import EnergyParams, evaluate
from .fields import DistanceFieldSet, query
from .grid import FREE, OCC, VoxelPartition

MODES = ("decoupled", "joint")


@dataclass
class GaussianWell:
    center: np.ndarray        # (3,) [m]
    amplitude: float
    sigma: float              # [m]


@dataclass
class PhotometricField:
    """Synthetic scalar channel: sum of attracting Gaussian wells.

    value(x) = -sum_j A_j exp(-|x-c_j|^2 / 2 s_j^2); its analytic gradient
    supplies the stand-in photometric force -grad(value).
    """

    wells: list[GaussianWell] = field(default_factory=list)

    def value(self, pos) -> np.ndarray:
        pos = np.atleast_2d(np.asarray(pos, dtype=np.float64))
        out = np.zeros(pos.shape[0])
        for w in self.wells:
            r2 = np.sum((pos - np.asarray(w.center)) ** 2, axis=1)
            out -= w.amplitude * np.exp(-r2 / (2.0 * w.sigma**2))
        return out

    def grad(self, pos) -> np.ndarray:
        pos = np.atleast_2d(np.asarray(pos, dtype=np.float64))
        out = np.zeros_like(pos)
        for w in self.wells:
            diff = pos - np.asarray(w.center)
            r2 = np.sum(diff**2, axis=1)
            coef = (w.amplitude / w.sigma**2) * np.exp(-r2 / (2.0 * w.sigma**2))
            out += coef[:, None] * diff
        return out

    def to_json_dict(self) -> dict:
        return {
            "wells": [
                {"center": list(map(float, w.center)), "amplitude": w.amplitude, "sigma": w.sigma}
                for w in self.wells
            ]
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "PhotometricField":
        return cls(
            wells=[
                GaussianWell(np.asarray(w["center"], dtype=np.float64), float(w["amplitude"]), float(w["sigma"]))
                for w in d["wells"]
            ]
        )


def save_wells(path, photo: PhotometricField) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(photo.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_wells(path) -> PhotometricField:
    with open(path, "r", encoding="utf-8") as fh:
        return PhotometricField.from_json_dict(json.load(fh))


# ---------------------------------------------------------------------------
# particles
# ---------------------------------------------------------------------------

@dataclass
class ParticleSet:
    positions: np.ndarray                 # (N, 3) [m]
    alive: np.ndarray                     # (N,) bool; pruned never resurrect
    payload: np.ndarray                   # (N,) synthetic appearance stand-in
    tracked_ids: np.ndarray | None = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        n = self.positions.shape[0]
        if self.alive is None:
            self.alive = np.ones(n, dtype=bool)
        self.alive = np.asarray(self.alive, dtype=bool).reshape(n)
        if self.payload is None:
            self.payload = np.zeros(n)
        self.payload = np.asarray(self.payload, dtype=np.float64).reshape(n)
        if not np.all(np.isfinite(self.positions[self.alive])):
            raise ValueError("alive particles must have finite positions")

    @classmethod
    def at(cls, positions) -> "ParticleSet":
        positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
        return cls(positions=positions, alive=np.ones(len(positions), bool), payload=np.zeros(len(positions)))

    @classmethod
    def on_occ_centers(cls, partition: VoxelPartition, n: int | None = None, rng=None) -> "ParticleSet":
        """Particles at the centers of hit-bearing voxels (all, or n sampled
        without replacement)."""
        idx = np.argwhere(partition.labels == OCC)
        if len(idx) == 0:
            raise ValueError("partition has no OCC voxels")
        if n is not None and n < len(idx):
            rng = rng or np.random.default_rng(0)
            idx = idx[rng.choice(len(idx), size=n, replace=False)]
        return cls.at(partition.voxel_centers(idx))

    @classmethod
    def uniform_in_free(cls, partition: VoxelPartition, n: int, rng) -> "ParticleSet":
        """Rejection-sample n positions whose containing voxel is FREE."""
        if not np.any(partition.labels == FREE):
            raise ValueError("partition has no FREE region to sample")
        lo = partition.origin
        hi = partition.domain_hi
        out = np.empty((n, 3))
        got = 0
        while got < n:
            cand = rng.uniform(lo, hi, size=(max(2 * (n - got), 64), 3))
            keep = cand[partition.label_at(cand) == FREE]
            take = min(len(keep), n - got)
            out[got : got + take] = keep[:take]
            got += take
        return cls.at(out)

    @classmethod
    def uniform_in_domain(cls, partition: VoxelPartition, n: int, rng) -> "ParticleSet":
        return cls.at(rng.uniform(partition.origin, partition.domain_hi, size=(n, 3)))

    @property
    def num_alive(self) -> int:
        return int(np.count_nonzero(self.alive))


def save_particles(path, particles: ParticleSet) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# x y z alive payload\n")
        for p, a, c in zip(particles.positions, particles.alive, particles.payload):
            fh.write(f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g} {int(a)} {c:.17g}\n")


def load_particles(path) -> ParticleSet:
    pos, alive, payload = [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            pos.append(tuple(float(v) for v in parts[:3]))
            alive.append(bool(int(parts[3])) if len(parts) > 3 else True)
            payload.append(float(parts[4]) if len(parts) > 4 else 0.0)
    return ParticleSet(
        positions=np.asarray(pos, dtype=np.float64).reshape(-1, 3),
        alive=np.asarray(alive, dtype=bool),
        payload=np.asarray(payload, dtype=np.float64),
    )


# ---------------------------------------------------------------------------
# dynamics
# ---------------------------------------------------------------------------

@dataclass
class RelaxConfig:
    eta_mu: float = 1.0             # step scale [m per unit force]
    max_step_factor: float = 0.5    # step cap as a fraction of voxel_size
    t_prune: int = 100              # iterations between pruning passes
    tau_margin: float = 0.5         # [m] strict pruning threshold
    iterations: int = 300
    mode: str = "decoupled"
    joint_lambda: float = 1.0       # geometric weight in joint mode
    prune_enabled: bool = True
    photometric: PhotometricField | None = None

    def __post_init__(self):
        if self.eta_mu <= 0:
            raise ValueError("eta_mu must be positive")
        if self.t_prune < 1:
            raise ValueError("t_prune must be >= 1")
        if self.tau_margin < 0:
            raise ValueError("tau_margin must be >= 0")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.mode == "joint" and self.photometric is None:
            raise ValueError("joint mode needs a photometric field")


@dataclass
class StepStats:
    mean_force: float
    max_force: float
    n_frozen: int      # particles skipped this step due to non-finite force
    n_clipped: int
    n_crossings: int   # particles whose containing-voxel label changed


def _apply_update(particles, partition, fields, cfg, force) -> StepStats:
    idx = np.flatnonzero(particles.alive)
    finite = np.all(np.isfinite(force), axis=1)
    force = np.where(finite[:, None], force, 0.0)

    delta = cfg.eta_mu * force
    norms = np.linalg.norm(delta, axis=1)
    cap = cfg.max_step_factor * fields.voxel_size
    over = norms > cap
    if over.any():
        delta[over] *= (cap / (norms[over] + 1e-8))[:, None]

    labels_before = partition.label_at(particles.positions[idx])
    # The field is undefined outside the domain; particles stop at the box.
    particles.positions[idx] = np.clip(
        particles.positions[idx] + delta, partition.origin, partition.domain_hi
    )
    labels_after = partition.label_at(particles.positions[idx])

    if cfg.photometric is not None:
        particles.payload[idx] = cfg.photometric.value(particles.positions[idx])

    fnorm = np.linalg.norm(force, axis=1)
    return StepStats(
        mean_force=float(fnorm.mean()) if len(fnorm) else 0.0,
        max_force=float(fnorm.max()) if len(fnorm) else 0.0,
        n_frozen=int(np.count_nonzero(~finite)),
        n_clipped=int(np.count_nonzero(over)),
        n_crossings=int(np.count_nonzero(labels_after != labels_before)),
    )


def relax_step(
    particles: ParticleSet,
    partition: VoxelPartition,
    fields: DistanceFieldSet,
    params: EnergyParams,
    cfg: RelaxConfig,
) -> StepStats:
    """One decoupled update: positions move along the geometric force only.

    The photometric gradient is masked to zero on the position path (it
    still refreshes the payload), so the update is bitwise identical to a
    run without any photometric field.
    """
    idx = np.flatnonzero(particles.alive)
    if len(idx) == 0:
        return StepStats(0.0, 0.0, 0, 0, 0)
    q = query(fields, partition, particles.positions[idx])
    force = evaluate(q, params, fields.occ_empty).force
    return _apply_update(particles, partition, fields, cfg, force)


def joint_step(
    particles: ParticleSet,
    partition: VoxelPartition,
    fields: DistanceFieldSet,
    params: EnergyParams,
    cfg: RelaxConfig,
) -> StepStats:
    """Coupled ablation update: photometric and geometric forces summed,
    mu <- mu - eta (grad L_photo + joint_lambda grad E_geom)."""
    if cfg.photometric is None:
        raise ValueError("joint mode needs a photometric field")
    idx = np.flatnonzero(particles.alive)
    if len(idx) == 0:
        return StepStats(0.0, 0.0, 0, 0, 0)
    pos = particles.positions[idx]
    q = query(fields, partition, pos)
    geo = evaluate(q, params, fields.occ_empty).force
    photo = -cfg.photometric.grad(pos)
    return _apply_update(particles, partition, fields, cfg, photo + cfg.joint_lambda * geo)


def prune_free(
    particles: ParticleSet,
    partition: VoxelPartition,
    fields: DistanceFieldSet,
    cfg: RelaxConfig,
) -> int:
    """Kill alive particles with interpolated d_trust strictly greater than
    tau_margin; equality keeps the particle. Returns the pruned count."""
    idx = np.flatnonzero(particles.alive)
    if len(idx) == 0:
        return 0
    q = query(fields, partition, particles.positions[idx])
    kill = q.d_trust > cfg.tau_margin
    particles.alive[idx[kill]] = False
    return int(np.count_nonzero(kill))


@dataclass
class TrajectoryLog:
    """Per-iteration summaries plus tracked-particle histories.

    Row 0 is the initial state; row t the state after step t. energy is the
    total geometric energy over alive particles. crossings counts particles
    whose containing-voxel label changed during the step (interpolation
    kinks live on those boundaries, so descent checks skip flagged rows).
    """

    iters: list[int] = field(default_factory=list)
    total_energy: list[float] = field(default_factory=list)
    mean_force: list[float] = field(default_factory=list)
    max_force: list[float] = field(default_factory=list)
    alive: list[int] = field(default_factory=list)
    pruned: list[int] = field(default_factory=list)
    crossings: list[int] = field(default_factory=list)
    frozen: list[int] = field(default_factory=list)
    tracked: list[tuple] = field(default_factory=list)   # (iter, id, x, y, z, region)

    def append(self, it, energy, mean_f, max_f, alive, pruned, crossings, frozen):
        self.iters.append(int(it))
        self.total_energy.append(float(energy))
        self.mean_force.append(float(mean_f))
        self.max_force.append(float(max_f))
        self.alive.append(int(alive))
        self.pruned.append(int(pruned))
        self.crossings.append(int(crossings))
        self.frozen.append(int(frozen))

    def track(self, it, ids, positions, regions):
        for pid, p, r in zip(ids, positions, regions):
            self.tracked.append((int(it), int(pid), p[0], p[1], p[2], int(r)))

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("iter,total_energy,mean_force,max_force,alive,pruned\n")
            for i in range(len(self.iters)):
                fh.write(
                    f"{self.iters[i]},{self.total_energy[i]:.17g},{self.mean_force[i]:.17g},"
                    f"{self.max_force[i]:.17g},{self.alive[i]},{self.pruned[i]}\n"
                )

    def tracked_to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("iter,id,x,y,z,region\n")
            for it, pid, x, y, z, r in self.tracked:
                fh.write(f"{it},{pid},{x:.17g},{y:.17g},{z:.17g},{r}\n")


def _total_energy(particles, partition, fields, params) -> tuple[float, float, float]:
    idx = np.flatnonzero(particles.alive)
    if len(idx) == 0:
        return 0.0, 0.0, 0.0
    s = evaluate(query(fields, partition, particles.positions[idx]), params, fields.occ_empty)
    fnorm = np.linalg.norm(s.force, axis=1)
    return float(s.e_total.sum()), float(fnorm.mean()), float(fnorm.max())


def run(
    particles: ParticleSet,
    partition: VoxelPartition,
    fields: DistanceFieldSet,
    params: EnergyParams,
    cfg: RelaxConfig,
) -> tuple[ParticleSet, TrajectoryLog]:
    """Iterate relax_step (or joint_step) with pruning every t_prune
    iterations. Deterministic for fixed inputs; the particle set is updated
    in place and also returned."""
    log = TrajectoryLog()
    step = joint_step if cfg.mode == "joint" else relax_step

    def record_tracked(it):
        if particles.tracked_ids is not None and len(particles.tracked_ids):
            ids = particles.tracked_ids
            pos = particles.positions[ids]
            log.track(it, ids, pos, partition.label_at(pos))

    e0, mf0, xf0 = _total_energy(particles, partition, fields, params)
    log.append(0, e0, mf0, xf0, particles.num_alive, 0, 0, 0)
    record_tracked(0)

    for t in range(1, cfg.iterations + 1):
        stats = step(particles, partition, fields, params, cfg)
        pruned = 0
        if cfg.prune_enabled and t % cfg.t_prune == 0:
            pruned = prune_free(particles, partition, fields, cfg)
        e, _, _ = _total_energy(particles, partition, fields, params)
        log.append(t, e, stats.mean_force, stats.max_force, particles.num_alive,
                   pruned, stats.n_crossings, stats.n_frozen)
        record_tracked(t)
        if particles.num_alive == 0:
            break
    return particles, log
