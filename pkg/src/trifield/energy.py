"""Energy potentials over the distance fields and their analytic forces.

Three terms compose the total:

  occupied attraction   E_occ(d) = -w_occ * exp(-d^2 / (2 sigma_occ^2)),
                        a bounded-influence (Welsch) well around hit voxels;
  free-space barrier    E_free = softplus((d_trust - delta) / tau), scaled
                        by lambda_free and active only inside FREE;
  unknown-space prior   E_unk(d) = -w_unk * exp(-d^2 / (2 sigma_unk^2)),
                        a broad, low-amplitude pull toward unobserved mass.

All three are evaluated everywhere, with only the free term masked by the
FREE indicator; forces are the coefficient of each term times the
interpolated gradient grid of its distance field, used raw (no clamping or
normalization). tau is dimensionless on the normalized depth
(d_trust - delta) / tau with d_trust and delta in meters; the implicit
normalization is by 1 m.

Parameters load from a JSON config holding exactly the seven field keys
plus optional field-build keys; unknown keys are rejected.
"""

from __future__ import annotations

import json
from dataclasses import InitVar, dataclass

import numpy as np

from .fields import DistanceFieldSet, FieldQuery, VoxelPartition, query
from .grid import FREE

PARAM_KEYS = ("w_occ", "sigma_occ", "w_unk", "sigma_unk", "lambda_free", "delta", "tau")

# Keys a field-build config may carry next to the energy parameters.
FIELD_BUILD_KEYS = (
    "voxel_size",
    "azimuth_count",
    "elevation_count",
    "elev_min_deg",
    "elev_max_deg",
    "max_range",
    "noise_sigma",
)


@dataclass(frozen=True)
class EnergyParams:
    """The seven field hyperparameters (defaults from the reference table).

    check=False skips invariant validation; only the experiments that must
    violate the invariants on purpose (zero-barrier control, inverted
    spring-constant ratios) use it.
    """

    w_occ: float = 1.0          # [-]
    sigma_occ: float = 1.0      # [m]
    w_unk: float = 0.25         # [-]
    sigma_unk: float = 2.0      # [m]
    lambda_free: float = 1.0    # [-]
    delta: float = 0.5          # [m]
    tau: float = 0.5            # [-] temperature on normalized depth
    check: InitVar[bool] = True

    def __post_init__(self, check):
        if not check:
            return
        for k in PARAM_KEYS:
            if getattr(self, k) <= 0:
                raise ValueError(f"energy parameter {k} must be strictly positive")
        if self.spring_unk >= self.spring_occ:
            raise ValueError(
                "w_unk/sigma_unk^2 must stay below w_occ/sigma_occ^2 "
                "(occupied attraction dominates the weak prior)"
            )

    @property
    def spring_occ(self) -> float:
        """Effective near-surface stiffness w_occ / sigma_occ^2."""
        return self.w_occ / self.sigma_occ**2

    @property
    def spring_unk(self) -> float:
        return self.w_unk / self.sigma_unk**2

    def to_json_dict(self) -> dict:
        return {k: getattr(self, k) for k in PARAM_KEYS}


def load_params(path) -> tuple[EnergyParams, dict]:
    """Read (EnergyParams, field-build keys) from a JSON config.

    All seven energy keys must be present; any key outside the seven plus
    FIELD_BUILD_KEYS is rejected.
    """
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    unknown = sorted(set(raw) - set(PARAM_KEYS) - set(FIELD_BUILD_KEYS))
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    missing = sorted(set(PARAM_KEYS) - set(raw))
    if missing:
        raise ValueError(f"missing config keys: {', '.join(missing)}")
    params = EnergyParams(**{k: float(raw[k]) for k in PARAM_KEYS})
    build = {k: raw[k] for k in FIELD_BUILD_KEYS if k in raw}
    return params, build


def save_params(path, params: EnergyParams, build: dict | None = None) -> None:
    d = params.to_json_dict()
    if build:
        unknown = sorted(set(build) - set(FIELD_BUILD_KEYS))
        if unknown:
            raise ValueError(f"unknown field-build keys: {', '.join(unknown)}")
        d.update(build)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(d, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# scalar pieces
# ---------------------------------------------------------------------------

def softplus(x):
    """ln(1 + e^x), overflow safe: for arguments above 30 the linear tail
    is exact to double precision and is returned directly."""
    x = np.asarray(x, dtype=np.float64)
    big = x > 30.0
    return np.where(big, x, np.log1p(np.exp(np.where(big, 0.0, x))))


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def energy_occ(d, p: EnergyParams):
    """Welsch well: value in (-w_occ, 0], minimum at d = 0."""
    d = np.asarray(d, dtype=np.float64)
    return -p.w_occ * np.exp(-(d**2) / (2.0 * p.sigma_occ**2))


def energy_unk(d, p: EnergyParams):
    d = np.asarray(d, dtype=np.float64)
    return -p.w_unk * np.exp(-(d**2) / (2.0 * p.sigma_unk**2))


def energy_free(d_trust, is_free, p: EnergyParams):
    """Barrier energy lambda_free * softplus((d_trust - delta)/tau), zero
    outside FREE."""
    d_trust = np.asarray(d_trust, dtype=np.float64)
    val = p.lambda_free * softplus((d_trust - p.delta) / p.tau)
    return np.where(np.asarray(is_free, dtype=bool), val, 0.0)


def _coef_welsch(d, w, sigma):
    """|dE/dd| of the Welsch well: (w / sigma^2) * d * exp(-d^2 / 2 sigma^2)."""
    d = np.asarray(d, dtype=np.float64)
    return (w / sigma**2) * d * np.exp(-(d**2) / (2.0 * sigma**2))


def prop3_magnitude(d, w, sigma):
    """Closed-form force magnitude F(d, sigma) = (w d / sigma^2) e^{-d^2/2
    sigma^2}; decays as 1/sigma^2 at fixed d, the vanishing-constraint law."""
    return _coef_welsch(d, w, sigma)


# ---------------------------------------------------------------------------
# vectorized evaluation over field queries
# ---------------------------------------------------------------------------

@dataclass
class EnergySample:
    """Per-position energies and the total force.

    e_free is the bare softplus term masked by the FREE indicator (without
    lambda_free), mirroring the reference decomposition; e_total applies
    lambda_free. force = -grad(e_total).
    """

    e_occ: np.ndarray     # (N,)
    e_unk: np.ndarray     # (N,)
    e_free: np.ndarray    # (N,)
    e_total: np.ndarray   # (N,)
    force: np.ndarray     # (N, 3) [energy / m]

    def take(self, sel) -> "EnergySample":
        return EnergySample(
            e_occ=self.e_occ[sel],
            e_unk=self.e_unk[sel],
            e_free=self.e_free[sel],
            e_total=self.e_total[sel],
            force=self.force[sel],
        )


def evaluate(q: FieldQuery, p: EnergyParams, occ_empty: bool = False) -> EnergySample:
    """Energies and force at queried positions.

    All terms are global; only the free term is gated, by the containing
    voxel's FREE indicator. With occ_empty (no occupied evidence) the
    occupied term contributes nothing.
    """
    is_free = (q.label == FREE).astype(np.float64)

    if occ_empty:
        e_occ = np.zeros_like(q.d_occ)
        grad_e_occ = np.zeros_like(q.g_occ)
    else:
        exp_occ = np.exp(-(q.d_occ**2) / (2.0 * p.sigma_occ**2))
        e_occ = -p.w_occ * exp_occ
        coef_occ = (p.w_occ / p.sigma_occ**2) * q.d_occ * exp_occ
        grad_e_occ = coef_occ[:, None] * q.g_occ

    exp_unk = np.exp(-(q.d_unk**2) / (2.0 * p.sigma_unk**2))
    e_unk = -p.w_unk * exp_unk
    coef_unk = (p.w_unk / p.sigma_unk**2) * q.d_unk * exp_unk
    grad_e_unk = coef_unk[:, None] * q.g_unk

    e_free = softplus((q.d_trust - p.delta) / p.tau) * is_free
    phi_prime = (1.0 / p.tau) * sigmoid((q.d_trust - p.delta) / p.tau)
    grad_e_free = (phi_prime * is_free)[:, None] * q.g_trust

    force = -grad_e_occ - grad_e_unk - p.lambda_free * grad_e_free
    return EnergySample(
        e_occ=e_occ,
        e_unk=e_unk,
        e_free=e_free,
        e_total=e_occ + e_unk + p.lambda_free * e_free,
        force=force,
    )


def force_occ(q: FieldQuery, p: EnergyParams, occ_empty: bool = False) -> np.ndarray:
    """Occupied attraction alone: -(w/sigma^2) d e^{-d^2/2 sigma^2} along the
    interpolated gradient, i.e. toward the nearest hit voxel."""
    if occ_empty:
        return np.zeros_like(q.g_occ)
    return -_coef_welsch(q.d_occ, p.w_occ, p.sigma_occ)[:, None] * q.g_occ


def force_unk(q: FieldQuery, p: EnergyParams) -> np.ndarray:
    return -_coef_welsch(q.d_unk, p.w_unk, p.sigma_unk)[:, None] * q.g_unk


def force_free(q: FieldQuery, p: EnergyParams) -> np.ndarray:
    """Barrier repulsion: magnitude (lambda/tau) sigmoid((d_trust-delta)/tau)
    along -grad d_trust, zero outside FREE."""
    is_free = (q.label == FREE).astype(np.float64)
    mag = (p.lambda_free / p.tau) * sigmoid((q.d_trust - p.delta) / p.tau)
    return -(mag * is_free)[:, None] * q.g_trust


def sample_energy(
    fields: DistanceFieldSet,
    partition: VoxelPartition,
    pos,
    p: EnergyParams,
) -> EnergySample:
    """Convenience: query + evaluate in one call."""
    return evaluate(query(fields, partition, pos), p, fields.occ_empty)


def total_force(fields: DistanceFieldSet, partition: VoxelPartition, pos, p: EnergyParams) -> np.ndarray:
    return sample_energy(fields, partition, pos, p).force
