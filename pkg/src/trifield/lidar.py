"""Limited-FoV LiDAR simulation over synthetic scenes.

A scan emits one ray per (azimuth, elevation) grid cell: azimuths cover the
full circle, elevations span a configurable band (default -15..+5 degrees,
mimicking automotive sensors, so geometry above the band stays unobserved).
Hits are optionally perturbed by Gaussian range noise along the ray,
clamped to keep distances positive. Misses are recorded with max_range so
free space can later be carved up to max_range along them: a return beyond
range certifies emptiness up to that range, a documented modeling choice.

Point clouds are written as plain text, one `x y z` triple per line, with
`#` comment lines allowed. Scan records serialize to JSON next to the
scene description.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .scene import GroundTruthOracle, SceneDescription, SensorPose, scene_hits


@dataclass(frozen=True)
class ScanConfig:
    azimuth_count: int = 960
    elevation_count: int = 36
    elev_min_deg: float = -15.0
    elev_max_deg: float = 5.0
    max_range: float = 50.0       # [m]
    noise_sigma: float = 0.0      # additive along-ray range noise stddev [m]
    noise_seed: int = 0

    def __post_init__(self):
        if self.azimuth_count < 1 or self.elevation_count < 1:
            raise ValueError("ray counts must be >= 1")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise stddev must be >= 0")
        if self.elev_max_deg < self.elev_min_deg:
            raise ValueError("elevation range is inverted")


@dataclass
class SensorScan:
    """One full sweep from a single pose.

    distance holds the (possibly noise-perturbed) hit distance for hits and
    max_range for misses; hit points are origin + distance * direction.
    """

    origin: np.ndarray          # (3,) [m]
    directions: np.ndarray      # (R, 3) unit vectors
    is_hit: np.ndarray          # (R,) bool
    distance: np.ndarray        # (R,) [m]
    max_range: float

    def hit_points(self) -> np.ndarray:
        return self.origin[None, :] + self.distance[self.is_hit, None] * self.directions[self.is_hit]

    def to_json_dict(self) -> dict:
        return {
            "origin": list(self.origin),
            "directions": self.directions.tolist(),
            "is_hit": self.is_hit.astype(int).tolist(),
            "distance": self.distance.tolist(),
            "max_range": self.max_range,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "SensorScan":
        return cls(
            origin=np.asarray(d["origin"], dtype=np.float64),
            directions=np.asarray(d["directions"], dtype=np.float64),
            is_hit=np.asarray(d["is_hit"], dtype=bool),
            distance=np.asarray(d["distance"], dtype=np.float64),
            max_range=float(d["max_range"]),
        )


def _sensor_directions(pose: SensorPose, cfg: ScanConfig) -> np.ndarray:
    """World-frame unit directions of the scan pattern, azimuth-major."""
    az = np.radians(pose.yaw_deg) + 2.0 * np.pi * np.arange(cfg.azimuth_count) / cfg.azimuth_count
    if cfg.elevation_count == 1:
        el = np.array([np.radians(cfg.elev_min_deg)])
    else:
        el = np.radians(np.linspace(cfg.elev_min_deg, cfg.elev_max_deg, cfg.elevation_count))
    az_g, el_g = np.meshgrid(az, el, indexing="ij")
    pitch = np.radians(pose.pitch_deg)
    el_g = el_g + pitch
    dirs = np.stack(
        [np.cos(el_g) * np.cos(az_g), np.cos(el_g) * np.sin(az_g), np.sin(el_g)],
        axis=-1,
    )
    return dirs.reshape(-1, 3)


def scan(scene: SceneDescription, pose: SensorPose, cfg: ScanConfig) -> SensorScan:
    """Simulate one sweep. The pose must lie inside the domain and outside
    all geometry; deterministic for a fixed (scene, pose, cfg)."""
    pos = np.asarray(pose.position, dtype=np.float64)
    if np.any(pos < scene.domain_lo) or np.any(pos > scene.domain_hi):
        raise ValueError(f"sensor pose {pose.position} outside domain bounds")
    if GroundTruthOracle(scene).contains(pos, tol=0.0):
        raise ValueError(f"sensor pose {pose.position} lies inside geometry")

    dirs = _sensor_directions(pose, cfg)
    t = scene_hits(scene, np.broadcast_to(pos, dirs.shape), dirs)
    is_hit = t <= cfg.max_range
    distance = np.where(is_hit, t, cfg.max_range)

    if cfg.noise_sigma > 0 and is_hit.any():
        rng = np.random.default_rng(cfg.noise_seed)
        noise = rng.normal(0.0, cfg.noise_sigma, size=distance.shape)
        distance = np.where(is_hit, np.maximum(distance + noise, 1e-6), distance)

    return SensorScan(
        origin=pos,
        directions=dirs,
        is_hit=is_hit,
        distance=distance,
        max_range=cfg.max_range,
    )


def merge_scans(scans: list[SensorScan]) -> tuple[np.ndarray, list[SensorScan]]:
    """Concatenate hit points of all scans into one (M, 3) cloud; the scans
    themselves are passed through unchanged for carving. No deduplication."""
    if not scans:
        raise ValueError("merge_scans needs at least one scan")
    clouds = [s.hit_points() for s in scans]
    cloud = np.concatenate(clouds, axis=0) if clouds else np.empty((0, 3))
    return cloud, scans


def save_cloud(path, cloud: np.ndarray) -> None:
    cloud = np.atleast_2d(np.asarray(cloud, dtype=np.float64))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# x y z (meters)\n")
        for p in cloud:
            fh.write(f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")


def load_cloud(path) -> np.ndarray:
    pts = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            x, y, z = line.split()[:3]
            pts.append((float(x), float(y), float(z)))
    return np.asarray(pts, dtype=np.float64).reshape(-1, 3)


def save_scans(path, scans: list[SensorScan]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"scans": [s.to_json_dict() for s in scans]}, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_scans(path) -> list[SensorScan]:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return [SensorScan.from_json_dict(d) for d in data["scans"]]
