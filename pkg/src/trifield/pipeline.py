"""End-to-end composition: scene -> scans -> partition -> distance fields.

The canonical bundle (seeded canyon, default scan pattern, 0.25 m voxels)
is what the validation experiments and the acceptance suite run against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import DistanceFieldSet, build_distance_fields
from .grid import VoxelPartition, carve
from .lidar import ScanConfig, SensorScan, merge_scans, scan
from .scene import CanyonSpec, SceneDescription, generate_canyon

DEFAULT_VOXEL_SIZE = 0.25  # [m] natural length scale: max step is half of it


@dataclass
class FieldBundle:
    scene: SceneDescription
    scans: list[SensorScan]
    cloud: np.ndarray
    partition: VoxelPartition
    fields: DistanceFieldSet


def scan_scene(scene: SceneDescription, cfg: ScanConfig) -> list[SensorScan]:
    """One sweep per sensor pose."""
    return [scan(scene, pose, cfg) for pose in scene.sensors]


def build_bundle(
    scene: SceneDescription,
    scan_cfg: ScanConfig | None = None,
    voxel_size: float = DEFAULT_VOXEL_SIZE,
) -> FieldBundle:
    scan_cfg = scan_cfg or ScanConfig()
    scans = scan_scene(scene, scan_cfg)
    cloud, scans = merge_scans(scans)
    partition = carve(scans, scene.domain_lo, scene.domain_hi, voxel_size)
    fields = build_distance_fields(partition, cloud)
    return FieldBundle(scene=scene, scans=scans, cloud=cloud, partition=partition, fields=fields)


def canonical_bundle(
    scene_seed: int = 0,
    voxel_size: float = DEFAULT_VOXEL_SIZE,
    scan_cfg: ScanConfig | None = None,
    canyon: CanyonSpec | None = None,
) -> FieldBundle:
    scene = generate_canyon(scene_seed, canyon or CanyonSpec())
    return build_bundle(scene, scan_cfg, voxel_size)
