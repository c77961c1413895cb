"""Tri-state voxel energy fields with particle relaxation.

Carves OCC/FREE/UNK voxel partitions from simulated LiDAR, precomputes
exact distance transforms and central-difference gradient grids, evaluates
Welsch / softplus-barrier / weak-prior potentials with analytic forces, and
relaxes particle sets down the resulting energy landscape. A validation
harness turns the framework's stability guarantees into pass/fail
experiments on synthetic street canyons.
"""

__version__ = "0.1.0"

from .edt import SENTINEL, distance_transform, distance_transform_with_sites
from .energy import EnergyParams, EnergySample, evaluate, prop3_magnitude, sample_energy, total_force
from .fields import (
    DistanceFieldSet,
    FieldQuery,
    build_distance_fields,
    exact_distance_gradients,
    load_egsf,
    query,
    save_egsf,
)
from .grid import FREE, OCC, UNK, VoxelPartition, carve
from .lidar import ScanConfig, SensorScan, merge_scans, scan
from .metrics import MetricsReport, compute_metrics, force_norm_histogram
from .pipeline import DEFAULT_VOXEL_SIZE, FieldBundle, build_bundle, canonical_bundle
from .relax import (
    ParticleSet,
    PhotometricField,
    RelaxConfig,
    TrajectoryLog,
    joint_step,
    prune_free,
    relax_step,
    run,
)
from .scene import CanyonSpec, GroundTruthOracle, SceneDescription, generate_canyon, ray_cast

__all__ = [
    "SENTINEL",
    "distance_transform",
    "distance_transform_with_sites",
    "EnergyParams",
    "EnergySample",
    "evaluate",
    "prop3_magnitude",
    "sample_energy",
    "total_force",
    "DistanceFieldSet",
    "FieldQuery",
    "build_distance_fields",
    "exact_distance_gradients",
    "load_egsf",
    "query",
    "save_egsf",
    "FREE",
    "OCC",
    "UNK",
    "VoxelPartition",
    "carve",
    "ScanConfig",
    "SensorScan",
    "merge_scans",
    "scan",
    "MetricsReport",
    "compute_metrics",
    "force_norm_histogram",
    "DEFAULT_VOXEL_SIZE",
    "FieldBundle",
    "build_bundle",
    "canonical_bundle",
    "ParticleSet",
    "PhotometricField",
    "RelaxConfig",
    "TrajectoryLog",
    "joint_step",
    "prune_free",
    "relax_step",
    "run",
    "CanyonSpec",
    "GroundTruthOracle",
    "SceneDescription",
    "generate_canyon",
    "ray_cast",
]
