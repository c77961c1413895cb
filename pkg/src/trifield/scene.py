"""Synthetic street-canyon scenes built from axis-aligned primitives.

A scene is a set of solid axis-aligned boxes and finite axis-aligned
rectangles inside an axis-aligned domain, plus sensor poses. Primitives are
deliberately restricted to these two kinds so that ray intersections are
exact (slab tests) and distance-field oracles stay cheap, while still
producing occlusion and geometry outside a limited sensor field of view.

Units are meters everywhere. Scene descriptions serialize to JSON with the
fixed top-level field names `domain_bounds`, `boxes`, `rects`, `sensors`:

    {
      "domain_bounds": {"lo": [x, y, z], "hi": [x, y, z]},
      "boxes":   [{"lo": [...], "hi": [...]}, ...],
      "rects":   [{"axis": 0|1|2, "level": c, "lo": [u0, v0], "hi": [u1, v1]}, ...],
      "sensors": [{"position": [...], "yaw_deg": a, "pitch_deg": b}, ...]
    }

A rect is perpendicular to `axis` at coordinate `level`; `lo`/`hi` bound the
two remaining axes in increasing axis order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

_EPS_UNIT = 1e-9  # tolerance on |direction| - 1


@dataclass(frozen=True)
class Box:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self):
        if not all(l < h for l, h in zip(self.lo, self.hi)):
            raise ValueError(f"degenerate box {self.lo}..{self.hi}")


@dataclass(frozen=True)
class Rect:
    axis: int                   # normal axis
    level: float                # plane coordinate along `axis`
    lo: tuple[float, float]     # extent on the remaining axes, ascending axis order
    hi: tuple[float, float]

    def __post_init__(self):
        if self.axis not in (0, 1, 2):
            raise ValueError("rect axis must be 0, 1 or 2")
        if not all(l < h for l, h in zip(self.lo, self.hi)):
            raise ValueError(f"degenerate rect {self.lo}..{self.hi}")


@dataclass(frozen=True)
class SensorPose:
    position: tuple[float, float, float]
    yaw_deg: float = 0.0
    pitch_deg: float = 0.0


@dataclass
class SceneDescription:
    domain_lo: np.ndarray
    domain_hi: np.ndarray
    boxes: list[Box] = field(default_factory=list)
    rects: list[Rect] = field(default_factory=list)
    sensors: list[SensorPose] = field(default_factory=list)

    def __post_init__(self):
        self.domain_lo = np.asarray(self.domain_lo, dtype=np.float64)
        self.domain_hi = np.asarray(self.domain_hi, dtype=np.float64)
        if not np.all(self.domain_hi > self.domain_lo):
            raise ValueError("degenerate domain bounds")
        for b in self.boxes:
            if np.any(np.asarray(b.lo) < self.domain_lo - 1e-12) or np.any(
                np.asarray(b.hi) > self.domain_hi + 1e-12
            ):
                raise ValueError(f"box {b} outside domain bounds")
        for r in self.rects:
            others = [a for a in range(3) if a != r.axis]
            if not (self.domain_lo[r.axis] - 1e-12 <= r.level <= self.domain_hi[r.axis] + 1e-12):
                raise ValueError(f"rect {r} outside domain bounds")
            for k, a in enumerate(others):
                if r.lo[k] < self.domain_lo[a] - 1e-12 or r.hi[k] > self.domain_hi[a] + 1e-12:
                    raise ValueError(f"rect {r} outside domain bounds")

    # -- JSON round trip (field names are part of the on-disk contract) --

    def to_json_dict(self) -> dict:
        return {
            "domain_bounds": {"lo": list(self.domain_lo), "hi": list(self.domain_hi)},
            "boxes": [{"lo": list(b.lo), "hi": list(b.hi)} for b in self.boxes],
            "rects": [
                {"axis": r.axis, "level": r.level, "lo": list(r.lo), "hi": list(r.hi)}
                for r in self.rects
            ],
            "sensors": [
                {
                    "position": list(s.position),
                    "yaw_deg": s.yaw_deg,
                    "pitch_deg": s.pitch_deg,
                }
                for s in self.sensors
            ],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "SceneDescription":
        return cls(
            domain_lo=np.asarray(d["domain_bounds"]["lo"], dtype=np.float64),
            domain_hi=np.asarray(d["domain_bounds"]["hi"], dtype=np.float64),
            boxes=[Box(tuple(b["lo"]), tuple(b["hi"])) for b in d["boxes"]],
            rects=[
                Rect(int(r["axis"]), float(r["level"]), tuple(r["lo"]), tuple(r["hi"]))
                for r in d["rects"]
            ],
            sensors=[
                SensorPose(tuple(s["position"]), float(s["yaw_deg"]), float(s["pitch_deg"]))
                for s in d["sensors"]
            ],
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n"


def save_scene(path, scene: SceneDescription) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(scene.dumps())


def load_scene(path) -> SceneDescription:
    with open(path, "r", encoding="utf-8") as fh:
        return SceneDescription.from_json_dict(json.load(fh))


# ---------------------------------------------------------------------------
# ray intersection (vectorized over rays)
# ---------------------------------------------------------------------------

def _box_hits(box: Box, origins, dirs):
    """Nearest-entry distances of rays against a solid box; inf on miss.

    Origins inside the box report distance 0 (immediate hit).
    """
    lo = np.asarray(box.lo)
    hi = np.asarray(box.hi)
    t_near = np.full(origins.shape[0], -np.inf)
    t_far = np.full(origins.shape[0], np.inf)
    for a in range(3):
        o = origins[:, a]
        d = dirs[:, a]
        parallel = d == 0.0
        with np.errstate(divide="ignore"):
            t1 = np.where(parallel, -np.inf, (lo[a] - o) / np.where(parallel, 1.0, d))
            t2 = np.where(parallel, np.inf, (hi[a] - o) / np.where(parallel, 1.0, d))
        swap = t1 > t2
        t1, t2 = np.where(swap, t2, t1), np.where(swap, t1, t2)
        inside_slab = (o >= lo[a]) & (o <= hi[a])
        t1 = np.where(parallel, np.where(inside_slab, -np.inf, np.inf), t1)
        t2 = np.where(parallel, np.where(inside_slab, np.inf, -np.inf), t2)
        t_near = np.maximum(t_near, t1)
        t_far = np.minimum(t_far, t2)
    hit = (t_near <= t_far) & (t_far >= 0.0)
    return np.where(hit, np.maximum(t_near, 0.0), np.inf)


def _rect_hits(rect: Rect, origins, dirs):
    """Intersection distances of rays against a finite rectangle; inf on miss."""
    a = rect.axis
    others = [k for k in range(3) if k != a]
    d = dirs[:, a]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (rect.level - origins[:, a]) / d
    ok = np.isfinite(t) & (t >= 0.0)
    for k, b in enumerate(others):
        c = origins[:, b] + t * dirs[:, b]
        ok &= (c >= rect.lo[k]) & (c <= rect.hi[k])
    return np.where(ok, t, np.inf)


def scene_hits(scene: SceneDescription, origins, dirs):
    """Nearest hit distance per ray over all primitives; inf where none."""
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    best = np.full(origins.shape[0], np.inf)
    for b in scene.boxes:
        best = np.minimum(best, _box_hits(b, origins, dirs))
    for r in scene.rects:
        best = np.minimum(best, _rect_hits(r, origins, dirs))
    return best


def ray_cast(scene: SceneDescription, origin, direction, max_range):
    """Nearest intersection distance along a single ray, None if it misses
    everything within max_range. Direction must be unit length to 1e-9."""
    direction = np.asarray(direction, dtype=np.float64)
    if abs(np.linalg.norm(direction) - 1.0) > _EPS_UNIT:
        raise ValueError("ray direction must be unit length")
    t = float(scene_hits(scene, origin, direction)[0])
    return t if t <= max_range else None


class GroundTruthOracle:
    """Exact point-membership and ray-intersection queries for a scene."""

    def __init__(self, scene: SceneDescription):
        self.scene = scene

    def contains(self, point, tol: float = 1e-9) -> bool:
        """True if `point` lies inside or on a primitive within `tol`."""
        p = np.asarray(point, dtype=np.float64)
        for b in self.scene.boxes:
            if np.all(p >= np.asarray(b.lo) - tol) and np.all(p <= np.asarray(b.hi) + tol):
                return True
        for r in self.scene.rects:
            others = [k for k in range(3) if k != r.axis]
            if abs(p[r.axis] - r.level) <= tol and all(
                r.lo[k] - tol <= p[a] <= r.hi[k] + tol for k, a in enumerate(others)
            ):
                return True
        return False

    def first_hit(self, origin, direction):
        """(distance, primitive index) of the nearest intersection, or None.

        Primitives are indexed boxes first, then rects, in scene order.
        """
        origins = np.atleast_2d(np.asarray(origin, dtype=np.float64))
        dirs = np.atleast_2d(np.asarray(direction, dtype=np.float64))
        best_t = np.inf
        best_i = -1
        prims = list(self.scene.boxes) + list(self.scene.rects)
        for i, prim in enumerate(prims):
            if isinstance(prim, Box):
                t = float(_box_hits(prim, origins, dirs)[0])
            else:
                t = float(_rect_hits(prim, origins, dirs)[0])
            if t < best_t:
                best_t = t
                best_i = i
        if not np.isfinite(best_t):
            return None
        return best_t, best_i


# ---------------------------------------------------------------------------
# canyon generator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CanyonSpec:
    """Parameters of the synthetic street canyon.

    The canyon runs along x: a ground rectangle at z = 0, two walls parallel
    to the x axis, and a rooftop slab on top of the first wall that sits
    above the sensor elevation cutoff so unobserved structure is guaranteed.

    Sensors spread over most of the street length: the upward-inclined rays
    of a distant sensor are what raise the carved free-space ceiling several
    attraction bandwidths above the surfaces, the regime where expelled
    particles stay expelled instead of being pulled straight back.
    """

    length: float = 48.0        # x extent [m]
    width: float = 16.0         # y extent [m]
    height: float = 16.0        # z extent [m], split by ground_margin below ground
    ground_margin: float = 1.0  # domain depth below the ground plane [m]
    wall_height: float = 10.0   # [m]
    wall_thickness: float = 1.0     # [m]
    wall_inset: float = 2.0     # nominal gap from domain edge to wall [m]
    wall_jitter: float = 0.5    # seed-dependent shift of each wall [m]
    roof_thickness: float = 0.5     # [m]
    roof_overhang: float = 0.75     # [m]
    sensor_height: float = 1.7  # [m]
    sensor_count: int = 3
    sensor_span: float = 0.84   # fraction of length covered by the sensor line
    fov_cut_deg: float = 5.0    # max sensor elevation the rooftop must clear

    def __post_init__(self):
        sizes = (
            self.length, self.width, self.height, self.wall_height,
            self.wall_thickness, self.roof_thickness, self.sensor_height,
        )
        if any(s <= 0 for s in sizes):
            raise ValueError("canyon dimensions must be positive")
        if self.sensor_count < 1:
            raise ValueError("need at least one sensor")
        if not 0.0 <= self.sensor_span < 1.0:
            raise ValueError("sensor_span must lie in [0, 1)")
        if self.wall_jitter < 0 or self.wall_inset < 0 or self.roof_overhang < 0:
            raise ValueError("inset, jitter and overhang must be non-negative")
        if self.ground_margin < 0 or self.ground_margin >= self.height:
            raise ValueError("ground_margin must lie inside the domain height")
        street = self.width - 2.0 * (self.wall_inset + self.wall_jitter + self.wall_thickness)
        if street <= 1.0:
            raise ValueError("walls leave no street between them")
        if self.wall_height + self.roof_thickness >= self.height - self.ground_margin:
            raise ValueError("rooftop must fit below the domain ceiling")


def generate_canyon(seed: int, spec: CanyonSpec = CanyonSpec()) -> SceneDescription:
    """Deterministic street-canyon scene for a given (seed, spec).

    The seed jitters wall placement only; the topology (ground plane at
    z = 0, two walls, one rooftop slab above the sensor FoV) is fixed. The
    domain extends ground_margin below the ground plane so the volume under
    the road exists (it is never observed and will classify unknown), which
    keeps the certified-empty region away from the domain floor.
    """
    rng = np.random.default_rng(seed)
    ya = spec.wall_inset + rng.uniform(0.0, spec.wall_jitter)        # wall A near face
    yb = spec.width - spec.wall_inset - rng.uniform(0.0, spec.wall_jitter)  # wall B far face

    ground = Rect(axis=2, level=0.0, lo=(0.0, 0.0), hi=(spec.length, spec.width))
    wall_a = Box((0.0, ya, 0.0), (spec.length, ya + spec.wall_thickness, spec.wall_height))
    wall_b = Box((0.0, yb - spec.wall_thickness, 0.0), (spec.length, yb, spec.wall_height))
    roof = Box(
        (0.0, max(0.0, ya - spec.roof_overhang), spec.wall_height),
        (
            spec.length,
            min(spec.width, ya + spec.wall_thickness + spec.roof_overhang),
            spec.wall_height + spec.roof_thickness,
        ),
    )

    street_mid = 0.5 * ((ya + spec.wall_thickness) + (yb - spec.wall_thickness))
    if spec.sensor_count == 1:
        xs = [0.5 * spec.length]
    else:
        x0 = 0.5 * (1.0 - spec.sensor_span) * spec.length
        xs = [
            x0 + spec.sensor_span * spec.length * i / (spec.sensor_count - 1)
            for i in range(spec.sensor_count)
        ]
    sensors = [
        SensorPose(position=(x, street_mid, spec.sensor_height), yaw_deg=0.0, pitch_deg=0.0)
        for x in xs
    ]

    scene = SceneDescription(
        domain_lo=np.array([0.0, 0.0, -spec.ground_margin]),
        domain_hi=np.array([spec.length, spec.width, spec.height - spec.ground_margin]),
        boxes=[wall_a, wall_b, roof],
        rects=[ground],
        sensors=sensors,
    )

    # Rooftop must sit above what any sensor can see at the FoV cutoff.
    reach = np.hypot(spec.length, spec.width)
    z_visible = spec.sensor_height + np.tan(np.radians(spec.fov_cut_deg)) * reach
    if spec.wall_height <= z_visible:
        raise ValueError(
            f"rooftop at z={spec.wall_height} is visible below the FoV cutoff ({z_visible:.2f} m)"
        )

    oracle = GroundTruthOracle(scene)
    for s in scene.sensors:
        if oracle.contains(s.position, tol=0.0):
            raise ValueError(f"sensor {s.position} lies inside geometry")
    return scene
