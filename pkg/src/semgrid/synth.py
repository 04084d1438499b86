"""Deterministic synthetic street scenes.

Generates labeled point clouds covering all eleven classes: a straight road
with sidewalks, parking, terrain, building facades, vegetation with trunks,
poles, pedestrians, a parked two-wheeler, and vehicles. One vehicle moves
between scans so pose-aggregated sequences exercise smear rejection.

Geometry lives in a fixed world frame; each scan is expressed in its sensor
frame (sensor moves along +x, identity rotation, ~1.7 m above ground).
"""

from __future__ import annotations

import numpy as np

from .core import ClassId, PointCloud, Pose
from .groundtruth import ScanSequence

_GROUND = -1.7
_SENSOR_STEP = 2.0
_CAR_START = 6.0
_CAR_STEP = 3.0

_INTENSITY_BASE = {
    ClassId.BUILDING: 0.45,
    ClassId.PARKING: 0.30,
    ClassId.PEDESTRIAN: 0.50,
    ClassId.POLE: 0.70,
    ClassId.ROAD: 0.25,
    ClassId.SIDEWALK: 0.35,
    ClassId.TERRAIN: 0.40,
    ClassId.TRUNK: 0.38,
    ClassId.TWO_WHEEL: 0.55,
    ClassId.VEGETATION: 0.52,
    ClassId.VEHICLE: 0.80,
}


def _rect(rng, n, x0, x1, y0, y1, z, jitter=0.02):
    pts = np.empty((n, 3))
    pts[:, 0] = rng.uniform(x0, x1, n)
    pts[:, 1] = rng.uniform(y0, y1, n)
    pts[:, 2] = z + rng.normal(0.0, jitter, n)
    return pts


def _wall(rng, n, x0, x1, y, z0, z1):
    pts = np.empty((n, 3))
    pts[:, 0] = rng.uniform(x0, x1, n)
    pts[:, 1] = y + rng.normal(0.0, 0.03, n)
    pts[:, 2] = rng.uniform(z0, z1, n)
    return pts


def _cylinder(rng, n, cx, cy, radius, z0, z1):
    theta = rng.uniform(0.0, 2.0 * np.pi, n)
    pts = np.empty((n, 3))
    pts[:, 0] = cx + radius * np.cos(theta)
    pts[:, 1] = cy + radius * np.sin(theta)
    pts[:, 2] = rng.uniform(z0, z1, n)
    return pts


def _blob(rng, n, cx, cy, cz, radius):
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return np.array([cx, cy, cz]) + radius * v


def _box(rng, n, cx, cy, half_x, half_y, z0, z1):
    """Sample the four side faces and the top of an axis-aligned box."""
    face = rng.integers(0, 5, n)
    pts = np.empty((n, 3))
    u = rng.uniform(-1.0, 1.0, n)
    v = rng.uniform(0.0, 1.0, n)
    pts[:, 2] = z0 + v * (z1 - z0)
    for f, sign in ((0, 1.0), (1, -1.0)):
        m = face == f
        pts[m, 0] = cx + sign * half_x
        pts[m, 1] = cy + u[m] * half_y
    for f, sign in ((2, 1.0), (3, -1.0)):
        m = face == f
        pts[m, 0] = cx + u[m] * half_x
        pts[m, 1] = cy + sign * half_y
    top = face == 4
    pts[top, 0] = cx + u[top] * half_x
    pts[top, 1] = cy + (2.0 * v[top] - 1.0) * half_y
    pts[top, 2] = z1
    return pts


def _surfaces(scan_index: int):
    """Ordered (class, weight, sampler) list; the draw order is fixed."""
    g = _GROUND
    car_x = _CAR_START + _CAR_STEP * scan_index
    tree_spots = [(-20.0, 14.0), (5.0, -14.0), (32.0, 15.0), (55.0, -13.5)]

    spec = [
        (ClassId.ROAD, 0.28, [lambda r, n: _rect(r, n, -60, 120, -7, 7, g)]),
        (
            ClassId.SIDEWALK,
            0.12,
            [
                lambda r, n: _rect(r, n, -60, 120, 7, 11, g + 0.15),
                lambda r, n: _rect(r, n, -60, 120, -11, -7, g + 0.15),
            ],
        ),
        (ClassId.PARKING, 0.05, [lambda r, n: _rect(r, n, 20, 40, 11, 18, g + 0.02)]),
        (
            ClassId.TERRAIN,
            0.14,
            [
                lambda r, n: _rect(r, n, -60, 15, 11, 30, g + 0.1, jitter=0.08),
                lambda r, n: _rect(r, n, -60, 120, -30, -11, g + 0.1, jitter=0.08),
            ],
        ),
        (
            ClassId.BUILDING,
            0.12,
            [
                lambda r, n: _wall(r, n, -40, 10, 18.0, g + 0.2, 6.0),
                lambda r, n: _wall(r, n, -60, 100, -18.0, g + 0.2, 6.0),
            ],
        ),
        (
            ClassId.VEGETATION,
            0.11,
            [
                (lambda x, y: lambda r, n: _blob(r, n, x, y, 1.2, 1.8))(x, y)
                for x, y in tree_spots
            ],
        ),
        (
            ClassId.TRUNK,
            0.03,
            [
                (lambda x, y: lambda r, n: _cylinder(r, n, x, y, 0.22, g, 0.4))(x, y)
                for x, y in tree_spots
            ],
        ),
        (
            ClassId.POLE,
            0.02,
            [
                (lambda x: lambda r, n: _cylinder(r, n, x, 11.3, 0.06, g, 3.5))(x)
                for x in (-15.0, 10.0, 35.0, 60.0)
            ],
        ),
        (
            ClassId.PEDESTRIAN,
            0.03,
            [
                lambda r, n: _cylinder(r, n, -6.0, 9.0, 0.25, g, 0.1),
                lambda r, n: _cylinder(r, n, 18.0, -8.8, 0.25, g, 0.05),
            ],
        ),
        (
            ClassId.TWO_WHEEL,
            0.02,
            [lambda r, n: _box(r, n, 8.0, 9.6, 0.9, 0.2, g, g + 1.1)],
        ),
        (
            ClassId.VEHICLE,
            0.08,
            [
                lambda r, n: _box(r, n, car_x, -2.0, 2.0, 0.9, g, g + 1.5),
                lambda r, n: _box(r, n, 25.0, 4.5, 2.0, 0.9, g, g + 1.4),
                lambda r, n: _box(r, n, 30.0, 14.0, 2.1, 0.9, g, g + 1.5),
            ],
        ),
    ]
    return spec


def synth_scene(
    seed: int = 0, n_points: int = 130_000, scan_index: int = 0
) -> PointCloud:
    """One labeled scan of the scene, in the sensor frame of ``scan_index``.

    Deterministic in (seed, scan_index, n_points). Some points fall outside
    the default grid extent on purpose.
    """
    if n_points < 0:
        raise ValueError("n_points must be nonnegative")
    rng = np.random.default_rng([seed, scan_index])
    spec = _surfaces(scan_index)
    if n_points == 0:
        return PointCloud.empty().with_labels(np.zeros(0, dtype=np.int16))

    weights = np.array([w for _, w, _ in spec])
    counts = np.floor(weights / weights.sum() * n_points).astype(int)
    if n_points >= len(spec) * 4:
        counts = np.maximum(counts, 4)
    counts[0] += n_points - counts.sum()
    counts[0] = max(counts[0], 0)

    xyz_parts = []
    label_parts = []
    for (cid, _, samplers), total in zip(spec, counts):
        if total <= 0:
            continue
        share = np.full(len(samplers), total // len(samplers))
        share[: total % len(samplers)] += 1
        for sampler, m in zip(samplers, share):
            if m > 0:
                xyz_parts.append(sampler(rng, int(m)))
        label_parts.append(np.full(total, int(cid), dtype=np.int16))

    xyz = np.concatenate(xyz_parts)[:n_points]
    labels = np.concatenate(label_parts)[:n_points]
    base = np.array([_INTENSITY_BASE[ClassId(c)] for c in range(11)])
    intensity = np.clip(base[labels] + rng.normal(0.0, 0.08, len(labels)), 0.0, 1.0)

    sensor = np.array([_SENSOR_STEP * scan_index, 0.0, 0.0])
    order = rng.permutation(len(xyz))
    return PointCloud(
        xyz=(xyz - sensor)[order], intensity=intensity[order], labels=labels[order]
    )


def scan_pose(scan_index: int) -> Pose:
    """Sensor pose of a scan: pure translation along the road."""
    return Pose(np.eye(3), np.array([_SENSOR_STEP * scan_index, 0.0, 0.0]))


def synth_sequence(
    seed: int = 0, count: int = 5, n_points: int = 20_000, reference: int | None = None
) -> ScanSequence:
    """A short drive through the scene; the reference defaults to the middle."""
    if count < 1:
        raise ValueError("count must be positive")
    clouds = tuple(synth_scene(seed, n_points, k) for k in range(count))
    poses = tuple(scan_pose(k) for k in range(count))
    if reference is None:
        reference = count // 2
    return ScanSequence(clouds=clouds, poses=poses, reference=reference)
