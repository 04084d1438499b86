"""Foundational types: points, poses, top-view grid geometry, and the
eleven-class label taxonomy with raw-label remapping.

Coordinate convention is the sensor frame: x forward, y left, z up, all in
meters. The top-view grid partitions the xy-plane into half-open cells of
equal size; index i runs along x, index j along y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Mapping, Sequence

import numpy as np
from numpy.typing import NDArray


class ClassId(IntEnum):
    """The eleven semantic classes, in fixed order."""

    BUILDING = 0
    PARKING = 1
    PEDESTRIAN = 2
    POLE = 3
    ROAD = 4
    SIDEWALK = 5
    TERRAIN = 6
    TRUNK = 7
    TWO_WHEEL = 8
    VEGETATION = 9
    VEHICLE = 10


NUM_CLASSES = 11

CLASS_NAMES: tuple[str, ...] = (
    "building",
    "parking",
    "pedestrian",
    "pole",
    "road",
    "sidewalk",
    "terrain",
    "trunk",
    "two-wheel",
    "vegetation",
    "vehicle",
)

#: Label value for cells/points that carry no class (unlabeled, empty, ...).
IGNORE = -1

#: Sentinel used internally for raw ids absent from a ClassMap.
_UNKNOWN = -2

#: Movable classes; used for smear rejection when aggregating scans.
DYNAMIC_CLASSES = frozenset(
    {ClassId.VEHICLE, ClassId.TWO_WHEEL, ClassId.PEDESTRIAN}
)


@dataclass(frozen=True)
class Point:
    """One LiDAR return: position in meters, reflectance in [0, 1]."""

    x: float
    y: float
    z: float
    intensity: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z, self.intensity)):
            raise ValueError(f"point has non-finite component: {self}")
        if not 0.0 <= self.intensity <= 1.0:
            raise ValueError(f"intensity {self.intensity} outside [0, 1]")


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PointCloud:
    """Columnar point set with optional per-point labels and class probabilities.

    xyz: (n, 3) float64 positions in the sensor frame.
    intensity: (n,) float64 in [0, 1].
    labels: optional (n,) int16 of ClassId values, IGNORE for unlabeled points.
    probabilities: optional (n, 11) float64; each row sums to 1 within 1e-5.

    Arrays are validated and made read-only at construction; operations on
    clouds are pure and return new instances.
    """

    xyz: NDArray[np.float64]
    intensity: NDArray[np.float64]
    labels: NDArray[np.int16] | None = None
    probabilities: NDArray[np.float64] | None = None

    def __post_init__(self):
        xyz = np.ascontiguousarray(self.xyz, dtype=np.float64)
        if xyz.ndim != 2 or xyz.shape[1] != 3:
            raise ValueError(f"xyz must be (n, 3), got {xyz.shape}")
        if not np.isfinite(xyz).all():
            raise ValueError("xyz contains non-finite values")
        inten = np.ascontiguousarray(self.intensity, dtype=np.float64)
        if inten.shape != (len(xyz),):
            raise ValueError(
                f"intensity length {inten.shape} does not match {len(xyz)} points"
            )
        if not np.isfinite(inten).all():
            raise ValueError("intensity contains non-finite values")
        if len(inten) and (inten.min() < 0.0 or inten.max() > 1.0):
            raise ValueError("intensity outside [0, 1]")
        object.__setattr__(self, "xyz", _freeze(xyz))
        object.__setattr__(self, "intensity", _freeze(inten))

        if self.labels is not None:
            labels = np.ascontiguousarray(self.labels, dtype=np.int16)
            if labels.shape != (len(xyz),):
                raise ValueError("labels length does not match point count")
            bad = (labels < IGNORE) | (labels >= NUM_CLASSES)
            if bad.any():
                raise ValueError(
                    f"labels contain values outside [-1, {NUM_CLASSES - 1}]"
                )
            object.__setattr__(self, "labels", _freeze(labels))

        if self.probabilities is not None:
            probs = np.ascontiguousarray(self.probabilities, dtype=np.float64)
            if probs.shape != (len(xyz), NUM_CLASSES):
                raise ValueError(
                    f"probabilities must be (n, {NUM_CLASSES}), got {probs.shape}"
                )
            validate_probability_rows(probs)
            object.__setattr__(self, "probabilities", _freeze(probs))

    def __len__(self) -> int:
        return len(self.xyz)

    @classmethod
    def from_points(cls, points: Sequence[Point]) -> "PointCloud":
        xyz = np.array([[p.x, p.y, p.z] for p in points], dtype=np.float64)
        xyz = xyz.reshape(-1, 3)
        inten = np.array([p.intensity for p in points], dtype=np.float64)
        return cls(xyz=xyz, intensity=inten)

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(xyz=np.zeros((0, 3)), intensity=np.zeros(0))

    def with_labels(self, labels: np.ndarray) -> "PointCloud":
        return PointCloud(self.xyz, self.intensity, labels, self.probabilities)

    def with_probabilities(self, probabilities: np.ndarray) -> "PointCloud":
        return PointCloud(self.xyz, self.intensity, self.labels, probabilities)


def validate_probability_rows(probs: np.ndarray, tol: float = 1e-5) -> None:
    """Raise if any row is negative or does not sum to 1 within ``tol``.

    The error names the first offending row index.
    """
    neg = probs < 0.0
    if neg.any():
        idx = int(np.argwhere(neg.any(axis=1))[0, 0])
        raise ValueError(f"probability row {idx} has negative entries")
    sums = probs.sum(axis=1)
    off = np.abs(sums - 1.0) > tol
    if off.any():
        idx = int(np.argmax(off))
        raise ValueError(
            f"probability row {idx} sums to {sums[idx]:.8f}, expected 1 +- {tol}"
        )


@dataclass(frozen=True)
class Pose:
    """Rigid transform: p' = R @ p + t."""

    rotation: NDArray[np.float64]
    translation: NDArray[np.float64]

    def __post_init__(self):
        r = np.ascontiguousarray(self.rotation, dtype=np.float64)
        t = np.ascontiguousarray(self.translation, dtype=np.float64)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValueError("pose needs a 3x3 rotation and a 3-vector translation")
        if not (np.isfinite(r).all() and np.isfinite(t).all()):
            raise ValueError("pose contains non-finite values")
        if np.abs(r @ r.T - np.eye(3)).max() > 1e-6:
            raise ValueError("rotation is not orthonormal (tolerance 1e-6)")
        if np.linalg.det(r) < 0.0:
            raise ValueError("rotation has negative determinant")
        object.__setattr__(self, "rotation", _freeze(r))
        object.__setattr__(self, "translation", _freeze(t))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "Pose":
        """Build from a 3x4 or 4x4 row-major transform matrix."""
        m = np.asarray(m, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def compose(self, other: "Pose") -> "Pose":
        """self after other: (self.compose(other)).apply(p) == self.apply(other.apply(p))."""
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def apply(self, xyz: np.ndarray) -> np.ndarray:
        return np.asarray(xyz, dtype=np.float64) @ self.rotation.T + self.translation


@dataclass(frozen=True)
class GridSpec:
    """Top-view raster geometry.

    Cells are half-open: cell (i, j) covers
    [x_min + i*cell_size, x_min + (i+1)*cell_size) x [y_min + j*cell, ...).
    The defaults center the sensor and give exactly 1001 x 501 cells of
    0.1 m over x in [-50.05, 50.05), y in [-25.05, 25.05).
    """

    x_min: float = -50.05
    y_min: float = -25.05
    cell_size: float = 0.1
    n_x: int = 1001
    n_y: int = 501

    def __post_init__(self):
        if not (math.isfinite(self.x_min) and math.isfinite(self.y_min)):
            raise ValueError("grid origin must be finite")
        if not (math.isfinite(self.cell_size) and self.cell_size > 0.0):
            raise ValueError(f"cell_size must be positive, got {self.cell_size}")
        if self.n_x < 1 or self.n_y < 1:
            raise ValueError("grid needs at least one cell per axis")

    @property
    def x_max(self) -> float:
        return self.x_min + self.n_x * self.cell_size

    @property
    def y_max(self) -> float:
        return self.y_min + self.n_y * self.cell_size

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_x, self.n_y)


def cell_index(x: float, y: float, spec: GridSpec) -> tuple[int, int] | None:
    """Map a point to its grid cell, or None when out of bounds.

    Half-open floor semantics: a point exactly on a cell's max boundary
    belongs to the next cell.
    """
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError(f"non-finite coordinates ({x}, {y})")
    i = math.floor((x - spec.x_min) / spec.cell_size)
    j = math.floor((y - spec.y_min) / spec.cell_size)
    if 0 <= i < spec.n_x and 0 <= j < spec.n_y:
        return (i, j)
    return None


def cell_indices(
    xy: np.ndarray, spec: GridSpec
) -> tuple[NDArray[np.int64], NDArray[np.int64], NDArray[np.bool_]]:
    """Vectorized cell_index over an (n, 2+) array of xy coordinates.

    Returns (i, j, in_bounds); i and j are only meaningful where in_bounds.
    """
    xy = np.asarray(xy, dtype=np.float64)
    if not np.isfinite(xy[:, :2]).all():
        raise ValueError("non-finite coordinates")
    i = np.floor((xy[:, 0] - spec.x_min) / spec.cell_size).astype(np.int64)
    j = np.floor((xy[:, 1] - spec.y_min) / spec.cell_size).astype(np.int64)
    ok = (i >= 0) & (i < spec.n_x) & (j >= 0) & (j < spec.n_y)
    return i, j, ok


def transform_points(cloud: PointCloud, pose: Pose) -> PointCloud:
    """Rigidly transform a cloud; intensity, labels and probabilities carry over."""
    return PointCloud(
        xyz=pose.apply(cloud.xyz),
        intensity=cloud.intensity,
        labels=cloud.labels,
        probabilities=cloud.probabilities,
    )


# --- raw-label remapping -------------------------------------------------

@dataclass(frozen=True)
class ClassMap:
    """Total mapping from raw 16-bit dataset labels to ClassId or IGNORE."""

    table: Mapping[int, int] = field(repr=False)

    def __post_init__(self):
        for raw, target in self.table.items():
            if not 0 <= raw < 65536:
                raise ValueError(f"raw label {raw} outside 16-bit range")
            if target != IGNORE and not 0 <= target < NUM_CLASSES:
                raise ValueError(f"raw label {raw} maps to invalid target {target}")
        if 0 in self.table and self.table[0] != IGNORE:
            raise ValueError("raw label 0 (unlabeled) must map to IGNORE")

    def lookup_array(self) -> NDArray[np.int16]:
        """Dense 65536-entry lookup; unmapped ids hold the unknown sentinel."""
        lut = np.full(65536, _UNKNOWN, dtype=np.int16)
        for raw, target in self.table.items():
            lut[raw] = target
        return lut


def remap_label(raw: int, class_map: ClassMap) -> int:
    """Map one raw label to a ClassId value or IGNORE.

    Raw ids absent from the map raise instead of silently ignoring.
    """
    try:
        return class_map.table[int(raw)]
    except KeyError:
        raise ValueError(f"unknown raw label {raw}") from None


def remap_labels(raw: np.ndarray, class_map: ClassMap) -> NDArray[np.int16]:
    """Vectorized remap_label; raises listing the unknown ids, if any."""
    raw = np.asarray(raw)
    lut = class_map.lookup_array()
    out = lut[raw.astype(np.int64)]
    if (out == _UNKNOWN).any():
        bad = sorted(int(v) for v in np.unique(raw[out == _UNKNOWN]))
        raise ValueError(f"unknown raw labels: {bad}")
    return out


# Default SemanticKITTI vocabulary reduced to the eleven classes. Moving
# variants collapse onto their static counterpart; riders count as two-wheel;
# classes without a counterpart in the reduced set are ignored.
DEFAULT_CLASS_TABLE: dict[int, int] = {
    0: IGNORE,  # unlabeled
    1: IGNORE,  # outlier
    10: ClassId.VEHICLE,  # car
    11: ClassId.TWO_WHEEL,  # bicycle
    13: ClassId.VEHICLE,  # bus
    15: ClassId.TWO_WHEEL,  # motorcycle
    16: ClassId.VEHICLE,  # on-rails
    18: ClassId.VEHICLE,  # truck
    20: ClassId.VEHICLE,  # other-vehicle
    30: ClassId.PEDESTRIAN,  # person
    31: ClassId.TWO_WHEEL,  # bicyclist
    32: ClassId.TWO_WHEEL,  # motorcyclist
    40: ClassId.ROAD,
    44: ClassId.PARKING,
    48: ClassId.SIDEWALK,
    49: ClassId.PARKING,  # other-ground
    50: ClassId.BUILDING,
    51: ClassId.BUILDING,  # fence
    52: IGNORE,  # other-structure
    60: ClassId.ROAD,  # lane-marking
    70: ClassId.VEGETATION,
    71: ClassId.TRUNK,
    72: ClassId.TERRAIN,
    80: ClassId.POLE,
    81: ClassId.POLE,  # traffic-sign
    99: IGNORE,  # other-object
    252: ClassId.VEHICLE,  # moving-car
    253: ClassId.TWO_WHEEL,  # moving-bicyclist
    254: ClassId.PEDESTRIAN,  # moving-person
    255: ClassId.TWO_WHEEL,  # moving-motorcyclist
    256: ClassId.VEHICLE,  # moving-on-rails
    257: ClassId.VEHICLE,  # moving-bus
    258: ClassId.VEHICLE,  # moving-truck
    259: ClassId.VEHICLE,  # moving-other-vehicle
}

DEFAULT_CLASS_MAP = ClassMap(table=DEFAULT_CLASS_TABLE)
