"""Spherical range-image projection and the point<->pixel correspondence
needed to bring per-pixel semantics back onto points.

A scan is projected onto a height x width raster indexed by elevation (row)
and azimuth (column). On pixel collisions the nearer point wins; empty pixels
hold -1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .core import NUM_CLASSES, PointCloud


@dataclass(frozen=True)
class RangeImageSpec:
    """Raster geometry of the spherical projection.

    Defaults match a 64-beam spinning sensor: 64 rows over an elevation span
    of [-25, +3] degrees, 2048 azimuth columns.
    """

    width: int = 2048
    height: int = 64
    fov_up: float = 3.0
    fov_down: float = -25.0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("range image needs at least one row and column")
        if not self.fov_up > self.fov_down:
            raise ValueError(
                f"fov_up ({self.fov_up}) must exceed fov_down ({self.fov_down})"
            )


@dataclass(frozen=True)
class RangeImage:
    """Projected scan: range and intensity rasters plus the winning point index.

    range/intensity are -1 where no point projects; point_index is -1 there
    and otherwise holds the index of the collision winner.
    """

    spec: RangeImageSpec
    range: NDArray[np.float64]
    intensity: NDArray[np.float64]
    point_index: NDArray[np.int64]
    skipped: int = 0  # zero-norm points that could not be projected

    def __post_init__(self):
        shape = (self.spec.height, self.spec.width)
        for name in ("range", "intensity", "point_index"):
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
        filled = self.point_index >= 0
        if (self.range[filled] < 0).any() or (self.range[~filled] != -1.0).any():
            raise ValueError("range raster inconsistent with point_index")


def pixel_coords(
    cloud: PointCloud, spec: RangeImageSpec
) -> tuple[NDArray[np.int64], NDArray[np.int64], NDArray[np.float64], NDArray[np.bool_]]:
    """Per-point pixel of the spherical projection.

    Returns (rows, cols, ranges, valid); valid is False for zero-norm points,
    whose row/col are undefined. Rows and columns are clamped to the raster.
    """
    x, y, z = cloud.xyz[:, 0], cloud.xyz[:, 1], cloud.xyz[:, 2]
    ranges = np.linalg.norm(cloud.xyz, axis=1)
    valid = ranges > 0.0

    fov_up = np.deg2rad(spec.fov_up)
    fov_down = np.deg2rad(spec.fov_down)
    fov = fov_up - fov_down

    with np.errstate(invalid="ignore", divide="ignore"):
        yaw = np.arctan2(y, x)
        elevation = np.arcsin(np.divide(z, ranges, where=valid, out=np.zeros_like(z)))

    cols = np.floor(spec.width * 0.5 * (1.0 - yaw / np.pi)).astype(np.int64)
    rows = np.floor(spec.height * (1.0 - (elevation - fov_down) / fov)).astype(np.int64)
    np.clip(cols, 0, spec.width - 1, out=cols)
    np.clip(rows, 0, spec.height - 1, out=rows)
    return rows, cols, ranges, valid


def project_to_range_image(cloud: PointCloud, spec: RangeImageSpec | None = None) -> RangeImage:
    """Project a cloud onto the spherical raster, nearest point winning each pixel.

    Ties on equal range go to the lower point index, so the result is
    deterministic for a given input order. Points at the exact origin are
    skipped and counted, not an error.
    """
    spec = spec or RangeImageSpec()
    rows, cols, ranges, valid = pixel_coords(cloud, spec)

    rng = np.full((spec.height, spec.width), -1.0)
    inten = np.full((spec.height, spec.width), -1.0)
    pidx = np.full((spec.height, spec.width), -1, dtype=np.int64)

    idx = np.nonzero(valid)[0]
    if len(idx):
        # Sort by (pixel, range, index) and keep the first hit per pixel:
        # nearest range wins, lower index breaks exact ties.
        flat = rows[idx] * spec.width + cols[idx]
        order = np.lexsort((idx, ranges[idx], flat))
        flat_sorted = flat[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = flat_sorted[1:] != flat_sorted[:-1]
        winners = idx[order[first]]
        r_w, c_w = rows[winners], cols[winners]
        rng[r_w, c_w] = ranges[winners]
        inten[r_w, c_w] = cloud.intensity[winners]
        pidx[r_w, c_w] = winners

    return RangeImage(
        spec=spec,
        range=rng,
        intensity=inten,
        point_index=pidx,
        skipped=int(len(cloud) - valid.sum()),
    )


def lift_pixel_semantics(
    image: RangeImage, pixel_probs: np.ndarray, cloud: PointCloud
) -> PointCloud:
    """Attach per-pixel class probabilities back onto the points of a cloud.

    Every point is re-projected to its pixel (so collision losers receive the
    winner's vector); points landing on pixels whose probability mass is zero
    get the uniform distribution.
    """
    pixel_probs = np.asarray(pixel_probs, dtype=np.float64)
    expected = (image.spec.height, image.spec.width, NUM_CLASSES)
    if pixel_probs.shape != expected:
        raise ValueError(
            f"pixel probability raster has shape {pixel_probs.shape}, expected {expected}"
        )

    rows, cols, _, valid = pixel_coords(cloud, image.spec)
    probs = np.full((len(cloud), NUM_CLASSES), 1.0 / NUM_CLASSES)
    if valid.any():
        picked = pixel_probs[rows[valid], cols[valid]]
        mass = picked.sum(axis=1)
        empty = mass <= 0.0
        picked[empty] = 1.0 / NUM_CLASSES
        probs[valid] = picked
    return cloud.with_probabilities(probs)
