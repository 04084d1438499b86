"""Multi-layer top-view grid map encoding.

Five layers per scan: per-cell max/min detection height and mean intensity
(sparse, from the points that land in a cell), plus ray-crossing count and
the minimum crossing height (semi-dense, from walking every ray's xy-path
across the grid with an exact DDA).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from numpy.typing import NDArray

from .core import GridSpec, PointCloud, cell_indices


@dataclass(frozen=True)
class GridLayer:
    """One named float raster over a grid, with per-cell validity.

    Invalid cells hold exactly 0.0; NaN is forbidden everywhere.
    """

    spec: GridSpec
    values: NDArray[np.float64]
    validity: NDArray[np.bool_]

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        validity = np.ascontiguousarray(self.validity, dtype=bool)
        if values.shape != self.spec.shape or validity.shape != self.spec.shape:
            raise ValueError(
                f"layer shape {values.shape} does not match grid {self.spec.shape}"
            )
        if not np.isfinite(values).all():
            raise ValueError("layer contains non-finite values")
        if values[~validity].any():
            raise ValueError("invalid cells must hold 0.0")
        values.setflags(write=False)
        validity.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "validity", validity)

    @classmethod
    def from_sparse(
        cls, spec: GridSpec, values: np.ndarray, validity: np.ndarray
    ) -> "GridLayer":
        """Zero-fill invalid cells and wrap."""
        out = np.where(validity, values, 0.0)
        return cls(spec=spec, values=out, validity=validity)


@dataclass(frozen=True)
class GridMapStack:
    """The five co-registered layers of one scan."""

    z_max: GridLayer
    z_min: GridLayer
    intensity: GridLayer
    observations: GridLayer
    occlusion_upper: GridLayer

    def __post_init__(self):
        spec = self.z_max.spec
        for layer in (self.z_min, self.intensity, self.observations, self.occlusion_upper):
            if layer.spec != spec:
                raise ValueError("all layers must share one GridSpec")
        if not (
            np.array_equal(self.z_max.validity, self.z_min.validity)
            and np.array_equal(self.z_max.validity, self.intensity.validity)
        ):
            raise ValueError("detection layers must be valid on the same cells")
        v = self.z_max.validity
        if (self.z_max.values[v] < self.z_min.values[v]).any():
            raise ValueError("z_max < z_min on a valid cell")

    @property
    def spec(self) -> GridSpec:
        return self.z_max.spec

    LAYER_NAMES = ("z_max", "z_min", "intensity", "observations", "occlusion_upper")

    def layers(self) -> tuple[GridLayer, ...]:
        return (self.z_max, self.z_min, self.intensity, self.observations, self.occlusion_upper)


@dataclass(frozen=True)
class Ray:
    """Sensor-to-detection segment."""

    origin: NDArray[np.float64]
    endpoint: NDArray[np.float64]

    def __post_init__(self):
        origin = np.ascontiguousarray(self.origin, dtype=np.float64)
        endpoint = np.ascontiguousarray(self.endpoint, dtype=np.float64)
        if origin.shape != (3,) or endpoint.shape != (3,):
            raise ValueError("ray origin and endpoint must be 3-vectors")
        if not (np.isfinite(origin).all() and np.isfinite(endpoint).all()):
            raise ValueError("ray contains non-finite values")
        if np.array_equal(origin, endpoint):
            raise ValueError("ray origin equals endpoint")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "endpoint", endpoint)


# --- exact grid traversal -------------------------------------------------
#
# The walk runs in cell units (u = (x - x_min) / cell_size) so cells are unit
# squares. Crossings are parametrized by w in [0, 1] along the grid-clipped
# segment; z is interpolated at each crossing. An exact corner hit
# (both axis crossings at the same w) reports the two side neighbors before
# the diagonal cell, so corner-touching cells count as crossed (supercover).


@njit(cache=True)
def _traverse_segment(
    ox, oy, oz, ex, ey, ez, x_min, y_min, cell, n_x, n_y, out_i, out_j, out_z
):
    u0 = (ox - x_min) / cell
    v0 = (oy - y_min) / cell
    u1 = (ex - x_min) / cell
    v1 = (ey - y_min) / cell
    du = u1 - u0
    dv = v1 - v0

    n = 0
    if du == 0.0 and dv == 0.0:
        i = int(math.floor(u0))
        j = int(math.floor(v0))
        if 0 <= i < n_x and 0 <= j < n_y:
            out_i[n] = i
            out_j[n] = j
            out_z[n] = min(oz, ez)
            n += 1
        return n

    # Liang-Barsky clip of s in [0, 1] against the closed grid box.
    s_enter = 0.0
    s_exit = 1.0
    for axis in range(4):
        if axis == 0:
            p, q = -du, u0
        elif axis == 1:
            p, q = du, n_x - u0
        elif axis == 2:
            p, q = -dv, v0
        else:
            p, q = dv, n_y - v0
        if p == 0.0:
            if q < 0.0:
                return 0
        else:
            r = q / p
            if p < 0.0:
                if r > s_enter:
                    s_enter = r
            else:
                if r < s_exit:
                    s_exit = r
    if s_enter > s_exit:
        return 0

    ub = u0 + s_enter * du
    vb = v0 + s_enter * dv
    zb = oz + s_enter * (ez - oz)
    ze = oz + s_exit * (ez - oz)
    DU = (s_exit - s_enter) * du
    DV = (s_exit - s_enter) * dv
    DZ = ze - zb

    i = int(math.floor(ub))
    j = int(math.floor(vb))
    # Boundary entries: floor puts an entry exactly on the max edge (or a hair
    # outside from clip rounding) into a nonexistent cell; fold it onto the
    # cell actually entered, or bail out when the touch is degenerate.
    if i < 0:
        if DU > 0.0:
            i = 0
        else:
            return 0
    elif i >= n_x:
        if DU < 0.0:
            i = n_x - 1
        else:
            return 0
    if j < 0:
        if DV > 0.0:
            j = 0
        else:
            return 0
    elif j >= n_y:
        if DV < 0.0:
            j = n_y - 1
        else:
            return 0

    step_i = 0
    wx = np.inf
    dwx = np.inf
    if DU > 0.0:
        step_i = 1
        wx = ((i + 1) - ub) / DU
        dwx = 1.0 / DU
    elif DU < 0.0:
        step_i = -1
        wx = (i - ub) / DU
        dwx = -1.0 / DU

    step_j = 0
    wy = np.inf
    dwy = np.inf
    if DV > 0.0:
        step_j = 1
        wy = ((j + 1) - vb) / DV
        dwy = 1.0 / DV
    elif DV < 0.0:
        step_j = -1
        wy = (j - vb) / DV
        dwy = -1.0 / DV

    out_i[n] = i
    out_j[n] = j
    out_z[n] = zb
    n += 1

    while True:
        if wx < wy:
            if wx > 1.0:
                break
            w = wx
            i += step_i
            if i < 0 or i >= n_x:
                break
            out_i[n] = i
            out_j[n] = j
            out_z[n] = zb + w * DZ
            n += 1
            wx += dwx
        elif wy < wx:
            if wy > 1.0:
                break
            w = wy
            j += step_j
            if j < 0 or j >= n_y:
                break
            out_i[n] = i
            out_j[n] = j
            out_z[n] = zb + w * DZ
            n += 1
            wy += dwy
        else:
            # wx == wy: exact corner (both finite; a double-infinity segment
            # was handled as a single cell above).
            if wx > 1.0 or wx == np.inf:
                break
            w = wx
            z = zb + w * DZ
            ii = i + step_i
            jj = j + step_j
            if 0 <= ii < n_x:
                out_i[n] = ii
                out_j[n] = j
                out_z[n] = z
                n += 1
            if 0 <= jj < n_y:
                out_i[n] = i
                out_j[n] = jj
                out_z[n] = z
                n += 1
            i = ii
            j = jj
            if i < 0 or i >= n_x or j < 0 or j >= n_y:
                break
            out_i[n] = i
            out_j[n] = j
            out_z[n] = z
            n += 1
            wx += dwx
            wy += dwy
    return n


@njit(cache=True)
def _accumulate_rays(xyz, ox, oy, oz, x_min, y_min, cell, n_x, n_y, counts, min_height):
    cap = 3 * (n_x + n_y) + 8
    buf_i = np.empty(cap, np.int64)
    buf_j = np.empty(cap, np.int64)
    buf_z = np.empty(cap, np.float64)
    for k in range(xyz.shape[0]):
        ex = xyz[k, 0]
        ey = xyz[k, 1]
        ez = xyz[k, 2]
        if ex == ox and ey == oy and ez == oz:
            continue
        m = _traverse_segment(
            ox, oy, oz, ex, ey, ez, x_min, y_min, cell, n_x, n_y, buf_i, buf_j, buf_z
        )
        for t in range(m):
            i = buf_i[t]
            j = buf_j[t]
            counts[i, j] += 1.0
            if buf_z[t] < min_height[i, j]:
                min_height[i, j] = buf_z[t]


def traverse_ray(ray: Ray, spec: GridSpec) -> list[tuple[tuple[int, int], float]]:
    """Enumerate the grid cells crossed by a ray's xy-projection, in order.

    Each cell appears once with the ray height interpolated at cell entry.
    The endpoint's cell counts as crossed. The segment is clipped to the grid
    extent, so traversal starts at the grid entry point when the origin lies
    outside. A ray with zero xy extent yields its single cell with
    z = min(origin.z, endpoint.z). At an exact corner crossing the two side
    neighbors are reported before the diagonal cell, all at the corner height.
    """
    cap = 3 * (spec.n_x + spec.n_y) + 8
    buf_i = np.empty(cap, np.int64)
    buf_j = np.empty(cap, np.int64)
    buf_z = np.empty(cap, np.float64)
    n = _traverse_segment(
        float(ray.origin[0]),
        float(ray.origin[1]),
        float(ray.origin[2]),
        float(ray.endpoint[0]),
        float(ray.endpoint[1]),
        float(ray.endpoint[2]),
        spec.x_min,
        spec.y_min,
        spec.cell_size,
        spec.n_x,
        spec.n_y,
        buf_i,
        buf_j,
        buf_z,
    )
    return [
        ((int(buf_i[t]), int(buf_j[t])), float(buf_z[t])) for t in range(n)
    ]


def encode_detection_layers(
    cloud: PointCloud, spec: GridSpec
) -> tuple[GridLayer, GridLayer, GridLayer]:
    """Per-cell max height, min height, and mean intensity of the detections.

    Cells without points are invalid; out-of-bounds points are ignored. The
    mean accumulates (sum, count) in float64 and divides once.
    """
    n_cells = spec.n_x * spec.n_y
    z_max = np.full(n_cells, -np.inf)
    z_min = np.full(n_cells, np.inf)
    i, j, ok = cell_indices(cloud.xyz, spec)
    flat = i[ok] * spec.n_y + j[ok]
    z = cloud.xyz[ok, 2]
    np.maximum.at(z_max, flat, z)
    np.minimum.at(z_min, flat, z)
    counts = np.bincount(flat, minlength=n_cells).astype(np.float64)
    sums = np.bincount(flat, weights=cloud.intensity[ok], minlength=n_cells)
    valid = counts > 0
    mean = np.divide(sums, counts, where=valid, out=np.zeros(n_cells))

    shape = spec.shape
    valid = valid.reshape(shape)
    return (
        GridLayer.from_sparse(spec, z_max.reshape(shape), valid),
        GridLayer.from_sparse(spec, z_min.reshape(shape), valid),
        GridLayer.from_sparse(spec, mean.reshape(shape), valid),
    )


def encode_observation_layers(
    cloud: PointCloud,
    spec: GridSpec,
    sensor_origin: np.ndarray = (0.0, 0.0, 0.0),
) -> tuple[GridLayer, GridLayer]:
    """Ray-crossing count and minimum crossing height per cell.

    One ray per point, from the sensor origin to the detection; the height a
    ray contributes over a cell is sampled where it enters that cell. Cells
    crossed by no ray are invalid. Counts are exact integers stored as float.
    """
    origin = np.asarray(sensor_origin, dtype=np.float64)
    if origin.shape != (3,) or not np.isfinite(origin).all():
        raise ValueError("sensor origin must be a finite 3-vector")
    counts = np.zeros(spec.shape)
    min_height = np.full(spec.shape, np.inf)
    _accumulate_rays(
        np.ascontiguousarray(cloud.xyz),
        float(origin[0]),
        float(origin[1]),
        float(origin[2]),
        spec.x_min,
        spec.y_min,
        spec.cell_size,
        spec.n_x,
        spec.n_y,
        counts,
        min_height,
    )
    valid = counts > 0
    return (
        GridLayer.from_sparse(spec, counts, valid),
        GridLayer.from_sparse(spec, np.where(valid, min_height, 0.0), valid),
    )


def encode_multilayer(
    cloud: PointCloud,
    spec: GridSpec | None = None,
    sensor_origin: np.ndarray = (0.0, 0.0, 0.0),
) -> GridMapStack:
    """Encode a scan into the full five-layer stack."""
    spec = spec or GridSpec()
    z_max, z_min, intensity = encode_detection_layers(cloud, spec)
    observations, occlusion_upper = encode_observation_layers(cloud, spec, sensor_origin)
    return GridMapStack(
        z_max=z_max,
        z_min=z_min,
        intensity=intensity,
        observations=observations,
        occlusion_upper=occlusion_upper,
    )
