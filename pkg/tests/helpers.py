"""Shared oracles for the test suite.

Everything here is intentionally slow and simple: independent reference
implementations that the fast production code is checked against.
"""

import numpy as np

from semgrid import GridSpec, cell_index


def sampled_cells(origin, endpoint, spec: GridSpec, n_samples: int = 20001):
    """Cells hit by dense parameter sampling along a segment.

    Samples the segment at ``n_samples`` evenly spaced parameters and
    collects the grid cell of every in-bounds sample.  This under-reports
    cells the segment merely grazes, so it is used as a subset check.
    """
    origin = np.asarray(origin, dtype=np.float64)
    endpoint = np.asarray(endpoint, dtype=np.float64)
    t = np.linspace(0.0, 1.0, n_samples)
    pts = origin[None, :] + t[:, None] * (endpoint - origin)[None, :]
    cells = set()
    for p in pts:
        idx = cell_index(p[0], p[1], spec)
        if idx is not None:
            cells.add(idx)
    return cells


def segment_overlaps_cell(origin, endpoint, i, j, spec: GridSpec, eps=1e-12):
    """Whether the 2D segment intersects the closed cell (i, j).

    Liang-Barsky clipping of the segment against the closed cell rectangle;
    a touch of the boundary (single point) counts as overlap.  This is the
    soundness oracle: every cell the traversal reports must satisfy it.
    """
    x0 = spec.x_min + i * spec.cell_size
    x1 = x0 + spec.cell_size
    y0 = spec.y_min + j * spec.cell_size
    y1 = y0 + spec.cell_size
    ox, oy = float(origin[0]), float(origin[1])
    dx = float(endpoint[0]) - ox
    dy = float(endpoint[1]) - oy
    t_lo, t_hi = 0.0, 1.0
    for d, lo, hi, o in ((dx, x0, x1, ox), (dy, y0, y1, oy)):
        if abs(d) < eps:
            if o < lo - eps or o > hi + eps:
                return False
            continue
        ta = (lo - o) / d
        tb = (hi - o) / d
        if ta > tb:
            ta, tb = tb, ta
        t_lo = max(t_lo, ta)
        t_hi = min(t_hi, tb)
    return t_lo <= t_hi + eps


def brute_force_detection_layers(cloud, spec: GridSpec):
    """Per-cell max height, min height and mean intensity via a plain dict."""
    groups: dict[tuple[int, int], list[int]] = {}
    for k in range(len(cloud)):
        idx = cell_index(float(cloud.xyz[k, 0]), float(cloud.xyz[k, 1]), spec)
        if idx is None:
            continue
        groups.setdefault(idx, []).append(k)
    z_max = np.zeros((spec.n_x, spec.n_y), dtype=np.float64)
    z_min = np.zeros_like(z_max)
    inten = np.zeros_like(z_max)
    valid = np.zeros((spec.n_x, spec.n_y), dtype=bool)
    for (i, j), ks in groups.items():
        zs = cloud.xyz[ks, 2]
        z_max[i, j] = zs.max()
        z_min[i, j] = zs.min()
        inten[i, j] = float(np.mean(cloud.intensity[ks]))
        valid[i, j] = True
    return z_max, z_min, inten, valid


def numeric_gradient(f, x, h=1e-5):
    """Central-difference gradient of scalar ``f`` at array ``x``."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        fp = f(x)
        x[idx] = orig - h
        fm = f(x)
        x[idx] = orig
        g[idx] = (fp - fm) / (2.0 * h)
        it.iternext()
    return g
