"""Per-cell aggregation of per-point semantic predictions.

Four encodings over the top-view grid: class histograms, their argmax,
summed class probabilities, and mean class probabilities. Plus a synthetic
probability generator for tests and demos, standing in for a real per-point
classifier.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .core import IGNORE, NUM_CLASSES, GridSpec, PointCloud, cell_indices

HISTOGRAM = "histogram"
SUM = "sum"
MEAN = "mean"
_KINDS = (HISTOGRAM, SUM, MEAN)


@dataclass(frozen=True)
class SemanticGrid:
    """Per-cell class mass (counts or probability) plus the point count.

    `kind` records how `mass` was produced: "histogram" holds exact per-class
    point counts, "sum" holds summed probability rows, "mean" holds the
    per-cell average row. Channel sums tie to `count`: exactly for
    histograms, within 1e-4 for sums, and mean rows of occupied cells sum
    to 1 within 1e-4.
    """

    spec: GridSpec
    mass: NDArray[np.float64]
    count: NDArray[np.float64]
    kind: str

    def __post_init__(self):
        mass = np.ascontiguousarray(self.mass, dtype=np.float64)
        count = np.ascontiguousarray(self.count, dtype=np.float64)
        expected = self.spec.shape + (NUM_CLASSES,)
        if mass.shape != expected:
            raise ValueError(f"mass shape {mass.shape}, expected {expected}")
        if count.shape != self.spec.shape:
            raise ValueError(f"count shape {count.shape}, expected {self.spec.shape}")
        if self.kind not in _KINDS:
            raise ValueError(f"unknown semantic grid kind {self.kind!r}")
        if not np.isfinite(mass).all() or (mass < 0).any():
            raise ValueError("mass must be finite and nonnegative")
        if (count < 0).any() or (count != np.round(count)).any():
            raise ValueError("count must hold nonnegative integers")
        sums = mass.sum(axis=2)
        if self.kind == HISTOGRAM:
            if (sums != count).any():
                raise ValueError("histogram channel sums must equal count exactly")
        elif self.kind == SUM:
            if np.abs(sums - count).max(initial=0.0) > 1e-4:
                raise ValueError("summed channel sums must equal count within 1e-4")
        else:
            occupied = count > 0
            if occupied.any() and np.abs(sums[occupied] - 1.0).max() > 1e-4:
                raise ValueError("mean rows of occupied cells must sum to 1 within 1e-4")
            if (sums[~occupied] != 0).any():
                raise ValueError("empty cells must hold zero mass")
        mass.setflags(write=False)
        count.setflags(write=False)
        object.__setattr__(self, "mass", mass)
        object.__setattr__(self, "count", count)

    @property
    def validity(self) -> NDArray[np.bool_]:
        return self.count > 0


@dataclass(frozen=True)
class ArgmaxGrid:
    """Per-cell dominant class, -1 where no points contributed."""

    spec: GridSpec
    label: NDArray[np.int16]

    def __post_init__(self):
        label = np.ascontiguousarray(self.label, dtype=np.int16)
        if label.shape != self.spec.shape:
            raise ValueError(f"label shape {label.shape}, expected {self.spec.shape}")
        bad = (label != IGNORE) & ((label < 0) | (label >= NUM_CLASSES))
        if bad.any():
            raise ValueError("labels must be class ids or the ignore marker")
        label.setflags(write=False)
        object.__setattr__(self, "label", label)

    @property
    def validity(self) -> NDArray[np.bool_]:
        return self.label != IGNORE


def _hard_labels(cloud: PointCloud) -> np.ndarray:
    if cloud.labels is not None:
        return np.asarray(cloud.labels, dtype=np.int64)
    if cloud.probabilities is not None:
        return np.argmax(cloud.probabilities, axis=1)
    raise ValueError("cloud carries neither labels nor probabilities")


def encode_histogram(cloud: PointCloud, spec: GridSpec) -> SemanticGrid:
    """Count per-cell hard class predictions.

    Uses the cloud's labels, or the per-point argmax when only probability
    rows are present. Ignore-labeled and out-of-bounds points contribute
    nothing, to mass or to count.
    """
    labels = _hard_labels(cloud)
    i, j, ok = cell_indices(cloud.xyz, spec)
    keep = ok & (labels >= 0)
    flat = (i[keep] * spec.n_y + j[keep]) * NUM_CLASSES + labels[keep]
    n_cells = spec.n_x * spec.n_y
    mass = np.bincount(flat, minlength=n_cells * NUM_CLASSES).astype(np.float64)
    mass = mass.reshape(spec.shape + (NUM_CLASSES,))
    return SemanticGrid(spec=spec, mass=mass, count=mass.sum(axis=2), kind=HISTOGRAM)


def encode_argmax(hist: SemanticGrid) -> ArgmaxGrid:
    """Dominant class per cell; ties go to the lowest class id."""
    if hist.kind != HISTOGRAM:
        raise ValueError(f"argmax encoding needs a histogram grid, got {hist.kind!r}")
    label = np.argmax(hist.mass, axis=2).astype(np.int16)
    label[hist.count == 0] = IGNORE
    return ArgmaxGrid(spec=hist.spec, label=label)


def encode_summed(cloud: PointCloud, spec: GridSpec) -> SemanticGrid:
    """Sum per-point probability rows per cell.

    The accumulation order is fixed by sorting on (cell, row content), so
    any permutation of the input points produces a bit-identical raster.
    """
    if cloud.probabilities is None:
        raise ValueError("cloud carries no probability rows")
    probs = cloud.probabilities
    i, j, ok = cell_indices(cloud.xyz, spec)
    flat = i[ok] * spec.n_y + j[ok]
    rows = probs[ok]
    keys = tuple(rows[:, k] for k in range(NUM_CLASSES - 1, -1, -1)) + (flat,)
    order = np.lexsort(keys)
    n_cells = spec.n_x * spec.n_y
    mass = np.zeros((n_cells, NUM_CLASSES))
    np.add.at(mass, flat[order], rows[order])
    count = np.bincount(flat, minlength=n_cells).astype(np.float64)
    return SemanticGrid(
        spec=spec,
        mass=mass.reshape(spec.shape + (NUM_CLASSES,)),
        count=count.reshape(spec.shape),
        kind=SUM,
    )


def encode_mean(summed: SemanticGrid) -> SemanticGrid:
    """Average probability row per occupied cell; zeros elsewhere."""
    if summed.kind != SUM:
        raise ValueError(f"mean encoding needs a summed grid, got {summed.kind!r}")
    count = summed.count
    mass = np.divide(
        summed.mass,
        count[:, :, None],
        where=count[:, :, None] > 0,
        out=np.zeros_like(summed.mass),
    )
    return SemanticGrid(spec=summed.spec, mass=mass, count=count, kind=MEAN)


def synth_probabilities(
    labels: np.ndarray,
    flip_rate: float = 0.0,
    concentration: float = 8.0,
    seed: int = 0,
) -> NDArray[np.float64]:
    """Generate plausible per-point probability rows from hard labels.

    Each row is softmax(concentration * one_hot(target) + standard normal
    noise). The target is the true label with probability 1 - flip_rate and
    a uniformly random other class otherwise; ignore-labeled points get a
    uniformly random target. Deterministic per seed.
    """
    if not 0.0 <= flip_rate < 1.0:
        raise ValueError("flip_rate must lie in [0, 1)")
    if concentration <= 0.0:
        raise ValueError("concentration must be positive")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1:
        raise ValueError("labels must be one-dimensional")
    if ((labels != IGNORE) & ((labels < 0) | (labels >= NUM_CLASSES))).any():
        raise ValueError("labels must be class ids or the ignore marker")
    n = labels.shape[0]
    rng = np.random.default_rng(seed)

    target = labels.copy()
    flips = rng.random(n) < flip_rate
    flip_idx = np.flatnonzero(flips & (labels != IGNORE))
    offsets = rng.integers(1, NUM_CLASSES, size=flip_idx.size)
    target[flip_idx] = (labels[flip_idx] + offsets) % NUM_CLASSES
    unknown = np.flatnonzero(labels == IGNORE)
    target[unknown] = rng.integers(0, NUM_CLASSES, size=unknown.size)

    logits = rng.standard_normal((n, NUM_CLASSES))
    logits[np.arange(n), target] += concentration
    logits -= logits.max(axis=1, keepdims=True)
    rows = np.exp(logits)
    rows /= rows.sum(axis=1, keepdims=True)
    return rows
