"""Per-cell ground-truth label grids.

Sparse grids vote over the labeled points of one scan. Dense grids aggregate
a window of scans into the reference scan's frame first, dropping movable
classes from the non-reference scans so moving objects leave no smears.
"""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .core import (
    DYNAMIC_CLASSES,
    IGNORE,
    NUM_CLASSES,
    GridSpec,
    PointCloud,
    Pose,
    cell_indices,
)


@dataclass(frozen=True)
class LabelGrid:
    """Per-cell class raster; -1 marks cells with no label."""

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


@dataclass(frozen=True)
class ScanSequence:
    """Labeled scans with their poses and a reference scan index."""

    clouds: tuple[PointCloud, ...]
    poses: tuple[Pose, ...]
    reference: int = 0

    def __post_init__(self):
        object.__setattr__(self, "clouds", tuple(self.clouds))
        object.__setattr__(self, "poses", tuple(self.poses))
        if len(self.clouds) == 0:
            raise ValueError("sequence has no scans")
        if len(self.clouds) != len(self.poses):
            raise ValueError(
                f"{len(self.clouds)} scans but {len(self.poses)} poses"
            )
        if not 0 <= self.reference < len(self.clouds):
            raise ValueError(f"reference index {self.reference} out of range")
        for k, cloud in enumerate(self.clouds):
            if cloud.labels is None:
                raise ValueError(f"scan {k} carries no labels")

    def __len__(self) -> int:
        return len(self.clouds)


def _vote(xyz: np.ndarray, labels: np.ndarray, spec: GridSpec) -> LabelGrid:
    """Majority vote per cell over non-ignore labels, ties to the lowest id."""
    i, j, ok = cell_indices(xyz, spec)
    keep = ok & (labels >= 0)
    n_cells = spec.n_x * spec.n_y
    flat = (i[keep] * spec.n_y + j[keep]) * NUM_CLASSES + labels[keep]
    hist = np.bincount(flat, minlength=n_cells * NUM_CLASSES)
    hist = hist.reshape(n_cells, NUM_CLASSES)
    label = np.argmax(hist, axis=1).astype(np.int16)
    label[hist.sum(axis=1) == 0] = IGNORE
    return LabelGrid(spec=spec, label=label.reshape(spec.shape))


def sparse_ground_truth(scan: PointCloud, spec: GridSpec) -> LabelGrid:
    """Label each cell by majority vote over the scan's points in it.

    Cells holding no labeled point stay ignore; ties resolve to the lowest
    class id.
    """
    if scan.labels is None:
        raise ValueError("scan carries no labels")
    return _vote(scan.xyz, np.asarray(scan.labels, dtype=np.int64), spec)


def dense_ground_truth(
    seq: ScanSequence,
    spec: GridSpec,
    window: int = 50,
    dynamic_classes: Iterable[int] = DYNAMIC_CLASSES,
) -> LabelGrid:
    """Aggregate a window of scans into the reference frame and vote.

    Scans [reference - window, reference + window] (truncated at the sequence
    ends) are mapped into the reference scan's frame. Points of non-reference
    scans carrying a movable class are rejected before voting, so moving
    objects contribute only where the reference scan itself saw them.
    """
    if window < 0:
        raise ValueError("window must be nonnegative")
    dynamic = frozenset(int(c) for c in dynamic_classes)
    for c in dynamic:
        if not 0 <= c < NUM_CLASSES:
            raise ValueError(f"dynamic class id {c} out of range")

    ref = seq.reference
    to_world_inv = seq.poses[ref].inverse()
    lo = max(0, ref - window)
    hi = min(len(seq) - 1, ref + window)

    xyz_parts = []
    label_parts = []
    for k in range(lo, hi + 1):
        cloud = seq.clouds[k]
        labels = np.asarray(cloud.labels, dtype=np.int64)
        if k == ref:
            xyz = cloud.xyz
        else:
            keep = ~np.isin(labels, list(dynamic)) if dynamic else slice(None)
            labels = labels[keep]
            rel = to_world_inv.compose(seq.poses[k])
            xyz = rel.apply(cloud.xyz[keep])
        xyz_parts.append(xyz)
        label_parts.append(labels)

    return _vote(np.concatenate(xyz_parts), np.concatenate(label_parts), spec)
