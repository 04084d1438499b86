"""Channel assembly and a per-cell two-layer fusion head.

The head applies the same tiny network to every cell independently (two
1x1 convolutions with a rectifier between), producing 11 logits per cell.
Training is plain full-batch gradient descent with analytic gradients.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .core import CLASS_NAMES, IGNORE, NUM_CLASSES, GridSpec
from .gridmap import GridMapStack
from .groundtruth import LabelGrid
from .semantic import ArgmaxGrid, SemanticGrid


@dataclass(frozen=True)
class FusionInput:
    """Named channel stack over one grid, plus the observed-cell mask.

    Cells never touched by any layer or semantic point carry only zero
    channels; predictions on them are meaningless, so `observed` records
    which cells carry data at all.
    """

    spec: GridSpec
    channels: NDArray[np.float64]
    names: tuple[str, ...]
    observed: NDArray[np.bool_]

    def __post_init__(self):
        channels = np.ascontiguousarray(self.channels, dtype=np.float64)
        observed = np.ascontiguousarray(self.observed, dtype=bool)
        names = tuple(self.names)
        if channels.ndim != 3 or channels.shape[1:] != self.spec.shape:
            raise ValueError(
                f"channels shape {channels.shape}, expected (n, *{self.spec.shape})"
            )
        if len(names) != channels.shape[0]:
            raise ValueError(f"{len(names)} names for {channels.shape[0]} channels")
        if len(set(names)) != len(names):
            raise ValueError("channel names must be unique")
        if observed.shape != self.spec.shape:
            raise ValueError(f"observed shape {observed.shape}, expected {self.spec.shape}")
        if not np.isfinite(channels).all():
            raise ValueError("channels contain non-finite values")
        channels.setflags(write=False)
        observed.setflags(write=False)
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "observed", observed)
        object.__setattr__(self, "names", names)

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]


@dataclass(frozen=True)
class LateFusionHead:
    """Parameters of the per-cell network logits = W2 relu(W1 x + b1) + b2."""

    w1: NDArray[np.float64]
    b1: NDArray[np.float64]
    w2: NDArray[np.float64]
    b2: NDArray[np.float64]

    def __post_init__(self):
        w1 = np.ascontiguousarray(self.w1, dtype=np.float64)
        b1 = np.ascontiguousarray(self.b1, dtype=np.float64)
        w2 = np.ascontiguousarray(self.w2, dtype=np.float64)
        b2 = np.ascontiguousarray(self.b2, dtype=np.float64)
        if w1.ndim != 2:
            raise ValueError("w1 must be a hidden x in matrix")
        hidden, _ = w1.shape
        if b1.shape != (hidden,):
            raise ValueError(f"b1 shape {b1.shape} does not match hidden {hidden}")
        if w2.shape != (NUM_CLASSES, hidden):
            raise ValueError(f"w2 shape {w2.shape}, expected {(NUM_CLASSES, hidden)}")
        if b2.shape != (NUM_CLASSES,):
            raise ValueError(f"b2 shape {b2.shape}, expected {(NUM_CLASSES,)}")
        for name, a in (("w1", w1), ("b1", b1), ("w2", w2), ("b2", b2)):
            if not np.isfinite(a).all():
                raise ValueError(f"{name} contains non-finite values")
            a.setflags(write=False)
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "w2", w2)
        object.__setattr__(self, "b2", b2)

    @property
    def in_features(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]


@dataclass(frozen=True)
class HeadGradient:
    """Loss gradient, one array per head parameter."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


def init_head(in_features: int, hidden: int = 32, seed: int = 0) -> LateFusionHead:
    """Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases."""
    if in_features < 1 or hidden < 1:
        raise ValueError("in_features and hidden must be positive")
    rng = np.random.default_rng(seed)
    lim1 = np.sqrt(6.0 / (in_features + hidden))
    lim2 = np.sqrt(6.0 / (hidden + NUM_CLASSES))
    return LateFusionHead(
        w1=rng.uniform(-lim1, lim1, size=(hidden, in_features)),
        b1=np.zeros(hidden),
        w2=rng.uniform(-lim2, lim2, size=(NUM_CLASSES, hidden)),
        b2=np.zeros(NUM_CLASSES),
    )


def assemble_early_fusion_input(
    stack: GridMapStack, semantic: SemanticGrid | ArgmaxGrid
) -> FusionInput:
    """Concatenate the five geometric layers with the semantic channels.

    Channel order is the five layers (z_max, z_min, intensity, observations,
    occlusion_upper) followed by the semantic encoding: one channel per class
    for mass grids, or a single class-code channel (-1 on empty cells) for an
    argmax grid. No normalization is applied; invalid layer cells are zero.
    """
    if semantic.spec != stack.spec:
        raise ValueError("semantic grid and layer stack use different grids")
    channels = [layer.values for layer in stack.layers()]
    names = list(GridMapStack.LAYER_NAMES)
    if isinstance(semantic, SemanticGrid):
        for c, cname in enumerate(CLASS_NAMES):
            channels.append(semantic.mass[:, :, c])
            names.append(f"{semantic.kind}_{cname}")
    elif isinstance(semantic, ArgmaxGrid):
        channels.append(semantic.label.astype(np.float64))
        names.append("argmax_class")
    else:
        raise TypeError(f"unsupported semantic grid type {type(semantic).__name__}")
    observed = stack.z_max.validity | stack.observations.validity | semantic.validity
    return FusionInput(
        spec=stack.spec,
        channels=np.stack(channels),
        names=tuple(names),
        observed=observed,
    )


def standardize_channels(fusion: FusionInput) -> FusionInput:
    """Zero-mean, unit-variance channels over the observed cells.

    Heights, ray counts and probability masses live on very different
    scales, and plain gradient descent on the head needs them comparable.
    Unobserved cells stay zero; a constant channel becomes all zero instead
    of dividing by a vanishing spread. Training and prediction must both
    consume the standardized input for the resulting head to be meaningful.
    """
    observed = fusion.observed
    if not observed.any():
        raise ValueError("cannot standardize: no observed cells")
    channels = np.empty_like(fusion.channels)
    for k in range(fusion.n_channels):
        values = fusion.channels[k][observed]
        centered = fusion.channels[k] - values.mean()
        scale = values.std()
        if scale > 0.0:
            centered = centered / scale
        channels[k] = np.where(observed, centered, 0.0)
    return FusionInput(
        spec=fusion.spec, channels=channels, names=fusion.names, observed=observed
    )


def forward(head: LateFusionHead, fusion: FusionInput) -> NDArray[np.float64]:
    """Per-cell logits, shape (n_x, n_y, 11)."""
    if head.in_features != fusion.n_channels:
        raise ValueError(
            f"head expects {head.in_features} channels, input has {fusion.n_channels}"
        )
    n_x, n_y = fusion.spec.shape
    x = fusion.channels.reshape(fusion.n_channels, -1)
    h = np.maximum(head.w1 @ x + head.b1[:, None], 0.0)
    logits = head.w2 @ h + head.b2[:, None]
    return logits.T.reshape(n_x, n_y, NUM_CLASSES)


def _masked_batch(
    fusion: FusionInput, gt: LabelGrid
) -> tuple[np.ndarray, np.ndarray]:
    if fusion.spec != gt.spec:
        raise ValueError("fusion input and ground truth use different grids")
    mask = gt.label != IGNORE
    x = fusion.channels.reshape(fusion.n_channels, -1)[:, mask.ravel()]
    y = gt.label[mask].astype(np.int64)
    return x, y


def _loss_and_gradient_cells(
    head: LateFusionHead, x: np.ndarray, y: np.ndarray
) -> tuple[float, HeadGradient]:
    m = x.shape[1]
    z1 = head.w1 @ x + head.b1[:, None]
    h = np.maximum(z1, 0.0)
    logits = head.w2 @ h + head.b2[:, None]

    shifted = logits - logits.max(axis=0)
    log_norm = np.log(np.exp(shifted).sum(axis=0))
    loss = float(np.mean(log_norm - shifted[y, np.arange(m)]))

    dlogits = np.exp(shifted - log_norm)
    dlogits[y, np.arange(m)] -= 1.0
    dlogits /= m
    dh = head.w2.T @ dlogits
    dz1 = dh * (z1 > 0.0)
    grad = HeadGradient(
        w1=dz1 @ x.T,
        b1=dz1.sum(axis=1),
        w2=dlogits @ h.T,
        b2=dlogits.sum(axis=1),
    )
    return loss, grad


def loss_and_gradient(
    head: LateFusionHead, fusion: FusionInput, gt: LabelGrid
) -> tuple[float, HeadGradient]:
    """Mean cross-entropy over labeled cells and its exact gradient."""
    if head.in_features != fusion.n_channels:
        raise ValueError(
            f"head expects {head.in_features} channels, input has {fusion.n_channels}"
        )
    x, y = _masked_batch(fusion, gt)
    if y.size == 0:
        raise ValueError("ground truth has no labeled cells")
    return _loss_and_gradient_cells(head, x, y)


def train(
    dataset: Sequence[tuple[FusionInput, LabelGrid]],
    epochs: int,
    learning_rate: float,
    seed: int = 0,
    hidden: int = 32,
    head: LateFusionHead | None = None,
) -> tuple[LateFusionHead, list[float]]:
    """Full-batch gradient descent on the mean cross-entropy.

    All labeled cells of all pairs form one batch; one parameter update per
    epoch. The head is initialized from the seed unless one is passed in.
    Returns the trained head and the per-epoch loss trace (loss before each
    update). Aborts on a non-finite loss.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    if epochs < 0:
        raise ValueError("epochs must be nonnegative")

    n_channels = dataset[0][0].n_channels
    parts = []
    for k, (fusion, gt) in enumerate(dataset):
        if fusion.n_channels != n_channels:
            raise ValueError(f"pair {k} has {fusion.n_channels} channels, expected {n_channels}")
        parts.append(_masked_batch(fusion, gt))
    x = np.concatenate([p[0] for p in parts], axis=1)
    y = np.concatenate([p[1] for p in parts])
    if y.size == 0:
        raise ValueError("no pair contributes a labeled cell")

    if head is None:
        head = init_head(n_channels, hidden=hidden, seed=seed)
    elif head.in_features != n_channels:
        raise ValueError(
            f"head expects {head.in_features} channels, dataset has {n_channels}"
        )

    trace = []
    for epoch in range(epochs):
        loss, grad = _loss_and_gradient_cells(head, x, y)
        if not np.isfinite(loss):
            raise FloatingPointError(
                f"loss became non-finite at epoch {epoch}: {loss}"
            )
        trace.append(loss)
        head = LateFusionHead(
            w1=head.w1 - learning_rate * grad.w1,
            b1=head.b1 - learning_rate * grad.b1,
            w2=head.w2 - learning_rate * grad.w2,
            b2=head.b2 - learning_rate * grad.b2,
        )
    return head, trace


def predict(head: LateFusionHead, fusion: FusionInput) -> LabelGrid:
    """Argmax of the logits per observed cell; unobserved cells stay ignore."""
    logits = forward(head, fusion)
    label = np.argmax(logits, axis=2).astype(np.int16)
    label[~fusion.observed] = IGNORE
    return LabelGrid(spec=fusion.spec, label=label)
