"""Binary readers and writers.

Covers four surfaces: the sectioned raster container used for every grid
artifact, the KITTI-convention scan/label/pose files, a small per-point
probability table, and PPM/PGM image export.

Raster container layout (all little-endian):

    magic "GMAP" | version u16 | x_min f64 | y_min f64 | cell_size f64
    | n_x u32 | n_y u32 | layer_count u16
    then per layer:
    name_len u16 | name utf-8 | dtype tag u8 | payload

Dtype tags: 0 = float32 (n_x*n_y values, row-major), 1 = uint8 (n_x*n_y
bytes), 2 = validity bitmask (n_x*n_y bits, packed row-major). Payloads
round-trip bit-exactly; note float64 data is stored at float32 precision.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    CLASS_NAMES,
    IGNORE,
    NUM_CLASSES,
    ClassId,
    ClassMap,
    GridSpec,
    PointCloud,
    Pose,
    remap_labels,
    validate_probability_rows,
)
from .fusion import FusionInput, LateFusionHead
from .gridmap import GridLayer, GridMapStack
from .groundtruth import LabelGrid
from .semantic import ArgmaxGrid, SemanticGrid
from .spherical import RangeImage

_MAGIC = b"GMAP"
_VERSION = 1
_HEADER = struct.Struct("<4sH")
_SPEC = struct.Struct("<dddIIH")
_NAME_LEN = struct.Struct("<H")
_TAG = struct.Struct("<B")

_TAG_F32 = 0
_TAG_U8 = 1
_TAG_MASK = 2
_KIND_TO_TAG = {"f32": _TAG_F32, "u8": _TAG_U8, "mask": _TAG_MASK}
_TAG_TO_KIND = {v: k for k, v in _KIND_TO_TAG.items()}


@dataclass(frozen=True)
class RasterLayer:
    """One named raster: kind is "f32", "u8" or "mask"."""

    name: str
    kind: str
    data: np.ndarray

    def __post_init__(self):
        if self.kind not in _KIND_TO_TAG:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        dtype = {"f32": np.float32, "u8": np.uint8, "mask": bool}[self.kind]
        data = np.ascontiguousarray(self.data, dtype=dtype)
        object.__setattr__(self, "data", data)


@dataclass(frozen=True)
class RasterContainer:
    """An ordered set of co-registered rasters over one grid."""

    spec: GridSpec
    layers: tuple[RasterLayer, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        for layer in layers:
            if layer.data.shape != self.spec.shape:
                raise ValueError(
                    f"layer {layer.name!r} has shape {layer.data.shape}, "
                    f"expected {self.spec.shape}"
                )
        if len({l.name for l in layers}) != len(layers):
            raise ValueError("duplicate layer names")
        object.__setattr__(self, "layers", layers)

    def layer(self, name: str) -> RasterLayer:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(f"container has no layer {name!r}")

    def names(self) -> tuple[str, ...]:
        return tuple(l.name for l in self.layers)


def write_raster(container: RasterContainer, path) -> None:
    spec = container.spec
    parts = [
        _HEADER.pack(_MAGIC, _VERSION),
        _SPEC.pack(
            spec.x_min, spec.y_min, spec.cell_size, spec.n_x, spec.n_y,
            len(container.layers),
        ),
    ]
    for layer in container.layers:
        name = layer.name.encode("utf-8")
        parts.append(_NAME_LEN.pack(len(name)))
        parts.append(name)
        parts.append(_TAG.pack(_KIND_TO_TAG[layer.kind]))
        if layer.kind == "f32":
            parts.append(layer.data.astype("<f4", copy=False).tobytes())
        elif layer.kind == "u8":
            parts.append(layer.data.tobytes())
        else:
            parts.append(np.packbits(layer.data.ravel()).tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_raster(path) -> RasterContainer:
    blob = Path(path).read_bytes()
    offset = 0

    def take(n: int, what: str) -> int:
        nonlocal offset
        if offset + n > len(blob):
            raise ValueError(
                f"{path}: truncated container, need {n} bytes for {what} "
                f"at offset {offset}"
            )
        offset += n
        return offset - n

    magic, version = _HEADER.unpack_from(blob, take(_HEADER.size, "header"))
    if magic != _MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported container version {version}")
    x_min, y_min, cell, n_x, n_y, n_layers = _SPEC.unpack_from(
        blob, take(_SPEC.size, "grid header")
    )
    spec = GridSpec(x_min=x_min, y_min=y_min, cell_size=cell, n_x=n_x, n_y=n_y)
    count = n_x * n_y

    layers = []
    for k in range(n_layers):
        (name_len,) = _NAME_LEN.unpack_from(blob, take(_NAME_LEN.size, "layer name length"))
        name = blob[take(name_len, "layer name") : offset].decode("utf-8")
        (tag,) = _TAG.unpack_from(blob, take(_TAG.size, "dtype tag"))
        if tag not in _TAG_TO_KIND:
            raise ValueError(f"{path}: layer {name!r} has unknown dtype tag {tag}")
        kind = _TAG_TO_KIND[tag]
        if kind == "f32":
            start = take(4 * count, f"layer {name!r} payload")
            data = np.frombuffer(blob, "<f4", count, start).reshape(n_x, n_y)
        elif kind == "u8":
            start = take(count, f"layer {name!r} payload")
            data = np.frombuffer(blob, np.uint8, count, start).reshape(n_x, n_y)
        else:
            packed = (count + 7) // 8
            start = take(packed, f"layer {name!r} payload")
            bits = np.unpackbits(np.frombuffer(blob, np.uint8, packed, start), count=count)
            data = bits.astype(bool).reshape(n_x, n_y)
        layers.append(RasterLayer(name=name, kind=kind, data=data.copy()))
    if offset != len(blob):
        raise ValueError(f"{path}: {len(blob) - offset} trailing bytes after last layer")
    return RasterContainer(spec=spec, layers=tuple(layers))


# --- grid artifact serialization -------------------------------------------


def write_stack(stack: GridMapStack, path) -> None:
    layers = []
    for name, layer in zip(GridMapStack.LAYER_NAMES, stack.layers()):
        layers.append(RasterLayer(name=name, kind="f32", data=layer.values))
        layers.append(RasterLayer(name=f"{name}:valid", kind="mask", data=layer.validity))
    write_raster(RasterContainer(spec=stack.spec, layers=tuple(layers)), path)


def read_stack(path) -> GridMapStack:
    container = read_raster(path)

    def grid_layer(name: str) -> GridLayer:
        values = container.layer(name).data.astype(np.float64)
        valid = container.layer(f"{name}:valid").data
        return GridLayer(spec=container.spec, values=np.where(valid, values, 0.0), validity=valid)

    return GridMapStack(*(grid_layer(name) for name in GridMapStack.LAYER_NAMES))


def write_label_grid(grid: LabelGrid | ArgmaxGrid, path) -> None:
    """Store a class raster; the ignore marker becomes byte 255."""
    data = np.where(grid.label == IGNORE, 255, grid.label).astype(np.uint8)
    write_raster(
        RasterContainer(
            spec=grid.spec, layers=(RasterLayer(name="label", kind="u8", data=data),)
        ),
        path,
    )


def read_label_grid(path) -> LabelGrid:
    container = read_raster(path)
    data = container.layer("label").data
    bad = (data >= NUM_CLASSES) & (data != 255)
    if bad.any():
        raise ValueError(f"{path}: invalid label byte {int(data[bad][0])}")
    label = data.astype(np.int16)
    label[data == 255] = IGNORE
    return LabelGrid(spec=container.spec, label=label)


def write_semantic_grid(grid: SemanticGrid, path) -> None:
    layers = [RasterLayer(name="count", kind="f32", data=grid.count)]
    for c, cname in enumerate(CLASS_NAMES):
        layers.append(
            RasterLayer(name=f"{grid.kind}:{cname}", kind="f32", data=grid.mass[:, :, c])
        )
    write_raster(RasterContainer(spec=grid.spec, layers=tuple(layers)), path)


def read_semantic_grid(path) -> SemanticGrid:
    container = read_raster(path)
    count = container.layer("count").data.astype(np.float64)
    mass_names = [n for n in container.names() if ":" in n]
    kinds = {n.split(":", 1)[0] for n in mass_names}
    if len(kinds) != 1:
        raise ValueError(f"{path}: expected one mass-layer kind, found {sorted(kinds)}")
    kind = kinds.pop()
    mass = np.stack(
        [container.layer(f"{kind}:{cname}").data.astype(np.float64) for cname in CLASS_NAMES],
        axis=2,
    )
    return SemanticGrid(spec=container.spec, mass=mass, count=count, kind=kind)


def write_fusion_input(fusion: FusionInput, path) -> None:
    if "observed" in fusion.names:
        raise ValueError('"observed" is a reserved layer name')
    layers = [
        RasterLayer(name=name, kind="f32", data=fusion.channels[k])
        for k, name in enumerate(fusion.names)
    ]
    layers.append(RasterLayer(name="observed", kind="mask", data=fusion.observed))
    write_raster(RasterContainer(spec=fusion.spec, layers=tuple(layers)), path)


def read_fusion_input(path) -> FusionInput:
    container = read_raster(path)
    names = [l.name for l in container.layers if l.kind == "f32"]
    channels = np.stack([container.layer(n).data.astype(np.float64) for n in names])
    observed = container.layer("observed").data
    return FusionInput(
        spec=container.spec, channels=channels, names=tuple(names), observed=observed
    )


def write_head(head: LateFusionHead, path) -> None:
    """Store head parameters as one padded row per tensor.

    Layer names carry the tensor shapes ("w1:32x16"); parameters are stored
    at float32 precision.
    """
    tensors = [
        (f"w1:{head.hidden}x{head.in_features}", head.w1),
        (f"b1:{head.hidden}", head.b1),
        (f"w2:{NUM_CLASSES}x{head.hidden}", head.w2),
        (f"b2:{NUM_CLASSES}", head.b2),
    ]
    width = max(t.size for _, t in tensors)
    spec = GridSpec(x_min=0.0, y_min=0.0, cell_size=1.0, n_x=1, n_y=width)
    layers = []
    for name, t in tensors:
        row = np.zeros((1, width), dtype=np.float32)
        row[0, : t.size] = t.ravel()
        layers.append(RasterLayer(name=name, kind="f32", data=row))
    write_raster(RasterContainer(spec=spec, layers=tuple(layers)), path)


def read_head(path) -> LateFusionHead:
    container = read_raster(path)

    def tensor(prefix: str) -> np.ndarray:
        for layer in container.layers:
            name, _, dims = layer.name.partition(":")
            if name == prefix:
                shape = tuple(int(d) for d in dims.split("x"))
                size = int(np.prod(shape))
                return layer.data.ravel()[:size].astype(np.float64).reshape(shape)
        raise ValueError(f"{path}: missing parameter tensor {prefix!r}")

    return LateFusionHead(
        w1=tensor("w1"), b1=tensor("b1"), w2=tensor("w2"), b2=tensor("b2")
    )


def write_range_image(image: RangeImage, path) -> None:
    """Store a projected scan in the raster container.

    The grid header is repurposed: x_min/y_min hold the up/down field-of-view
    bounds in degrees, n_x the row count, n_y the column count.
    """
    spec = GridSpec(
        x_min=image.spec.fov_up,
        y_min=image.spec.fov_down,
        cell_size=1.0,
        n_x=image.spec.height,
        n_y=image.spec.width,
    )
    layers = (
        RasterLayer(name="range", kind="f32", data=image.range),
        RasterLayer(name="range:valid", kind="mask", data=image.point_index >= 0),
        RasterLayer(name="intensity", kind="f32", data=image.intensity),
    )
    write_raster(RasterContainer(spec=spec, layers=layers), path)


# --- KITTI-convention files -------------------------------------------------


def read_point_cloud(path) -> PointCloud:
    """Little-endian float32 (x, y, z, intensity) records; intensity clamped."""
    blob = Path(path).read_bytes()
    if len(blob) % 16:
        raise ValueError(
            f"{path}: truncated record at offset {len(blob) - len(blob) % 16}"
        )
    data = np.frombuffer(blob, "<f4").reshape(-1, 4).astype(np.float64)
    finite = np.isfinite(data).all(axis=1)
    if not finite.all():
        idx = int(np.argmin(finite))
        raise ValueError(f"{path}: non-finite point at offset {idx * 16}")
    return PointCloud(xyz=data[:, :3], intensity=np.clip(data[:, 3], 0.0, 1.0))


def write_point_cloud(cloud: PointCloud, path) -> None:
    data = np.empty((len(cloud), 4), dtype="<f4")
    data[:, :3] = cloud.xyz
    data[:, 3] = cloud.intensity
    Path(path).write_bytes(data.tobytes())


def read_labels(path, class_map: ClassMap) -> np.ndarray:
    """Per-point u32 records, low 16 bits semantic; remapped to class ids."""
    blob = Path(path).read_bytes()
    if len(blob) % 4:
        raise ValueError(
            f"{path}: truncated record at offset {len(blob) - len(blob) % 4}"
        )
    raw = np.frombuffer(blob, "<u4")
    return remap_labels(raw & 0xFFFF, class_map)


#: Representative raw dataset id written for each class id.
CANONICAL_RAW_ID = {
    ClassId.BUILDING: 50,
    ClassId.PARKING: 44,
    ClassId.PEDESTRIAN: 30,
    ClassId.POLE: 80,
    ClassId.ROAD: 40,
    ClassId.SIDEWALK: 48,
    ClassId.TERRAIN: 72,
    ClassId.TRUNK: 71,
    ClassId.TWO_WHEEL: 11,
    ClassId.VEGETATION: 70,
    ClassId.VEHICLE: 10,
}


def write_raw_labels(labels: np.ndarray, path) -> None:
    """Write class ids as u32 records using one canonical raw id per class."""
    labels = np.asarray(labels)
    lut = np.zeros(NUM_CLASSES, dtype="<u4")
    for cid, raw in CANONICAL_RAW_ID.items():
        lut[int(cid)] = raw
    out = np.zeros(labels.shape, dtype="<u4")
    known = labels != IGNORE
    out[known] = lut[labels[known]]
    Path(path).write_bytes(out.tobytes())


def read_poses(path, calibration: Pose | None = None) -> list[Pose]:
    """Row-major 3x4 transforms, one per line.

    With a calibration pose C, each line T becomes C^-1 T C. Rotations are
    checked to be orthonormal within 1e-4, then snapped to the nearest
    rotation so downstream pose math sees clean orthonormal matrices.
    """
    poses = []
    cal = calibration.matrix() if calibration is not None else None
    cal_inv = calibration.inverse().matrix() if calibration is not None else None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            tokens = line.split()
            if not tokens:
                continue
            if len(tokens) != 12:
                raise ValueError(
                    f"{path}: line {lineno}: expected 12 values, got {len(tokens)}"
                )
            try:
                values = np.array([float(t) for t in tokens])
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: non-numeric value") from None
            m = np.eye(4)
            m[:3, :] = values.reshape(3, 4)
            if cal is not None:
                m = cal_inv @ m @ cal
            r = m[:3, :3]
            if np.abs(r @ r.T - np.eye(3)).max() > 1e-4:
                raise ValueError(f"{path}: line {lineno}: rotation not orthonormal")
            if np.linalg.det(r) < 0.0:
                raise ValueError(f"{path}: line {lineno}: rotation is a reflection")
            u, _, vt = np.linalg.svd(r)
            r = u @ vt
            if np.linalg.det(r) < 0.0:
                r = u @ np.diag([1.0, 1.0, -1.0]) @ vt
            poses.append(Pose(rotation=r, translation=m[:3, 3]))
    return poses


def write_poses(poses, path) -> None:
    lines = []
    for pose in poses:
        m = pose.matrix()[:3, :]
        lines.append(" ".join(format(v, ".12g") for v in m.ravel()))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# --- class-map config -------------------------------------------------------


def parse_class_map_text(text: str, origin: str = "<config>") -> ClassMap:
    """Parse "raw_id target_name" lines plus the ordered class-name list.

    The "classes" line must list the canonical eleven names in order; targets
    may also be "ignore". Duplicate raw ids are rejected.
    """
    table: dict[int, int] = {}
    name_to_id = {name: c for c, name in enumerate(CLASS_NAMES)}
    classes_seen = False
    for lineno, raw_line in enumerate(text.splitlines(), 1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if tokens[0] == "classes":
            if tuple(tokens[1:]) != CLASS_NAMES:
                raise ValueError(
                    f"{origin}: line {lineno}: class list must be exactly: "
                    + " ".join(CLASS_NAMES)
                )
            classes_seen = True
            continue
        if len(tokens) != 2:
            raise ValueError(
                f"{origin}: line {lineno}: expected 'raw_id target_name', got {line!r}"
            )
        try:
            raw_id = int(tokens[0])
        except ValueError:
            raise ValueError(
                f"{origin}: line {lineno}: raw id {tokens[0]!r} is not an integer"
            ) from None
        if raw_id in table:
            raise ValueError(f"{origin}: line {lineno}: duplicate raw id {raw_id}")
        target = tokens[1]
        if target == "ignore":
            table[raw_id] = IGNORE
        elif target in name_to_id:
            table[raw_id] = name_to_id[target]
        else:
            raise ValueError(
                f"{origin}: line {lineno}: unknown target class {target!r}"
            )
    if not classes_seen:
        raise ValueError(f"{origin}: missing 'classes' line")
    return ClassMap(table=table)


def read_class_map(path) -> ClassMap:
    return parse_class_map_text(Path(path).read_text(encoding="utf-8"), origin=str(path))


def default_class_map_text() -> str:
    """The built-in vocabulary as a config file."""
    from .core import DEFAULT_CLASS_TABLE

    lines = ["classes " + " ".join(CLASS_NAMES), ""]
    for raw in sorted(DEFAULT_CLASS_TABLE):
        target = DEFAULT_CLASS_TABLE[raw]
        name = "ignore" if target == IGNORE else CLASS_NAMES[target]
        lines.append(f"{raw} {name}")
    return "\n".join(lines) + "\n"


# --- per-point probability table --------------------------------------------

_PROB_MAGIC = b"PTAB"
_PROB_HEADER = struct.Struct("<4sIH")


def write_probabilities(probs: np.ndarray, path) -> None:
    probs = np.ascontiguousarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[1] != NUM_CLASSES:
        raise ValueError(f"expected (n, {NUM_CLASSES}) rows, got {probs.shape}")
    header = _PROB_HEADER.pack(_PROB_MAGIC, probs.shape[0], NUM_CLASSES)
    Path(path).write_bytes(header + probs.astype("<f4").tobytes())


def read_probabilities(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) < _PROB_HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, count, cols = _PROB_HEADER.unpack_from(blob, 0)
    if magic != _PROB_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if cols != NUM_CLASSES:
        raise ValueError(f"{path}: expected {NUM_CLASSES} columns, got {cols}")
    expected = _PROB_HEADER.size + 4 * count * cols
    if len(blob) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, got {len(blob)}")
    rows = np.frombuffer(blob, "<f4", count * cols, _PROB_HEADER.size)
    rows = rows.astype(np.float64).reshape(count, cols)
    validate_probability_rows(rows)
    return rows


# --- image export -----------------------------------------------------------

#: Display color per class id, from the class legend.
PALETTE = np.array(
    [
        (255, 200, 0),  # building
        (255, 150, 255),  # parking
        (255, 30, 30),  # pedestrian
        (255, 120, 50),  # pole
        (255, 0, 255),  # road
        (75, 0, 75),  # sidewalk
        (150, 240, 80),  # terrain
        (135, 60, 0),  # trunk
        (30, 60, 150),  # two-wheel
        (0, 175, 0),  # vegetation
        (0, 0, 255),  # vehicle
    ],
    dtype=np.uint8,
)


def _to_image(a: np.ndarray) -> np.ndarray:
    """Orient a grid raster for display: x right, y up."""
    return a.swapaxes(0, 1)[::-1]


def export_colormap_image(obj, path) -> None:
    """Write a label raster as color PPM or a float layer as grayscale PGM.

    Labels use the fixed class palette with ignore cells black. Float layers
    are min-max scaled over their valid cells; a constant layer renders
    mid-gray, invalid cells black.
    """
    if isinstance(obj, (LabelGrid, ArgmaxGrid)):
        label = obj.label
        rgb = np.zeros(label.shape + (3,), dtype=np.uint8)
        known = label != IGNORE
        rgb[known] = PALETTE[label[known]]
        img = np.ascontiguousarray(_to_image(rgb))
        header = f"P6\n{img.shape[1]} {img.shape[0]}\n255\n"
    elif isinstance(obj, GridLayer):
        gray = np.zeros(obj.values.shape, dtype=np.uint8)
        valid = obj.validity
        if valid.any():
            vals = obj.values[valid]
            lo, hi = float(vals.min()), float(vals.max())
            if hi > lo:
                gray[valid] = np.round((obj.values[valid] - lo) / (hi - lo) * 255.0)
            else:
                gray[valid] = 128
        img = np.ascontiguousarray(_to_image(gray))
        header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n"
    else:
        raise TypeError(f"cannot render {type(obj).__name__}")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(img.tobytes())
