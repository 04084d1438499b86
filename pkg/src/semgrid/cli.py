"""Command-line pipeline driver.

One subcommand per stage: scan encoding, range-image projection, semantic
aggregation, ground-truth generation, evaluation, fusion assembly/training/
prediction, synthetic scene generation, and raster rendering. Every command
exits nonzero on error, and identical flags plus identical seeds produce
byte-identical output files.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .core import CLASS_NAMES, DEFAULT_CLASS_MAP, GridSpec
from .evaluation import ConfusionMatrix, accumulate, iou_per_class, mean_iou
from .fusion import assemble_early_fusion_input, predict, standardize_channels, train
from .gridmap import GridLayer, encode_multilayer
from .groundtruth import ScanSequence, dense_ground_truth, sparse_ground_truth
from .semantic import (
    ArgmaxGrid,
    encode_argmax,
    encode_histogram,
    encode_mean,
    encode_summed,
    synth_probabilities,
)
from .spherical import RangeImageSpec, project_to_range_image
from .synth import scan_pose, synth_scene


def _parse_grid_spec(text: str) -> GridSpec:
    parts = text.split(",")
    if len(parts) != 5:
        raise ValueError(
            f"--spec needs 'x_min,y_min,cell,n_x,n_y', got {text!r}"
        )
    return GridSpec(
        x_min=float(parts[0]),
        y_min=float(parts[1]),
        cell_size=float(parts[2]),
        n_x=int(parts[3]),
        n_y=int(parts[4]),
    )


def _parse_origin(text: str) -> np.ndarray:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise ValueError(f"--origin needs 'x,y,z', got {text!r}")
    return np.array(parts)


def _parse_classes(text: str) -> list[int]:
    ids = []
    for token in text.split(","):
        token = token.strip()
        if token not in CLASS_NAMES:
            raise ValueError(f"unknown class name {token!r}")
        ids.append(CLASS_NAMES.index(token))
    return ids


def _class_map(args):
    if getattr(args, "class_map", None):
        return io.read_class_map(args.class_map)
    return DEFAULT_CLASS_MAP


def _add_spec(parser):
    parser.add_argument(
        "--spec",
        type=_parse_grid_spec,
        default=GridSpec(),
        help="grid geometry as x_min,y_min,cell,n_x,n_y (default 1001x501 at 0.1 m)",
    )


def _cmd_encode(args) -> int:
    cloud = io.read_point_cloud(args.scan)
    stack = encode_multilayer(cloud, args.spec, sensor_origin=args.origin)
    io.write_stack(stack, args.out)
    print(f"encoded {len(cloud)} points into {args.out}")
    return 0


def _cmd_project(args) -> int:
    cloud = io.read_point_cloud(args.scan)
    spec = RangeImageSpec(
        width=args.width, height=args.height, fov_up=args.fov_up, fov_down=args.fov_down
    )
    image = project_to_range_image(cloud, spec)
    io.write_range_image(image, args.out)
    if args.preview:
        valid = image.point_index >= 0
        layer = GridLayer(
            spec=GridSpec(
                x_min=spec.fov_up, y_min=spec.fov_down, cell_size=1.0,
                n_x=spec.height, n_y=spec.width,
            ),
            values=np.where(valid, image.range, 0.0),
            validity=valid,
        )
        io.export_colormap_image(layer, args.preview)
    filled = int((image.point_index >= 0).sum())
    print(f"projected {len(cloud)} points, {filled} pixels filled, {image.skipped} skipped")
    return 0


def _cmd_semantic_encode(args) -> int:
    cloud = io.read_point_cloud(args.scan)
    if args.probs and args.synth_eps is not None:
        raise ValueError("--probs and --synth-eps are mutually exclusive")
    if args.probs:
        cloud = cloud.with_probabilities(io.read_probabilities(args.probs))
    elif args.labels:
        labels = io.read_labels(args.labels, _class_map(args))
        if args.synth_eps is not None:
            rows = synth_probabilities(labels, args.synth_eps, seed=args.seed)
            cloud = cloud.with_probabilities(rows)
        else:
            cloud = cloud.with_labels(labels)
    else:
        raise ValueError("semantic-encode needs --probs or --labels")

    if args.encoding in ("hist", "argmax"):
        grid = encode_histogram(cloud, args.spec)
        if args.encoding == "argmax":
            io.write_label_grid(encode_argmax(grid), args.out)
        else:
            io.write_semantic_grid(grid, args.out)
    else:
        grid = encode_summed(cloud, args.spec)
        if args.encoding == "mean":
            grid = encode_mean(grid)
        io.write_semantic_grid(grid, args.out)
    print(f"wrote {args.encoding} encoding to {args.out}")
    return 0


def _cmd_groundtruth(args) -> int:
    class_map = _class_map(args)
    if args.mode == "sparse":
        if not (args.scan and args.labels):
            raise ValueError("sparse mode needs --scan and --labels")
        cloud = io.read_point_cloud(args.scan)
        cloud = cloud.with_labels(io.read_labels(args.labels, class_map))
        grid = sparse_ground_truth(cloud, args.spec)
    else:
        if not (args.cloud_dir and args.poses):
            raise ValueError("dense mode needs --cloud-dir and --poses")
        cloud_paths = sorted(Path(args.cloud_dir).glob("*.bin"))
        if not cloud_paths:
            raise ValueError(f"no .bin scans under {args.cloud_dir}")
        label_dir = Path(args.label_dir) if args.label_dir else Path(args.cloud_dir)
        calibration = None
        if args.calib:
            calib_poses = io.read_poses(args.calib)
            if len(calib_poses) != 1:
                raise ValueError(f"{args.calib}: expected exactly one calibration line")
            calibration = calib_poses[0]
        poses = io.read_poses(args.poses, calibration)
        clouds = []
        for p in cloud_paths:
            label_path = label_dir / (p.stem + ".label")
            cloud = io.read_point_cloud(p)
            clouds.append(cloud.with_labels(io.read_labels(label_path, class_map)))
        seq = ScanSequence(
            clouds=tuple(clouds), poses=tuple(poses), reference=args.index
        )
        grid = dense_ground_truth(
            seq, args.spec, window=args.window, dynamic_classes=args.dynamic_classes
        )
    io.write_label_grid(grid, args.out)
    print(f"wrote {args.mode} ground truth to {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    pred = io.read_label_grid(args.pred)
    gt = io.read_label_grid(args.gt)
    cm = accumulate(ConfusionMatrix(), pred, gt)
    ious = iou_per_class(cm)
    width = max(len(n) for n in CLASS_NAMES)
    for c, name in enumerate(CLASS_NAMES):
        text = "undefined" if np.isnan(ious[c]) else f"{ious[c]:.4f}"
        print(f"{name:<{width}}  {text}")
    defined = int((~np.isnan(ious)).sum())
    miou = mean_iou(ious)
    print(f"{'mean IoU':<{width}}  {miou:.4f}  (over {defined} defined classes, "
          f"{cm.total} cells)")
    if args.json:
        report = {
            "per_class": {
                name: (None if np.isnan(ious[c]) else float(ious[c]))
                for c, name in enumerate(CLASS_NAMES)
            },
            "mean_iou": miou,
            "defined_classes": defined,
            "evaluated_cells": cm.total,
        }
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def _cmd_fuse_assemble(args) -> int:
    stack = io.read_stack(args.stack)
    names = io.read_raster(args.semantic).names()
    if "count" in names:
        semantic = io.read_semantic_grid(args.semantic)
    else:
        label = io.read_label_grid(args.semantic)
        semantic = ArgmaxGrid(spec=label.spec, label=label.label)
    fusion = assemble_early_fusion_input(stack, semantic)
    if args.standardize:
        fusion = standardize_channels(fusion)
    io.write_fusion_input(fusion, args.out)
    scaled = " standardized" if args.standardize else ""
    print(f"assembled {fusion.n_channels}{scaled} channels into {args.out}")
    return 0


def _cmd_fuse_train(args) -> int:
    if len(args.fusion) != len(args.gt):
        raise ValueError(
            f"{len(args.fusion)} fusion inputs but {len(args.gt)} ground-truth grids"
        )
    dataset = [
        (io.read_fusion_input(f), io.read_label_grid(g))
        for f, g in zip(args.fusion, args.gt)
    ]
    head, trace = train(
        dataset,
        epochs=args.epochs,
        learning_rate=args.lr,
        seed=args.seed,
        hidden=args.hidden,
    )
    io.write_head(head, args.out)
    if trace:
        print(f"loss {trace[0]:.6f} -> {trace[-1]:.6f} over {len(trace)} epochs")
    print(f"wrote head to {args.out}")
    return 0


def _cmd_fuse_predict(args) -> int:
    fusion = io.read_fusion_input(args.fusion)
    head = io.read_head(args.head)
    io.write_label_grid(predict(head, fusion), args.out)
    print(f"wrote prediction to {args.out}")
    return 0


def _cmd_synth_scene(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for k in range(args.count):
        cloud = synth_scene(args.seed, args.points, scan_index=k)
        io.write_point_cloud(cloud, out / f"{k:06d}.bin")
        io.write_raw_labels(cloud.labels, out / f"{k:06d}.label")
    io.write_poses([scan_pose(k) for k in range(args.count)], out / "poses.txt")
    print(f"wrote {args.count} scan(s) of {args.points} points to {out}")
    return 0


def _cmd_render(args) -> int:
    container = io.read_raster(args.input)
    names = container.names()
    if "label" in names and container.layer("label").kind == "u8":
        io.export_colormap_image(io.read_label_grid(args.input), args.out)
    else:
        float_names = [l.name for l in container.layers if l.kind == "f32"]
        name = args.layer
        if name is None:
            if len(float_names) != 1:
                raise ValueError(
                    f"--layer required; container holds {', '.join(float_names)}"
                )
            name = float_names[0]
        values = container.layer(name).data.astype(np.float64)
        mask_name = f"{name}:valid"
        validity = (
            container.layer(mask_name).data
            if mask_name in names
            else np.ones(container.spec.shape, dtype=bool)
        )
        layer = GridLayer(
            spec=container.spec,
            values=np.where(validity, values, 0.0),
            validity=validity,
        )
        io.export_colormap_image(layer, args.out)
    print(f"rendered {args.input} to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semgrid",
        description="LiDAR scan encoding, semantic grids, and fusion tooling",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="encode a scan into the five-layer stack")
    p.add_argument("--scan", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--origin", type=_parse_origin, default=np.zeros(3),
                   help="sensor origin x,y,z for ray traversal")
    _add_spec(p)
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("project", help="project a scan to the spherical range image")
    p.add_argument("--scan", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--width", type=int, default=2048)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--fov-up", type=float, default=3.0)
    p.add_argument("--fov-down", type=float, default=-25.0)
    p.add_argument("--preview", help="also write a grayscale range preview (PGM)")
    p.set_defaults(func=_cmd_project)

    p = sub.add_parser("semantic-encode", help="aggregate per-point classes per cell")
    p.add_argument("--scan", required=True)
    p.add_argument("--encoding", required=True, choices=("hist", "argmax", "sum", "mean"))
    p.add_argument("--probs", help="per-point probability table")
    p.add_argument("--labels", help="per-point label file")
    p.add_argument("--synth-eps", type=float, default=None,
                   help="synthesize probabilities from --labels with this flip rate")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--class-map", help="class-map config (default built in)")
    p.add_argument("--out", required=True)
    _add_spec(p)
    p.set_defaults(func=_cmd_semantic_encode)

    p = sub.add_parser("groundtruth", help="build a ground-truth label grid")
    p.add_argument("--mode", required=True, choices=("sparse", "dense"))
    p.add_argument("--scan", help="sparse mode: scan file")
    p.add_argument("--labels", help="sparse mode: label file")
    p.add_argument("--cloud-dir", help="dense mode: directory of .bin scans")
    p.add_argument("--label-dir", help="dense mode: directory of .label files "
                   "(default: --cloud-dir)")
    p.add_argument("--poses", help="dense mode: pose file, one 3x4 line per scan")
    p.add_argument("--calib", help="dense mode: optional single-line calibration")
    p.add_argument("--index", type=int, default=0, help="dense mode: reference scan")
    p.add_argument("--window", type=int, default=50)
    p.add_argument("--dynamic-classes", type=_parse_classes,
                   default=_parse_classes("pedestrian,two-wheel,vehicle"),
                   help="comma-separated class names rejected from non-reference scans")
    p.add_argument("--class-map")
    p.add_argument("--out", required=True)
    _add_spec(p)
    p.set_defaults(func=_cmd_groundtruth)

    p = sub.add_parser("evaluate", help="per-class IoU and mean IoU of a prediction")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--json", help="also write a machine-readable report")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("fuse-assemble", help="concatenate layer stack and semantic grid")
    p.add_argument("--stack", required=True)
    p.add_argument("--semantic", required=True)
    p.add_argument("--standardize", action="store_true",
                   help="zero-mean/unit-variance channels over observed cells")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fuse_assemble)

    p = sub.add_parser("fuse-train", help="train the per-cell fusion head")
    p.add_argument("--fusion", required=True, nargs="+")
    p.add_argument("--gt", required=True, nargs="+")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fuse_train)

    p = sub.add_parser("fuse-predict", help="predict a label grid with a trained head")
    p.add_argument("--fusion", required=True)
    p.add_argument("--head", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fuse_predict)

    p = sub.add_parser("synth-scene", help="generate deterministic synthetic scans")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1, help="number of scans")
    p.add_argument("--points", type=int, default=130_000, help="points per scan")
    p.set_defaults(func=_cmd_synth_scene)

    p = sub.add_parser("render", help="export a raster as a PPM/PGM image")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--layer", help="float layer to render (for multi-layer files)")
    p.set_defaults(func=_cmd_render)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # pragma: no cover - exercised via CLI tests
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
