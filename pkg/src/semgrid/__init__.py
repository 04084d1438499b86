"""Top-view semantic grid mapping for single-shot LiDAR scans.

Encodes point clouds into a spherical range image and a five-layer top-view
grid map, aggregates per-point class predictions into per-cell encodings,
builds sparse and pose-aggregated ground-truth grids, trains a small
per-cell fusion head, and scores predictions with per-class IoU.
"""

from .core import (
    CLASS_NAMES,
    DEFAULT_CLASS_MAP,
    DYNAMIC_CLASSES,
    IGNORE,
    NUM_CLASSES,
    ClassId,
    ClassMap,
    GridSpec,
    Point,
    PointCloud,
    Pose,
    cell_index,
    cell_indices,
    remap_label,
    remap_labels,
    transform_points,
)
from .evaluation import ConfusionMatrix, accumulate, iou_per_class, mean_iou
from .fusion import (
    FusionInput,
    LateFusionHead,
    assemble_early_fusion_input,
    forward,
    init_head,
    loss_and_gradient,
    predict,
    standardize_channels,
    train,
)
from .gridmap import (
    GridLayer,
    GridMapStack,
    Ray,
    encode_detection_layers,
    encode_multilayer,
    encode_observation_layers,
    traverse_ray,
)
from .groundtruth import (
    LabelGrid,
    ScanSequence,
    dense_ground_truth,
    sparse_ground_truth,
)
from .semantic import (
    HISTOGRAM,
    MEAN,
    SUM,
    ArgmaxGrid,
    SemanticGrid,
    encode_argmax,
    encode_histogram,
    encode_mean,
    encode_summed,
    synth_probabilities,
)
from .spherical import (
    RangeImage,
    RangeImageSpec,
    lift_pixel_semantics,
    pixel_coords,
    project_to_range_image,
)
from .synth import synth_scene, synth_sequence

__all__ = [
    "CLASS_NAMES",
    "DEFAULT_CLASS_MAP",
    "DYNAMIC_CLASSES",
    "HISTOGRAM",
    "IGNORE",
    "MEAN",
    "NUM_CLASSES",
    "SUM",
    "ArgmaxGrid",
    "ClassId",
    "ClassMap",
    "ConfusionMatrix",
    "FusionInput",
    "GridLayer",
    "GridMapStack",
    "GridSpec",
    "LabelGrid",
    "LateFusionHead",
    "Point",
    "PointCloud",
    "Pose",
    "RangeImage",
    "RangeImageSpec",
    "Ray",
    "ScanSequence",
    "SemanticGrid",
    "accumulate",
    "assemble_early_fusion_input",
    "cell_index",
    "cell_indices",
    "dense_ground_truth",
    "encode_argmax",
    "encode_detection_layers",
    "encode_histogram",
    "encode_mean",
    "encode_multilayer",
    "encode_observation_layers",
    "encode_summed",
    "forward",
    "init_head",
    "iou_per_class",
    "lift_pixel_semantics",
    "loss_and_gradient",
    "mean_iou",
    "pixel_coords",
    "predict",
    "project_to_range_image",
    "remap_label",
    "remap_labels",
    "sparse_ground_truth",
    "standardize_channels",
    "synth_probabilities",
    "synth_scene",
    "synth_sequence",
    "train",
    "transform_points",
    "traverse_ray",
]
