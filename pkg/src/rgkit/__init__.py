"""Radar Gaussian splatting toolkit.

Turns sparse radar point clouds into dense bird's-eye-view feature maps
by aggregating per-point features (local neighborhood averaging plus
global self-attention), predicting one 3D Gaussian primitive per point,
and alpha-blending the projected Gaussians into a pixel grid.  A
companion loss measures box regression quality as the KL divergence
between Gaussians fitted to predicted and ground-truth boxes, with
analytic gradients.

Every entry point is deterministic: scenes, weights, and rasterized maps
are bit-reproducible across runs and thread counts.
"""

from .aggregation import (
    AttentionBlock,
    GaussianPrimitive3D,
    LayerNormParams,
    LinearLayer,
    NeighborIndex,
    PgeParams,
    build_neighbor_index,
    gfa,
    init_weights,
    lfa_broadcast_mask,
    lfa_index_scatter,
    lfa_traversal,
    load_weights,
    predict_attributes,
    save_weights,
)
from .bench import BenchReport, BenchRow, run_bench
from .boxloss import (
    BglConfig,
    Box3D,
    GaussianDistribution3D,
    KlComponents,
    bgl,
    bgl_gradient,
    box_to_gaussian,
    combined_reg_loss,
    fd_gradient,
    kl_divergence,
    read_boxes,
    write_boxes,
)
from .config import (
    PRESETS,
    RunConfig,
    apply_preset,
    apply_updates,
    dump_config,
    load_config,
    parse_config_text,
)
from .errors import (
    AllocationLimit,
    DegenerateBox,
    DegenerateQuaternion,
    EmptyBatch,
    FormatError,
    InvalidSpec,
    LengthMismatch,
    NonPositiveScale,
    RgkError,
    ShapeMismatch,
    SingularCovariance,
    SingularMatrix,
)
from .pointcloud import (
    BevRange,
    PointCloud,
    RadarPoint,
    SceneSpec,
    generate_scene,
    read_cloud,
    write_cloud,
)
from .rng import SplitMix64, fnv1a64, mix64, stream_seed
from .selftest import run_selftest
from .splat import (
    BevFeatureMap,
    RasterSettings,
    Splat2D,
    encode,
    nonzero_pixels,
    pillar_scatter,
    project_to_bev,
    rasterize,
    rasterize_oracle,
    read_feature_map,
    write_feature_map,
    write_pgm,
)

__version__ = "0.1.0"

__all__ = [
    "AllocationLimit",
    "AttentionBlock",
    "BenchReport",
    "BenchRow",
    "BevFeatureMap",
    "BevRange",
    "BglConfig",
    "Box3D",
    "DegenerateBox",
    "DegenerateQuaternion",
    "EmptyBatch",
    "FormatError",
    "GaussianDistribution3D",
    "GaussianPrimitive3D",
    "InvalidSpec",
    "KlComponents",
    "LayerNormParams",
    "LengthMismatch",
    "LinearLayer",
    "NeighborIndex",
    "NonPositiveScale",
    "PRESETS",
    "PgeParams",
    "PointCloud",
    "RadarPoint",
    "RasterSettings",
    "RgkError",
    "RunConfig",
    "SceneSpec",
    "ShapeMismatch",
    "SingularCovariance",
    "SingularMatrix",
    "Splat2D",
    "SplitMix64",
    "apply_preset",
    "apply_updates",
    "bgl",
    "bgl_gradient",
    "box_to_gaussian",
    "build_neighbor_index",
    "combined_reg_loss",
    "dump_config",
    "encode",
    "fd_gradient",
    "fnv1a64",
    "generate_scene",
    "gfa",
    "init_weights",
    "kl_divergence",
    "lfa_broadcast_mask",
    "lfa_index_scatter",
    "lfa_traversal",
    "load_config",
    "load_weights",
    "mix64",
    "nonzero_pixels",
    "parse_config_text",
    "pillar_scatter",
    "predict_attributes",
    "project_to_bev",
    "rasterize",
    "rasterize_oracle",
    "read_boxes",
    "read_cloud",
    "read_feature_map",
    "run_bench",
    "run_selftest",
    "save_weights",
    "stream_seed",
    "write_boxes",
    "write_cloud",
    "write_feature_map",
    "write_pgm",
    "__version__",
]
