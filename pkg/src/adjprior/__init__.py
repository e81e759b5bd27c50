"""Anatomical adjacency priors for multi-label 3D segmentation volumes."""

from adjprior.volumes import (
    GridDims,
    LabelMap,
    LogitMap,
    ProbMap,
    Spacing,
    argmax_labels,
    one_hot,
    softmax,
    voxel_volume_mm3,
)
from adjprior.adjacency import (
    AdjCounts,
    BinaryAdj,
    PriorAdj,
    aggregate_prior,
    binarize,
    hard_adjacency,
    nonadj_loss,
    nonadj_loss_grad,
    soft_adjacency,
    violation_report,
)
from adjprior.losses import (
    LossConfig,
    cross_entropy_loss,
    seg_loss,
    soft_dice_loss,
    total_loss,
    total_loss_grad,
    total_loss_grad_logits,
)
from adjprior.metrics import (
    LabelMetrics,
    MetricReport,
    dice_score,
    evaluate,
    hd95_mm,
    label_volume_cm3,
    volumetric_error,
)
from adjprior.postprocess import fill_holes, largest_component, postprocess_all
from adjprior.phantom import (
    PhantomSpec,
    RefineConfig,
    generate_phantom,
    refine,
)
from adjprior.estimators import (
    AdjacencyPriorEstimator,
    LabelMapPostprocessor,
    NonAdjRefiner,
)

__version__ = "0.1.0"

__all__ = [
    "GridDims", "LabelMap", "LogitMap", "ProbMap", "Spacing",
    "argmax_labels", "one_hot", "softmax", "voxel_volume_mm3",
    "AdjCounts", "BinaryAdj", "PriorAdj", "aggregate_prior", "binarize",
    "hard_adjacency", "nonadj_loss", "nonadj_loss_grad", "soft_adjacency",
    "violation_report",
    "LossConfig", "cross_entropy_loss", "seg_loss", "soft_dice_loss",
    "total_loss", "total_loss_grad", "total_loss_grad_logits",
    "LabelMetrics", "MetricReport", "dice_score", "evaluate", "hd95_mm",
    "label_volume_cm3", "volumetric_error",
    "fill_holes", "largest_component", "postprocess_all",
    "PhantomSpec", "RefineConfig", "generate_phantom", "refine",
    "AdjacencyPriorEstimator", "LabelMapPostprocessor", "NonAdjRefiner",
]
