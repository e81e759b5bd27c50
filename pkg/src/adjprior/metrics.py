"""Per-label volumes, volumetric error, Dice score and HD95.

Undefined results are ``None``; they are never replaced by 0 or infinity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from adjprior.validation import check_label_in_range, check_num_classes, check_same_grid
from adjprior.volumes import GridDims, LabelMap, Spacing, voxel_volume_mm3

SIX_CONNECTED = ndimage.generate_binary_structure(3, 1)


@dataclass(frozen=True)
class LabelMetrics:
    label: int
    vol_gt_cm3: float
    vol_pred_cm3: float
    err_cm3: float
    err_pct: Optional[float]
    dsc: Optional[float]
    hd95_mm: Optional[float]
    name: str = ""


@dataclass(frozen=True)
class MetricReport:
    labels: list
    dims: GridDims
    spacing: Spacing
    names: dict = field(default_factory=dict)

    def __getitem__(self, label) -> LabelMetrics:
        for m in self.labels:
            if m.label == label:
                return m
        raise KeyError(label)


def label_volume_cm3(lab: LabelMap, label: int) -> float:
    label = check_label_in_range(label, lab.num_classes)
    n = int(np.count_nonzero(lab.voxels == label))
    return n * voxel_volume_mm3(lab.spacing) / 1000.0


def volumetric_error(v_gt: float, v_pred: float):
    """Return ``(|v_gt - v_pred|, percent of v_gt)``; the percentage is None when v_gt is 0."""
    if v_gt < 0 or v_pred < 0:
        raise ValueError("volumes must be non-negative")
    err = abs(v_gt - v_pred)
    pct = 100.0 * err / v_gt if v_gt > 0 else None
    return err, pct


def dice_score(lab_gt: LabelMap, lab_pred: LabelMap, label: int) -> Optional[float]:
    check_same_grid(lab_gt, lab_pred, spacing=False)
    label = check_label_in_range(label, min(lab_gt.num_classes, lab_pred.num_classes))
    x = lab_gt.voxels == label
    y = lab_pred.voxels == label
    total = int(x.sum()) + int(y.sum())
    if total == 0:
        return None
    return 2.0 * int(np.logical_and(x, y).sum()) / total


def surface_points(mask: np.ndarray, spacing: Spacing) -> np.ndarray:
    """Physical centers of mask voxels with at least one 6-neighbour outside the mask.

    Out-of-grid neighbours count as outside.
    """
    interior = ndimage.binary_erosion(mask, structure=SIX_CONNECTED, border_value=0)
    idx = np.argwhere(mask & ~interior)
    return idx * np.asarray(spacing.as_tuple(), dtype=np.float64)


def nearest_distances(src: np.ndarray, dst: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """Exact Euclidean distance from every ``src`` point to its nearest ``dst`` point."""
    out = np.empty(len(src), dtype=np.float64)
    step = max(1, min(chunk, 4_000_000 // max(len(dst), 1)))
    for start in range(0, len(src), step):
        block = src[start:start + step]
        diff = block[:, None, :] - dst[None, :, :]
        sq = diff[..., 0] ** 2 + diff[..., 1] ** 2 + diff[..., 2] ** 2
        out[start:start + step] = np.sqrt(sq.min(axis=1))
    return out


def nearest_rank_percentile(values: np.ndarray, q: int = 95) -> float:
    """Nearest-rank percentile: element ``ceil(q/100 * n)`` (1-based) of the sorted values."""
    n = len(values)
    rank = (q * n + 99) // 100
    return float(np.sort(values)[max(rank, 1) - 1])


def hd95_mm(lab_gt: LabelMap, lab_pred: LabelMap, label: int) -> Optional[float]:
    check_same_grid(lab_gt, lab_pred)
    label = check_label_in_range(label, min(lab_gt.num_classes, lab_pred.num_classes))
    a = lab_gt.voxels == label
    b = lab_pred.voxels == label
    if not a.any() or not b.any():
        return None
    pa = surface_points(a, lab_gt.spacing)
    pb = surface_points(b, lab_gt.spacing)
    return max(
        nearest_rank_percentile(nearest_distances(pa, pb)),
        nearest_rank_percentile(nearest_distances(pb, pa)),
    )


def evaluate(lab_gt: LabelMap, lab_pred: LabelMap, names=None) -> MetricReport:
    check_same_grid(lab_gt, lab_pred)
    check_num_classes(lab_gt, lab_pred)
    names = dict(names or {})
    rows = []
    for label in range(1, lab_gt.num_classes):
        v_gt = label_volume_cm3(lab_gt, label)
        v_pred = label_volume_cm3(lab_pred, label)
        err, pct = volumetric_error(v_gt, v_pred)
        rows.append(LabelMetrics(
            label=label,
            vol_gt_cm3=v_gt,
            vol_pred_cm3=v_pred,
            err_cm3=err,
            err_pct=pct,
            dsc=dice_score(lab_gt, lab_pred, label),
            hd95_mm=hd95_mm(lab_gt, lab_pred, label),
            name=names.get(label, ""),
        ))
    return MetricReport(rows, lab_gt.dims, lab_gt.spacing, names)
