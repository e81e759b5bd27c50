"""Input checking shared by the volume types, operations and estimators."""

import numpy as np

PROB_SUM_ATOL = 1e-6


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


def check_label_array(voxels, num_classes) -> np.ndarray:
    arr = np.asarray(voxels)
    if arr.ndim != 3:
        raise ValidationError(f"label volume must be 3D, got shape {arr.shape}")
    if arr.size == 0:
        raise ValidationError("label volume is empty")
    if not (np.issubdtype(arr.dtype, np.integer) or arr.dtype == bool):
        if not np.all(np.mod(arr, 1) == 0):
            raise ValidationError("label volume must hold integers")
    if int(num_classes) != num_classes or num_classes < 1:
        raise ValidationError(f"num_classes={num_classes} must be a positive integer")
    arr = arr.astype(np.int64)
    if arr.min() < 0 or arr.max() >= num_classes:
        raise ValidationError(
            f"labels must lie in [0, {int(num_classes) - 1}], "
            f"found range [{arr.min()}, {arr.max()}]"
        )
    return arr


def check_score_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 4:
        raise ValidationError(f"class volume must be 4D (h, w, d, C), got shape {arr.shape}")
    if arr.size == 0:
        raise ValidationError("class volume is empty")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("class volume contains non-finite values")
    return arr


def check_prob_array(values) -> np.ndarray:
    arr = check_score_array(values)
    if arr.min() < 0 or arr.max() > 1:
        raise ValidationError("probabilities must lie in [0, 1]")
    err = np.abs(arr.sum(axis=-1) - 1.0).max()
    if err > PROB_SUM_ATOL:
        raise ValidationError(f"per-voxel probabilities must sum to 1 (max deviation {err:.3g})")
    return arr


def check_same_grid(a, b, *, spacing=True):
    """Raise unless two volumes share grid dims (and optionally spacing)."""
    if a.dims != b.dims:
        raise ValidationError(f"grid mismatch: {a.dims.shape} vs {b.dims.shape}")
    if spacing and a.spacing != b.spacing:
        raise ValidationError(
            f"spacing mismatch: {a.spacing.as_tuple()} vs {b.spacing.as_tuple()}"
        )


def check_num_classes(a, b):
    if a.num_classes != b.num_classes:
        raise ValidationError(f"class count mismatch: {a.num_classes} vs {b.num_classes}")


def check_label_in_range(label, num_classes, *, allow_background=True):
    lo = 0 if allow_background else 1
    if int(label) != label or not lo <= label < num_classes:
        raise ValidationError(f"label {label} outside [{lo}, {num_classes - 1}]")
    return int(label)
