"""Volume containers and the label/probability/logit conversions.

Arrays are indexed ``[x, y, z]`` with shape ``(h, w, d)``; probability and
logit volumes carry a trailing class axis, ``(h, w, d, num_classes)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from adjprior.validation import (
    ValidationError,
    check_label_array,
    check_prob_array,
    check_score_array,
)


@dataclass(frozen=True)
class Spacing:
    """Physical voxel size in millimeters along x, y and z."""

    sx: float = 1.0
    sy: float = 1.0
    sz: float = 1.0

    def __post_init__(self):
        for name in ("sx", "sy", "sz"):
            v = float(getattr(self, name))
            if not math.isfinite(v) or v <= 0:
                raise ValidationError(f"spacing {name}={v} must be finite and > 0")
            object.__setattr__(self, name, v)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.sx, self.sy, self.sz)

    @classmethod
    def coerce(cls, value) -> "Spacing":
        if isinstance(value, Spacing):
            return value
        if value is None:
            return cls()
        if np.isscalar(value):
            return cls(value, value, value)
        return cls(*value)


@dataclass(frozen=True)
class GridDims:
    h: int
    w: int
    d: int

    def __post_init__(self):
        for name in ("h", "w", "d"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValidationError(f"grid dimension {name}={v} must be an integer >= 1")
            object.__setattr__(self, name, int(v))

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.h, self.w, self.d)

    @property
    def num_voxels(self) -> int:
        return self.h * self.w * self.d


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Integer class per voxel; label 0 is background."""

    voxels: np.ndarray
    num_classes: int
    spacing: Spacing = field(default_factory=Spacing)

    def __post_init__(self):
        vox = check_label_array(self.voxels, self.num_classes)
        object.__setattr__(self, "voxels", _frozen(vox))
        object.__setattr__(self, "num_classes", int(self.num_classes))
        object.__setattr__(self, "spacing", Spacing.coerce(self.spacing))

    @property
    def dims(self) -> GridDims:
        return GridDims(*self.voxels.shape)

    def with_voxels(self, voxels) -> "LabelMap":
        return LabelMap(voxels, self.num_classes, self.spacing)

    def __eq__(self, other):
        if not isinstance(other, LabelMap):
            return NotImplemented
        return (
            self.num_classes == other.num_classes
            and self.spacing == other.spacing
            and self.voxels.shape == other.voxels.shape
            and bool(np.array_equal(self.voxels, other.voxels))
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ProbMap:
    """Per-voxel class probabilities, shape ``(h, w, d, num_classes)``."""

    values: np.ndarray
    spacing: Spacing = field(default_factory=Spacing)

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(check_prob_array(self.values)))
        object.__setattr__(self, "spacing", Spacing.coerce(self.spacing))

    @property
    def num_classes(self) -> int:
        return self.values.shape[-1]

    @property
    def dims(self) -> GridDims:
        return GridDims(*self.values.shape[:3])

    __hash__ = None


@dataclass(frozen=True, eq=False)
class LogitMap:
    """Unconstrained per-voxel class scores, shape ``(h, w, d, num_classes)``."""

    values: np.ndarray
    spacing: Spacing = field(default_factory=Spacing)

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(check_score_array(self.values)))
        object.__setattr__(self, "spacing", Spacing.coerce(self.spacing))

    @property
    def num_classes(self) -> int:
        return self.values.shape[-1]

    @property
    def dims(self) -> GridDims:
        return GridDims(*self.values.shape[:3])

    __hash__ = None


def one_hot(lab: LabelMap) -> ProbMap:
    eye = np.eye(lab.num_classes, dtype=np.float64)
    return ProbMap(eye[lab.voxels], lab.spacing)


def argmax_labels(p: ProbMap) -> LabelMap:
    # np.argmax returns the first maximum, i.e. ties go to the lowest class
    return LabelMap(np.argmax(p.values, axis=-1), p.num_classes, p.spacing)


def softmax_array(z: np.ndarray) -> np.ndarray:
    """Softmax over the last axis with per-voxel max subtraction."""
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax(z: LogitMap) -> ProbMap:
    return ProbMap(softmax_array(z.values), z.spacing)


def voxel_volume_mm3(s: Spacing) -> float:
    return s.sx * s.sy * s.sz
