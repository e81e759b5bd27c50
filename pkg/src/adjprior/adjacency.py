"""Label adjacency matrices, the cross-subject prior and the non-adjacency penalty.

Neighbours are the axis-aligned 6-neighbourhood. Each unordered neighbour
pair is visited exactly once by three forward-difference passes (x, y, z).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from adjprior.validation import ValidationError
from adjprior.volumes import LabelMap, ProbMap


WEIGHTINGS = ("support", "complement")


def _check_square(matrix, *, name) -> np.ndarray:
    m = np.array(matrix, dtype=np.float64, copy=True)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise ValidationError(f"{name} matrix must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValidationError(f"{name} matrix contains non-finite entries")
    if not np.array_equal(m, m.T):
        raise ValidationError(f"{name} matrix is not symmetric")
    if np.any(np.diag(m) != 0):
        raise ValidationError(f"{name} matrix has a nonzero diagonal")
    if m.min() < 0:
        raise ValidationError(f"{name} matrix has negative entries")
    m.setflags(write=False)
    return m


@dataclass(frozen=True, eq=False)
class AdjCounts:
    """Symmetric neighbour-pair counts (hard) or normalized soft counts."""

    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _check_square(self.matrix, name="count"))

    @property
    def num_classes(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True, eq=False)
class BinaryAdj:
    matrix: np.ndarray

    def __post_init__(self):
        m = _check_square(self.matrix, name="binary")
        if not np.all((m == 0) | (m == 1)):
            raise ValidationError("binary matrix entries must be 0 or 1")
        object.__setattr__(self, "matrix", m)

    @property
    def num_classes(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True, eq=False)
class PriorAdj:
    """Empirical frequency with which each label pair is adjacent across subjects."""

    matrix: np.ndarray
    num_subjects: int = 1

    def __post_init__(self):
        m = _check_square(self.matrix, name="prior")
        if m.max() > 1:
            raise ValidationError("prior entries must lie in [0, 1]")
        if int(self.num_subjects) != self.num_subjects or self.num_subjects < 1:
            raise ValidationError(f"num_subjects={self.num_subjects} must be >= 1")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "num_subjects", int(self.num_subjects))

    @property
    def num_classes(self) -> int:
        return self.matrix.shape[0]

    def penalty_weights(self, weighting: str = "support") -> np.ndarray:
        """Per-pair penalty weights with a zero diagonal.

        ``"support"`` weights a pair 1 only if no subject ever showed it
        (``A == 0``), so every contact seen in training is free.
        ``"complement"`` weights each pair by ``1 - A``, charging rarely seen
        contacts in proportion to how rare they are.
        """
        if weighting == "support":
            w = (self.matrix == 0).astype(np.float64)
        elif weighting == "complement":
            w = 1.0 - self.matrix
        else:
            raise ValidationError(f"weighting={weighting!r} not in {WEIGHTINGS}")
        np.fill_diagonal(w, 0.0)
        return w


def _forward_pairs(arr: np.ndarray):
    """Yield ``(first, second)`` views of every axis-neighbour pair, one axis at a time."""
    for axis in range(3):
        n = arr.shape[axis]
        if n < 2:
            continue
        lo = [slice(None)] * arr.ndim
        hi = [slice(None)] * arr.ndim
        lo[axis] = slice(0, n - 1)
        hi[axis] = slice(1, n)
        yield axis, tuple(lo), tuple(hi)


def pair_count(shape) -> int:
    """Number of unordered 6-neighbour voxel pairs on a grid."""
    h, w, d = shape[:3]
    return (h - 1) * w * d + h * (w - 1) * d + h * w * (d - 1)


def hard_adjacency(lab: LabelMap) -> AdjCounts:
    c = lab.num_classes
    vox = lab.voxels
    ordered = np.zeros(c * c, dtype=np.int64)
    for _, lo, hi in _forward_pairs(vox):
        a = vox[lo].ravel()
        b = vox[hi].ravel()
        diff = a != b
        ordered += np.bincount(a[diff] * c + b[diff], minlength=c * c)
    ordered = ordered.reshape(c, c)
    return AdjCounts(ordered + ordered.T)


def binarize(a: AdjCounts) -> BinaryAdj:
    return BinaryAdj((a.matrix > 0).astype(np.float64))


def aggregate_prior(mats: Sequence[BinaryAdj]) -> PriorAdj:
    mats = list(mats)
    if not mats:
        raise ValidationError("no subjects")
    c = mats[0].num_classes
    total = np.zeros((c, c), dtype=np.float64)
    for i, m in enumerate(mats):
        if m.num_classes != c:
            raise ValidationError(
                f"subject {i} has {m.num_classes} classes, expected {c}"
            )
        total += m.matrix
    # integer-valued sums, so the result does not depend on summation order
    return PriorAdj(total / len(mats), num_subjects=len(mats))


def _soft_counts_raw(values: np.ndarray) -> np.ndarray:
    c = values.shape[-1]
    m = np.zeros((c, c), dtype=np.float64)
    for _, lo, hi in _forward_pairs(values[..., 0]):
        pi = values[lo].reshape(-1, c)
        pj = values[hi].reshape(-1, c)
        m += pi.T @ pj
    s = m + m.T
    np.fill_diagonal(s, 0.0)
    return s


def soft_adjacency(p: ProbMap) -> AdjCounts:
    z = pair_count(p.values.shape)
    s = _soft_counts_raw(p.values)
    if z:
        s = s / z
    return AdjCounts(s)


def _check_prior_match(p: ProbMap, A: PriorAdj):
    if p.num_classes != A.num_classes:
        raise ValidationError(
            f"class count mismatch: prediction has {p.num_classes}, prior has {A.num_classes}"
        )


def nonadj_loss_array(values: np.ndarray, weights: np.ndarray) -> float:
    """Penalty on a raw ``(h, w, d, C)`` array; ``weights`` comes from :meth:`PriorAdj.penalty_weights`."""
    z = pair_count(values.shape)
    if z == 0:
        return 0.0
    s = _soft_counts_raw(values) / z
    # upper triangle: each unordered label pair counted once
    return float(np.sum(np.triu(weights * s, k=1)))


def nonadj_grad_array(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    z = pair_count(values.shape)
    grad = np.zeros_like(values, dtype=np.float64)
    if z == 0:
        return grad
    for _, lo, hi in _forward_pairs(values[..., 0]):
        grad[lo] += values[hi] @ weights
        grad[hi] += values[lo] @ weights
    return grad / z


def nonadj_loss(p: ProbMap, A: PriorAdj, weighting: str = "support") -> float:
    """Weighted soft contact mass between label pairs, each unordered pair counted once.

    See :meth:`PriorAdj.penalty_weights` for the two weightings.
    """
    _check_prior_match(p, A)
    return nonadj_loss_array(p.values, A.penalty_weights(weighting))


def nonadj_loss_grad(p: ProbMap, A: PriorAdj, weighting: str = "support") -> np.ndarray:
    """Gradient of :func:`nonadj_loss` w.r.t. every probability, shape ``(h, w, d, C)``."""
    _check_prior_match(p, A)
    return nonadj_grad_array(p.values, A.penalty_weights(weighting))


def violation_report(lab: LabelMap, A: PriorAdj, threshold: float = 0.0):
    """List observed contacts between label pairs the prior considers unlikely.

    Returns ``(b, c, count)`` tuples with ``b < c`` for every pair whose hard
    adjacency count is positive while ``A[b, c] <= threshold``, sorted by
    descending count (ties by ``(b, c)``).
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValidationError(f"threshold {threshold} outside [0, 1]")
    if lab.num_classes != A.num_classes:
        raise ValidationError(
            f"class count mismatch: labelmap has {lab.num_classes}, prior has {A.num_classes}"
        )
    counts = hard_adjacency(lab).matrix
    out = []
    for b, c in zip(*np.triu_indices(lab.num_classes, k=1)):
        n = int(counts[b, c])
        if n > 0 and A.matrix[b, c] <= threshold:
            out.append((int(b), int(c), n))
    out.sort(key=lambda t: (-t[2], t[0], t[1]))
    return out
