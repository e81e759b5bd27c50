"""Synthetic multi-label phantoms and two-phase gradient-descent refinement of logits.

The refinement optimizes per-voxel logits directly: phase 1 minimizes the
segmentation loss alone, phase 2 adds the lambda-weighted non-adjacency term.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from adjprior.adjacency import PriorAdj
from adjprior.losses import LossConfig, loss_terms, softmax_backward, total_grad_array
from adjprior.validation import ValidationError, check_num_classes, check_same_grid
from adjprior.volumes import GridDims, LabelMap, LogitMap, ProbMap, Spacing, one_hot, softmax_array

RNG_ALGORITHM = "numpy.PCG64/standard_normal"


@dataclass(frozen=True)
class PhantomSpec:
    seed: int = 42
    dims: GridDims = field(default_factory=lambda: GridDims(48, 48, 48))
    num_classes: int = 5
    noise_sigma: float = 1.5
    logit_gain: float = 2.0
    spacing: Spacing = field(default_factory=Spacing)

    def __post_init__(self):
        if isinstance(self.dims, int):
            object.__setattr__(self, "dims", GridDims(self.dims, self.dims, self.dims))
        elif not isinstance(self.dims, GridDims):
            object.__setattr__(self, "dims", GridDims(*self.dims))
        object.__setattr__(self, "spacing", Spacing.coerce(self.spacing))
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ValidationError(f"seed={self.seed} must be a 64-bit unsigned integer")
        if self.num_classes < 3:
            raise ValidationError(f"num_classes={self.num_classes} must be >= 3")
        if min(self.dims.shape) < 8:
            raise ValidationError(f"every grid dimension must be >= 8, got {self.dims.shape}")
        if not math.isfinite(self.noise_sigma) or self.noise_sigma < 0:
            raise ValidationError(f"noise_sigma={self.noise_sigma} must be >= 0")
        if not math.isfinite(self.logit_gain):
            raise ValidationError("logit_gain must be finite")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dims"] = list(self.dims.shape)
        d["spacing"] = list(self.spacing.as_tuple())
        d["rng_algorithm"] = RNG_ALGORITHM
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        d = {k: v for k, v in d.items() if k != "rng_algorithm"}
        d["dims"] = GridDims(*d["dims"])
        d["spacing"] = Spacing(*d.get("spacing", (1.0, 1.0, 1.0)))
        return cls(**d)


def _chain_labels(spec: PhantomSpec) -> np.ndarray:
    """Ellipsoids strung along x; structure k overlaps k+1 and never reaches k+2.

    With only two structures they are placed apart so that the pair (1, 2)
    stays non-adjacent.
    """
    h, w, d = spec.dims.shape
    n = spec.num_classes - 1
    step = h / (n + 1)
    rx = 0.65 * step if n > 2 else 0.35 * step
    ry, rz = 0.3 * w, 0.3 * d
    x, y, z = np.meshgrid(np.arange(h), np.arange(w), np.arange(d), indexing="ij")
    vox = np.zeros((h, w, d), dtype=np.int64)
    for k in range(1, n + 1):
        inside = (
            ((x - k * step) / rx) ** 2
            + ((y - (w - 1) / 2) / ry) ** 2
            + ((z - (d - 1) / 2) / rz) ** 2
        ) <= 1.0
        vox[inside] = k
    return vox


def generate_phantom(spec: PhantomSpec) -> tuple[LabelMap, LogitMap]:
    """Ground-truth chain phantom and its noisy logits.

    Logits are ``logit_gain * one_hot(gt) + sigma * N(0, 1)``, the normal
    draws coming from ``numpy.random.PCG64(seed)`` in C order over
    ``(x, y, z, class)``.
    """
    gt = LabelMap(_chain_labels(spec), spec.num_classes, spec.spacing)
    present = np.unique(gt.voxels)
    if len(present) != spec.num_classes:
        raise ValidationError(
            f"grid {spec.dims.shape} too small to hold {spec.num_classes - 1} structures"
        )
    rng = np.random.Generator(np.random.PCG64(int(spec.seed)))
    noise = rng.standard_normal(spec.dims.shape + (spec.num_classes,))
    logits = spec.logit_gain * one_hot(gt).values + spec.noise_sigma * noise
    return gt, LogitMap(logits, spec.spacing)


def implant_blob(z: LogitMap, center, radius: float, label: int, gain: float) -> LogitMap:
    """Add ``gain`` to the ``label`` logit inside a sphere, forcing a spurious region."""
    h, w, d = z.dims.shape
    x, y, zz = np.meshgrid(np.arange(h), np.arange(w), np.arange(d), indexing="ij")
    cx, cy, cz = center
    inside = (x - cx) ** 2 + (y - cy) ** 2 + (zz - cz) ** 2 <= radius**2
    values = np.array(z.values)
    values[inside, label] += gain
    return LogitMap(values, z.spacing)


def structure_center(gt: LabelMap, label: int) -> tuple[float, float, float]:
    idx = np.argwhere(gt.voxels == label)
    if len(idx) == 0:
        raise ValidationError(f"label {label} absent")
    return tuple(float(v) for v in idx.mean(axis=0))


@dataclass(frozen=True)
class RefineConfig:
    """Two-phase schedule.

    ``learning_rate`` is a per-voxel step: each update is
    ``z -= learning_rate * I * grad`` with ``I`` the voxel count, which undoes
    the 1/I scaling of the mean-reduced losses.
    """

    phase1_steps: int = 200
    phase2_steps: int = 300
    learning_rate: float = 0.05
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        for name in ("phase1_steps", "phase2_steps"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise ValidationError(f"{name}={v} must be an integer >= 0")
        if self.phase1_steps + self.phase2_steps == 0:
            raise ValidationError("at least one phase must have steps")
        if not self.learning_rate > 0 or not math.isfinite(self.learning_rate):
            raise ValidationError(f"learning_rate={self.learning_rate} must be > 0")


class TraceRow(NamedTuple):
    step: int
    phase: int
    total: float
    seg: float
    dice: float
    ce: float
    nonadj: float


TRACE_COLUMNS = TraceRow._fields


class RefinementDiverged(ArithmeticError):
    def __init__(self, step):
        super().__init__(f"non-finite loss at step {step}")
        self.step = step


def refine(z0: LogitMap, g: LabelMap, A: PriorAdj, cfg: RefineConfig = RefineConfig()):
    """Plain fixed-step gradient descent on the logits.

    Returns ``(probabilities, trace)``. Each trace row holds the loss terms
    evaluated at the logits *before* that step's update. Phase 1 rows report a
    zero non-adjacency term since it is not part of the objective there.
    """
    check_same_grid(z0, g, spacing=False)
    check_num_classes(z0, g)
    if A.num_classes != g.num_classes:
        raise ValidationError(
            f"class count mismatch: prior has {A.num_classes}, labelmap has {g.num_classes}"
        )
    gt = one_hot(g).values
    weights = A.penalty_weights(cfg.loss.weighting)
    n_vox = g.dims.num_voxels
    step_size = cfg.learning_rate * n_vox
    seg_cfg = dataclasses.replace(cfg.loss, lam=0.0)

    z = np.array(z0.values, dtype=np.float64)
    trace = []
    schedule = [(1, cfg.phase1_steps, seg_cfg, None), (2, cfg.phase2_steps, cfg.loss, weights)]
    step = 0
    for phase, n_steps, lcfg, w in schedule:
        for _ in range(n_steps):
            p = softmax_array(z)
            terms = loss_terms(p, gt, w, lcfg)
            if not all(math.isfinite(v) for v in terms.values()):
                raise RefinementDiverged(step)
            trace.append(TraceRow(step, phase, **terms))
            grad = softmax_backward(p, total_grad_array(p, gt, w, lcfg))
            z -= step_size * grad
            if not np.all(np.isfinite(z)):
                raise RefinementDiverged(step)
            step += 1
    return ProbMap(softmax_array(z), z0.spacing), trace
