"""Central finite-difference checks for every analytic gradient in the package."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from adjprior.adjacency import nonadj_grad_array, nonadj_loss_array
from adjprior.losses import (
    LossConfig,
    loss_terms,
    seg_grad_array,
    softmax_backward,
    total_grad_array,
)
from adjprior.volumes import softmax_array

FD_STEP = 1e-4
TOLERANCE = 1e-5
# entries whose gradient is tiny relative to the largest one are compared
# against this fraction of the largest magnitude instead of their own
RELATIVE_FLOOR = 1e-3
MAX_ENTRIES = 128


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = RELATIVE_FLOOR * max(np.max(np.abs(numeric)), np.max(np.abs(analytic)), 1e-300)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), scale)
    return float(np.max(np.abs(analytic - numeric) / denom))


def central_difference(f, x: np.ndarray, index, h: float = FD_STEP) -> float:
    xp = x.copy()
    xm = x.copy()
    xp[index] += h
    xm[index] -= h
    return (f(xp) - f(xm)) / (2.0 * h)


def check_gradient(f, grad: np.ndarray, x: np.ndarray, rng, max_entries=MAX_ENTRIES, h=FD_STEP) -> float:
    """Max relative error of ``grad`` against central differences of ``f`` at ``x``.

    Every entry is checked when there are at most ``max_entries``; otherwise a
    random subset of that size.
    """
    n = x.size
    if n <= max_entries:
        flat = np.arange(n)
    else:
        flat = np.sort(rng.choice(n, size=max_entries, replace=False))
    idx = [np.unravel_index(k, x.shape) for k in flat]
    numeric = np.array([central_difference(f, x, i, h) for i in idx])
    analytic = np.array([grad[i] for i in idx])
    return relative_error(analytic, numeric)


def random_instance(rng):
    """Random grid 4..8 per axis, 3..5 classes, a one-hot target and a prior.

    The returned weights use the complement weighting, whose entries vary
    between pairs; the support weights are ``weights == 1``.
    """
    shape = tuple(int(s) for s in rng.integers(4, 9, size=3))
    c = int(rng.integers(3, 6))
    labels = rng.integers(0, c, size=shape)
    g = np.eye(c)[labels]
    prior = rng.choice([0.0, 0.5, 1.0], size=(c, c))
    prior = np.triu(prior, 1)
    prior = prior + prior.T
    weights = 1.0 - prior
    np.fill_diagonal(weights, 0.0)
    # probabilities bounded away from zero keep the log's third derivative tame
    raw = 0.5 + rng.random(shape + (c,))
    p = raw / raw.sum(axis=-1, keepdims=True)
    z = rng.standard_normal(shape + (c,))
    return p, z, g, weights


@dataclass
class SuiteResult:
    name: str
    max_error: float
    instances: int

    @property
    def passed(self) -> bool:
        return self.max_error < TOLERANCE


def run_suites(seed: int = 0, instances: int = 20, lam: float = 0.3) -> list:
    rng = np.random.default_rng(seed)
    sum_cfg = LossConfig(lam=lam, combine_mode="sum")
    prod_cfg = LossConfig(lam=lam, combine_mode="product")
    worst = dict.fromkeys(
        ("seg_sum", "seg_product", "nonadj", "nonadj_support", "total", "total_logits"), 0.0
    )
    for _ in range(instances):
        p, z, g, w = random_instance(rng)
        for name, cfg in (("seg_sum", sum_cfg), ("seg_product", prod_cfg)):
            err = check_gradient(
                lambda x, cfg=cfg: loss_terms(x, g, None, cfg)["seg"],
                seg_grad_array(p, g, cfg), p, rng,
            )
            worst[name] = max(worst[name], err)
        err = check_gradient(lambda x: nonadj_loss_array(x, w), nonadj_grad_array(p, w), p, rng)
        worst["nonadj"] = max(worst["nonadj"], err)
        ws = (w == 1.0).astype(np.float64)
        err = check_gradient(lambda x: nonadj_loss_array(x, ws), nonadj_grad_array(p, ws), p, rng)
        worst["nonadj_support"] = max(worst["nonadj_support"], err)
        err = check_gradient(
            lambda x: loss_terms(x, g, w, sum_cfg)["total"],
            total_grad_array(p, g, w, sum_cfg), p, rng,
        )
        worst["total"] = max(worst["total"], err)
        pz = softmax_array(z)
        grad_z = softmax_backward(pz, total_grad_array(pz, g, w, sum_cfg))
        err = check_gradient(
            lambda x: loss_terms(softmax_array(x), g, w, sum_cfg)["total"], grad_z, z, rng,
        )
        worst["total_logits"] = max(worst["total_logits"], err)
    return [SuiteResult(k, v, instances) for k, v in worst.items()]


def main_report(seed: int = 0, instances: int = 20, out=print) -> bool:
    t0 = time.perf_counter()
    results = run_suites(seed, instances)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        out(f"{status} {r.name} max_rel_err={r.max_error:.3e} instances={r.instances}")
    out(f"elapsed {time.perf_counter() - t0:.2f}s tolerance={TOLERANCE:g} h={FD_STEP:g}")
    return all(r.passed for r in results)
