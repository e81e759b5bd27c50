"""scikit-learn style wrappers so the prior, refinement and cleanup compose with pipelines."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from adjprior.adjacency import (
    PriorAdj,
    aggregate_prior,
    binarize,
    hard_adjacency,
    nonadj_loss,
    soft_adjacency,
    violation_report,
)
from adjprior.losses import LossConfig
from adjprior.phantom import RefineConfig, refine
from adjprior.postprocess import postprocess_all
from adjprior.validation import ValidationError
from adjprior.volumes import LabelMap, LogitMap, ProbMap, argmax_labels, one_hot


def _as_labelmaps(X, num_classes=None) -> list:
    if isinstance(X, (LabelMap, ProbMap, np.ndarray)):
        X = [X]
    X = list(X)
    if not X:
        raise ValidationError("no subjects")
    if num_classes is None:
        known = [x.num_classes for x in X if isinstance(x, (LabelMap, ProbMap))]
        num_classes = max(known) if known else 1 + max(int(np.max(x)) for x in X)
    out = []
    for x in X:
        if isinstance(x, (LabelMap, ProbMap)):
            if x.num_classes != num_classes:
                raise ValidationError(
                    f"class count mismatch: {x.num_classes} vs {num_classes}"
                )
            out.append(x)
        else:
            out.append(LabelMap(x, num_classes))
    return out


def _as_prob(x) -> ProbMap:
    return one_hot(x) if isinstance(x, LabelMap) else x


class AdjacencyPriorEstimator(BaseEstimator):
    """Learn the probabilistic adjacency prior from a set of ground-truth labelmaps.

    Parameters
    ----------
    num_classes : int, optional
        Needed only when ``X`` holds raw integer arrays; inferred otherwise.
    threshold : float
        Prior value at or below which an observed contact counts as a violation.

    Attributes
    ----------
    prior_ : PriorAdj
    binary_ : ndarray of shape (n_subjects, C, C)
    n_subjects_ : int
    """

    def __init__(self, num_classes=None, threshold=0.0):
        self.num_classes = num_classes
        self.threshold = threshold

    def fit(self, X, y=None):
        labs = _as_labelmaps(X, self.num_classes)
        if any(not isinstance(lab, LabelMap) for lab in labs):
            raise ValidationError("the prior is built from hard labelmaps")
        mats = [binarize(hard_adjacency(lab)) for lab in labs]
        self.prior_ = aggregate_prior(mats)
        self.binary_ = np.stack([m.matrix for m in mats])
        self.n_subjects_ = len(mats)
        self.num_classes_ = self.prior_.num_classes
        return self

    def transform(self, X):
        """Normalized soft adjacency of each sample, flattened to ``C * C`` features."""
        check_is_fitted(self, "prior_")
        samples = _as_labelmaps(X, self.num_classes_)
        return np.stack([soft_adjacency(_as_prob(s)).matrix.ravel() for s in samples])

    def score_samples(self, X):
        check_is_fitted(self, "prior_")
        samples = _as_labelmaps(X, self.num_classes_)
        return np.array([nonadj_loss(_as_prob(s), self.prior_) for s in samples])

    def violations(self, X):
        check_is_fitted(self, "prior_")
        samples = _as_labelmaps(X, self.num_classes_)
        return [
            violation_report(s if isinstance(s, LabelMap) else argmax_labels(s),
                             self.prior_, self.threshold)
            for s in samples
        ]

    def predict(self, X):
        """True for every sample whose contacts all respect the prior."""
        return np.array([not v for v in self.violations(X)])


class NonAdjRefiner(BaseEstimator):
    """Two-phase logit refinement with the non-adjacency penalty in phase 2.

    Refinement is transductive: ``fit(logits, gt)`` optimizes those logits and
    stores the outcome in ``proba_``, ``labels_`` and ``trace_``, the same way
    clustering estimators expose ``labels_``.
    """

    def __init__(self, lam=0.3, phase1_steps=200, phase2_steps=300, learning_rate=0.05,
                 dice_eps=1e-5, ce_eps=1e-12, combine_mode="sum", weighting="support",
                 prior=None):
        self.lam = lam
        self.phase1_steps = phase1_steps
        self.phase2_steps = phase2_steps
        self.learning_rate = learning_rate
        self.dice_eps = dice_eps
        self.ce_eps = ce_eps
        self.combine_mode = combine_mode
        self.weighting = weighting
        self.prior = prior

    def _config(self) -> RefineConfig:
        loss = LossConfig(self.lam, self.dice_eps, self.ce_eps, self.combine_mode, self.weighting)
        return RefineConfig(self.phase1_steps, self.phase2_steps, self.learning_rate, loss)

    def fit(self, X: LogitMap, y: LabelMap):
        if not isinstance(X, LogitMap):
            X = LogitMap(X)
        if not isinstance(y, LabelMap):
            y = LabelMap(y, X.num_classes, X.spacing)
        prior = self.prior
        if prior is None:
            prior = aggregate_prior([binarize(hard_adjacency(y))])
        elif not isinstance(prior, PriorAdj):
            prior = PriorAdj(np.asarray(prior))
        self.prior_ = prior
        self.proba_, self.trace_ = refine(X, y, prior, self._config())
        self.labels_ = argmax_labels(self.proba_)
        return self

    def fit_predict(self, X, y):
        return self.fit(X, y).labels_


class LabelMapPostprocessor(TransformerMixin, BaseEstimator):
    """Stateless transformer applying largest-component filtering and hole filling."""

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        if isinstance(X, LabelMap):
            return postprocess_all(X)
        return [postprocess_all(x) for x in X]
