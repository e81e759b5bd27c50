import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from adjprior import (
    AdjacencyPriorEstimator,
    GridDims,
    LabelMapPostprocessor,
    NonAdjRefiner,
    PhantomSpec,
    aggregate_prior,
    binarize,
    generate_phantom,
    hard_adjacency,
    one_hot,
    postprocess_all,
    refine,
)
from adjprior.phantom import RefineConfig
from conftest import random_labelmap


def test_prior_estimator_matches_functions(rng):
    labs = [random_labelmap(rng, (5, 5, 5), 4) for _ in range(4)]
    est = AdjacencyPriorEstimator().fit(labs)
    expected = aggregate_prior([binarize(hard_adjacency(x)) for x in labs])
    assert np.array_equal(est.prior_.matrix, expected.matrix)
    assert est.n_subjects_ == 4 and est.binary_.shape == (4, 4, 4)
    assert np.all(est.score_samples(labs) == 0.0)
    assert est.predict(labs).all()
    assert est.transform(labs).shape == (4, 16)


def test_prior_estimator_raw_arrays(rng):
    arrays = [rng.integers(0, 3, size=(4, 4, 4)) for _ in range(2)]
    est = AdjacencyPriorEstimator(num_classes=3).fit(arrays)
    assert est.num_classes_ == 3


def test_prior_estimator_flags_violation():
    gt, _ = generate_phantom(PhantomSpec(dims=GridDims(24, 16, 16), num_classes=4))
    est = AdjacencyPriorEstimator().fit([gt])
    bad = np.array(gt.voxels)
    half = np.zeros_like(bad, dtype=bool)
    half[: int(np.argwhere(gt.voxels == 1)[:, 0].mean())] = True
    bad[(gt.voxels == 1) & half] = 3  # label 3 now touches label 1
    bad_lab = gt.with_voxels(bad)
    assert est.predict([gt, bad_lab]).tolist() == [True, False]
    assert est.score_samples([bad_lab])[0] > 0


def test_params_and_clone():
    est = AdjacencyPriorEstimator(threshold=0.2)
    assert est.get_params() == {"num_classes": None, "threshold": 0.2}
    assert clone(est).threshold == 0.2
    ref = NonAdjRefiner(lam=0.1, phase1_steps=3)
    assert clone(ref).get_params()["lam"] == 0.1
    with pytest.raises(NotFittedError):
        est.score_samples([])


def test_refiner_matches_refine():
    gt, z = generate_phantom(PhantomSpec(seed=2, dims=GridDims(12, 12, 12), num_classes=4))
    est = NonAdjRefiner(phase1_steps=4, phase2_steps=4)
    labels = est.fit_predict(z, gt)
    prior = aggregate_prior([binarize(hard_adjacency(gt))])
    p, trace = refine(z, gt, prior, RefineConfig(4, 4))
    assert np.array_equal(est.proba_.values, p.values)
    assert est.trace_ == trace
    assert labels.voxels.shape == gt.voxels.shape


def test_postprocessor_in_pipeline(rng):
    lab = random_labelmap(rng, (8, 8, 8), 3)
    pipe = make_pipeline(LabelMapPostprocessor())
    assert pipe.fit_transform(lab) == postprocess_all(lab)
    assert LabelMapPostprocessor().transform([lab, lab])[1] == postprocess_all(lab)
