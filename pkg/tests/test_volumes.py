import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from adjprior import (
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
from adjprior.validation import ValidationError


def single(value, num_classes):
    return LabelMap(np.full((1, 1, 1), value), num_classes)


def logits(vec):
    return LogitMap(np.asarray(vec, dtype=float).reshape(1, 1, 1, -1))


def test_one_hot_indicator():
    assert one_hot(single(0, 2)).values.ravel().tolist() == [1.0, 0.0]
    assert one_hot(single(2, 3)).values.ravel().tolist() == [0.0, 0.0, 1.0]
    p = one_hot(LabelMap(np.ones((2, 2, 2), dtype=int), 3))
    assert np.array_equal(p.values.reshape(-1, 3), np.tile([0.0, 1.0, 0.0], (8, 1)))
    assert np.all(p.values.sum(axis=-1) == 1.0)


def test_argmax_labels_and_tie_rule():
    p = ProbMap(np.array([0.1, 0.7, 0.2]).reshape(1, 1, 1, 3))
    assert argmax_labels(p).voxels.item() == 1
    tie = ProbMap(np.array([0.5, 0.5]).reshape(1, 1, 1, 2))
    assert argmax_labels(tie).voxels.item() == 0


def test_softmax_examples():
    assert softmax(logits([0, 0])).values.ravel() == pytest.approx([0.5, 0.5], abs=1e-15)
    assert softmax(logits([math.log(2), 0])).values.ravel() == pytest.approx([2 / 3, 1 / 3], abs=1e-15)
    big = softmax(logits([1000, 0])).values.ravel()
    assert np.all(np.isfinite(big))
    assert big[0] == pytest.approx(1.0) and big[1] == pytest.approx(0.0, abs=1e-300)


def test_voxel_volume():
    assert voxel_volume_mm3(Spacing(1, 1, 1)) == 1.0
    assert voxel_volume_mm3(Spacing(0.55, 0.55, 0.55)) == pytest.approx(0.166375, rel=1e-12)
    assert voxel_volume_mm3(Spacing(2, 1, 0.5)) == 1.0


@pytest.mark.parametrize("bad", [(0, 1, 1), (1, -1, 1), (1, 1, float("inf")), (1, float("nan"), 1)])
def test_spacing_rejects_nonpositive_or_nonfinite(bad):
    with pytest.raises(ValidationError):
        Spacing(*bad)


def test_grid_dims():
    g = GridDims(2, 3, 4)
    assert g.num_voxels == 24 and g.shape == (2, 3, 4)
    with pytest.raises(ValidationError):
        GridDims(0, 1, 1)


def test_labelmap_rejects_out_of_range():
    with pytest.raises(ValidationError):
        LabelMap(np.array([[[3]]]), 3)
    with pytest.raises(ValidationError):
        LabelMap(np.zeros((2, 2)), 3)


def test_probmap_invariants():
    with pytest.raises(ValidationError):
        ProbMap(np.array([0.6, 0.6]).reshape(1, 1, 1, 2))
    with pytest.raises(ValidationError):
        ProbMap(np.array([1.5, -0.5]).reshape(1, 1, 1, 2))
    with pytest.raises(ValidationError):
        LogitMap(np.array([np.nan, 0.0]).reshape(1, 1, 1, 2))


def test_volumes_are_immutable():
    lab = LabelMap(np.zeros((2, 2, 2), dtype=int), 2)
    with pytest.raises(ValueError):
        lab.voxels[0, 0, 0] = 1


label_volumes = st.tuples(
    st.integers(1, 5), st.integers(1, 4), st.integers(1, 4), st.integers(1, 4)
).flatmap(
    lambda t: st.tuples(
        st.just(t[0] + 1),
        arrays(np.int64, t[1:], elements=st.integers(0, t[0])),
    )
)


@given(label_volumes)
@settings(max_examples=60, deadline=None)
def test_argmax_inverts_one_hot(case):
    num_classes, vox = case
    lab = LabelMap(vox, num_classes)
    assert argmax_labels(one_hot(lab)) == lab


@given(
    arrays(np.float64, (2, 2, 2, 4), elements=st.floats(-50, 50)),
    st.floats(-100, 100),
)
@settings(max_examples=60, deadline=None)
def test_softmax_normalized_and_shift_invariant(z, shift):
    p = softmax(LogitMap(z)).values
    assert np.max(np.abs(p.sum(axis=-1) - 1.0)) <= 1e-12
    q = softmax(LogitMap(z + shift)).values
    assert np.max(np.abs(p - q)) <= 1e-12
