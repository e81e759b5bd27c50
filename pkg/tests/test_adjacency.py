import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adjprior import (
    AdjCounts,
    BinaryAdj,
    LabelMap,
    PriorAdj,
    ProbMap,
    aggregate_prior,
    binarize,
    hard_adjacency,
    nonadj_loss,
    nonadj_loss_grad,
    one_hot,
    soft_adjacency,
    violation_report,
)
from adjprior.adjacency import _soft_counts_raw, nonadj_loss_array, pair_count
from adjprior.gradcheck import check_gradient
from adjprior.validation import ValidationError
from conftest import random_labelmap, random_probs
from oracles import brute_hard_adjacency, brute_pair_count


def symmetric_zero_diag(m):
    return np.array_equal(m, m.T) and np.all(np.diag(m) == 0)


def test_single_pair():
    lab = LabelMap(np.array([1, 2]).reshape(1, 1, 2), 3)
    m = hard_adjacency(lab).matrix
    expected = np.zeros((3, 3))
    expected[1, 2] = expected[2, 1] = 1
    assert np.array_equal(m, expected)


def test_uniform_volume_has_no_contacts():
    lab = LabelMap(np.full((4, 3, 5), 2), 4)
    assert not hard_adjacency(lab).matrix.any()


def test_checkerboard_2x2():
    # four axis pairs in a 2x2x1 grid, each crossing a 1|2 boundary
    lab = LabelMap(np.array([[1, 2], [2, 1]]).reshape(2, 2, 1), 3)
    m = hard_adjacency(lab).matrix
    assert m[1, 2] == m[2, 1] == 4
    assert m.sum() == 8


@pytest.mark.parametrize("seed", range(10))
def test_hard_adjacency_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    shape = tuple(rng.integers(1, 9, size=3))
    c = int(rng.integers(2, 6))
    lab = random_labelmap(rng, shape, c)
    assert hard_adjacency(lab).matrix.astype(int).tolist() == brute_hard_adjacency(lab.voxels, c)


def test_pair_count_matches_enumeration():
    for shape in [(1, 1, 1), (1, 1, 2), (2, 3, 4), (5, 1, 3)]:
        assert pair_count(shape) == brute_pair_count(shape)


def test_binarize():
    a = AdjCounts(np.array([[0, 4, 0], [4, 0, 0], [0, 0, 0]]))
    b = binarize(a).matrix
    assert b[0, 1] == 1 and b[0, 2] == 0
    assert symmetric_zero_diag(b)


def test_aggregate_prior_frequencies():
    linked = BinaryAdj(np.array([[0, 1], [1, 0]]))
    unlinked = BinaryAdj(np.zeros((2, 2)))
    assert aggregate_prior([linked, unlinked]).matrix[0, 1] == 0.5
    assert aggregate_prior([linked] * 3).matrix[0, 1] == 1.0
    assert aggregate_prior([unlinked] * 3).matrix[0, 1] == 0.0
    assert aggregate_prior([linked, unlinked]).num_subjects == 2


def test_aggregate_prior_errors():
    with pytest.raises(ValidationError, match="no subjects"):
        aggregate_prior([])
    with pytest.raises(ValidationError):
        aggregate_prior([BinaryAdj(np.zeros((2, 2))), BinaryAdj(np.zeros((3, 3)))])


def test_aggregate_prior_order_independent(rng):
    mats = [binarize(hard_adjacency(random_labelmap(rng, (5, 5, 5), 6))) for _ in range(7)]
    a = aggregate_prior(mats).matrix
    b = aggregate_prior(mats[::-1]).matrix
    assert np.max(np.abs(a - b)) <= 1e-12


def test_matrix_types_validate():
    with pytest.raises(ValidationError):
        AdjCounts(np.array([[0, 1], [2, 0]]))
    with pytest.raises(ValidationError):
        BinaryAdj(np.array([[1, 0], [0, 0]]))
    with pytest.raises(ValidationError):
        PriorAdj(np.array([[0, 1.5], [1.5, 0]]))


def test_soft_adjacency_half_half():
    p = ProbMap(np.full((1, 1, 2, 2), 0.5))
    s = soft_adjacency(p).matrix
    assert s[0, 1] == s[1, 0] == 0.5
    assert s[0, 0] == s[1, 1] == 0


@pytest.mark.parametrize("seed", range(10))
def test_soft_on_one_hot_equals_hard_over_pairs(seed):
    rng = np.random.default_rng(100 + seed)
    shape = tuple(rng.integers(1, 10, size=3))
    lab = random_labelmap(rng, shape, int(rng.integers(2, 6)))
    soft = soft_adjacency(one_hot(lab)).matrix
    hard = hard_adjacency(lab).matrix
    z = pair_count(shape)
    if z:
        assert np.array_equal(soft, hard / z)
        # x / z * z can be off by an ulp, so compare as integers after rescaling
        assert np.array_equal(np.rint(soft * z), hard)


def test_soft_adjacency_symmetric(rng):
    s = soft_adjacency(ProbMap(random_probs(rng, (4, 5, 3), 4))).matrix
    assert symmetric_zero_diag(s)


def test_soft_adjacency_multilinear_in_one_entry(rng):
    values = random_probs(rng, (3, 4, 3), 4)
    at = (1, 2, 1, 2)

    def counts(t):
        v = values.copy()
        v[at] *= t
        return _soft_counts_raw(v)

    s0, s1 = counts(0.0), counts(1.0)
    for t in (0.25, 0.5, 2.0):
        assert np.allclose(counts(t), s0 + t * (s1 - s0), rtol=0, atol=1e-12)
    # entries not involving class 2 do not move
    delta = s1 - s0
    mask = np.ones_like(delta, dtype=bool)
    mask[2, :] = mask[:, 2] = False
    assert not delta[mask].any()


def forbid(c, pairs):
    a = np.ones((c, c))
    np.fill_diagonal(a, 0)
    for b, d in pairs:
        a[b, d] = a[d, b] = 0
    return PriorAdj(a)


def test_nonadj_loss_single_forbidden_pair():
    v = np.array([[0, 1, 0], [0, 0.5, 0.5]], dtype=float).reshape(1, 1, 2, 3)
    p = ProbMap(v)
    assert soft_adjacency(p).matrix[1, 2] == 0.5
    assert nonadj_loss(p, forbid(3, [(1, 2)])) == pytest.approx(0.5, abs=1e-15)


def test_nonadj_loss_zero_when_contacts_allowed(rng):
    lab = random_labelmap(rng, (6, 6, 6), 4)
    A = aggregate_prior([binarize(hard_adjacency(lab))])
    assert nonadj_loss(one_hot(lab), A) == 0.0
    everything = forbid(4, [])
    assert nonadj_loss(one_hot(lab), everything) == 0.0


def test_nonadj_loss_class_mismatch():
    p = ProbMap(np.full((2, 2, 2, 3), 1 / 3))
    with pytest.raises(ValidationError):
        nonadj_loss(p, forbid(4, []))
    with pytest.raises(ValidationError):
        nonadj_loss_grad(p, forbid(4, []))


def test_nonadj_grad_zero_for_permissive_prior(rng):
    p = ProbMap(random_probs(rng, (4, 4, 4), 4))
    assert not nonadj_loss_grad(p, forbid(4, [])).any()


def test_nonadj_grad_zero_without_forbidden_neighbour_mass():
    # class 1 and 3 are forbidden; voxel (0,0,0) has only class-0 neighbours
    vox = np.zeros((3, 3, 3), dtype=int)
    vox[2, 2, 2] = 3
    p = one_hot(LabelMap(vox, 4))
    g = nonadj_loss_grad(p, forbid(4, [(1, 3)]))
    assert not g[0, 0, 0].any()
    # next to the class-3 voxel the class-1 entry is pushed up
    assert g[2, 2, 1, 1] > 0


def test_penalty_weights_modes():
    A = PriorAdj(np.array([[0, 0.25, 0], [0.25, 0, 1], [0, 1, 0]]))
    assert np.array_equal(A.penalty_weights(), [[0, 0, 1], [0, 0, 0], [1, 0, 0]])
    assert np.array_equal(A.penalty_weights("complement"), [[0, 0.75, 1], [0.75, 0, 0], [1, 0, 0]])
    with pytest.raises(ValidationError):
        A.penalty_weights("inverse")


def test_rare_contact_free_under_support_only():
    # one of four subjects shows the (1, 2) contact
    v = np.array([[0, 1, 0], [0, 0, 1]], dtype=float).reshape(1, 1, 2, 3)
    A = PriorAdj(np.array([[0, 1, 1], [1, 0, 0.25], [1, 0.25, 0]]), num_subjects=4)
    assert nonadj_loss(ProbMap(v), A) == 0.0
    assert nonadj_loss(ProbMap(v), A, "complement") == pytest.approx(0.75, abs=1e-15)


@pytest.mark.parametrize("weighting", ["support", "complement"])
@pytest.mark.parametrize("seed", range(5))
def test_nonadj_grad_matches_central_differences(seed, weighting):
    rng = np.random.default_rng(seed)
    upper = np.triu(rng.choice([0.0, 0.3, 1.0], size=(4, 4)), 1)
    A = PriorAdj(upper + upper.T)
    values = random_probs(rng, (4, 4, 4), 4)
    grad = nonadj_loss_grad(ProbMap(values), A, weighting)
    w = A.penalty_weights(weighting)
    err = check_gradient(lambda x: nonadj_loss_array(x, w), grad, values, rng, max_entries=10**6)
    assert err < 1e-5


def test_violation_report_lists_forbidden_contact():
    vox = np.zeros((4, 4, 4), dtype=int)
    vox[:2, :, :] = 1
    vox[2:3, :3, :] = 2
    A = forbid(3, [(1, 2)])
    report = violation_report(LabelMap(vox, 3), A, 0.0)
    # a 3x4 face of label 2 sits against label 1
    assert report == [(1, 2, 12)]


def test_violation_report_clean_and_threshold(rng):
    lab = random_labelmap(rng, (5, 5, 5), 3)
    A = aggregate_prior([binarize(hard_adjacency(lab))])
    assert violation_report(lab, A, 0.0) == []
    everything = violation_report(lab, A, 1.0)
    counts = hard_adjacency(lab).matrix
    assert {(b, c) for b, c, _ in everything} == {
        (b, c) for b in range(3) for c in range(b + 1, 3) if counts[b, c] > 0
    }
    assert [n for *_, n in everything] == sorted((n for *_, n in everything), reverse=True)


@pytest.mark.parametrize("bad", [-0.1, 1.1])
def test_violation_threshold_range(bad):
    lab = LabelMap(np.zeros((2, 2, 2), dtype=int), 2)
    with pytest.raises(ValidationError):
        violation_report(lab, forbid(2, []), bad)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_nonadj_loss_nonnegative(seed):
    rng = np.random.default_rng(seed)
    c = int(rng.integers(2, 6))
    prior = np.triu(rng.random((c, c)), 1)
    A = PriorAdj(prior + prior.T)
    p = ProbMap(random_probs(rng, tuple(rng.integers(1, 5, size=3)), c))
    assert nonadj_loss(p, A) >= 0.0
    assert symmetric_zero_diag(soft_adjacency(p).matrix)
