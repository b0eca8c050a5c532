import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from danlpe.distributions import (
    JointConfusion,
    RowConditional,
    SimplexVector,
    empirical_prior,
    estimate_joint_confusion,
    prediction_histogram,
    row_normalize,
)


def brute_force_joint(labels, preds, L):
    cells = [[0.0] * L for _ in range(L)]
    for y, p in zip(labels, preds):
        cells[y][p] += 1
    n = len(labels)
    return [[c / n for c in row] for row in cells]


def test_joint_confusion_small_example():
    labels, preds = [0, 0, 1, 1], [0, 1, 1, 1]
    joint = estimate_joint_confusion(labels, preds, 2)
    assert np.allclose(joint.cells, brute_force_joint(labels, preds, 2))
    assert np.allclose(joint.cells, [[0.25, 0.25], [0.0, 0.5]])
    assert joint.count == 4


def test_joint_confusion_perfect_and_single():
    assert np.array_equal(estimate_joint_confusion([0, 1], [0, 1], 2).cells, [[0.5, 0], [0, 0.5]])
    assert np.array_equal(estimate_joint_confusion([0], [1], 2).cells, [[0, 1], [0, 0]])


@pytest.mark.parametrize("labels,preds", [([], []), ([0, 2], [0, 1]), ([0, 1], [0, -1])])
def test_joint_confusion_errors(labels, preds):
    with pytest.raises(ValueError):
        estimate_joint_confusion(labels, preds, 2)


def test_joint_confusion_empty_message():
    with pytest.raises(ValueError, match="empty sample set"):
        estimate_joint_confusion([], [], 3)


def test_row_normalize():
    joint = JointConfusion(np.array([[0.25, 0.25], [0.0, 0.5]]), 4)
    assert np.allclose(row_normalize(joint).rows, [[0.5, 0.5], [0.0, 1.0]])
    diag = estimate_joint_confusion([0, 1, 2, 2], [0, 1, 2, 2], 3)
    assert np.array_equal(row_normalize(diag).rows, np.eye(3))


def test_row_normalize_absent_class():
    joint = estimate_joint_confusion([0, 0, 2], [0, 1, 2], 3)
    with pytest.raises(ValueError, match="class 1 absent from sample"):
        row_normalize(joint)


def test_prediction_histogram():
    assert np.allclose(prediction_histogram([0, 0, 1, 1], 2).probs, [0.5, 0.5])
    assert np.allclose(prediction_histogram([1, 1, 1], 2).probs, [0, 1])
    assert np.allclose(prediction_histogram([0, 1, 1, 2, 2, 2], 3).probs, [1 / 6, 2 / 6, 3 / 6])
    with pytest.raises(ValueError):
        prediction_histogram([], 2)


def test_empirical_prior():
    assert np.allclose(empirical_prior([0, 0, 0, 1], 2).probs, [0.75, 0.25])
    assert np.allclose(empirical_prior([0, 1, 2], 3).probs, [1 / 3] * 3)
    assert np.array_equal(empirical_prior([2, 2], 3).probs, [0, 0, 1])
    with pytest.raises(ValueError):
        empirical_prior([], 2)


def test_simplex_vector_tolerances():
    v = SimplexVector([0.5, 0.5 + 5e-7])
    assert abs(v.probs.sum() - 1) < 1e-12
    with pytest.raises(ValueError):
        SimplexVector([0.5, 0.6])
    with pytest.raises(ValueError):
        SimplexVector([1.1, -0.1])
    exact = SimplexVector([0.001, 0.999])
    assert exact.probs[0] == 0.001


def test_row_conditional_validation():
    with pytest.raises(ValueError):
        RowConditional(np.array([[0.5, 0.4], [0, 1]]))


class_pairs = st.integers(2, 6).flatmap(
    lambda L: st.tuples(
        st.just(L),
        st.lists(st.tuples(st.integers(0, L - 1), st.integers(0, L - 1)), min_size=1, max_size=60),
    )
)


@settings(max_examples=100, deadline=None)
@given(class_pairs)
def test_histogram_is_column_sum_of_joint(data):
    L, pairs = data
    labels = [a for a, _ in pairs]
    preds = [b for _, b in pairs]
    joint = estimate_joint_confusion(labels, preds, L)
    assert abs(joint.cells.sum() - 1) < 1e-9
    assert np.allclose(prediction_histogram(preds, L).probs, joint.cells.sum(axis=0), atol=1e-12)
    assert np.allclose(joint.cells, brute_force_joint(labels, preds, L), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 8), st.integers(1, 50), st.integers(0, 2**32 - 1))
def test_perfect_classifier_gives_identity(L, reps, seed):
    labels = np.random.default_rng(seed).permutation(np.repeat(np.arange(L), reps))
    rows = row_normalize(estimate_joint_confusion(labels, labels, L)).rows
    assert np.array_equal(rows, np.eye(L))


def max_cell_error(joint_true, n, rng):
    L = joint_true.shape[0]
    flat = rng.choice(L * L, size=n, p=joint_true.ravel())
    est = estimate_joint_confusion(flat // L, flat % L, L)
    return np.abs(est.cells - joint_true).max()


def test_consistency_error_shrinks_with_sample_size():
    joint_true = np.array([[0.3, 0.1], [0.05, 0.55]])
    rng = np.random.default_rng(7)
    small = np.median([max_cell_error(joint_true, 100, rng) for _ in range(40)])
    large = np.median([max_cell_error(joint_true, 10_000, rng) for _ in range(40)])
    assert small >= 5 * large
