import numpy as np
import pytest

from danlpe.data import LabeledDataset, generate_synthetic, make_synthetic_spec, split_validation
from danlpe.training import (
    EarlyStopping,
    HyperParams,
    dan_lpe,
    dann_baseline,
    dnn_baseline,
    early_stop_monitor,
    profile,
    step1_train,
    step2_train,
)


@pytest.fixture(scope="module")
def task():
    spec = make_synthetic_spec(L=2, d=6, n_source=400, n_target=400, separation=3.0, seed=2)
    src, tgt = generate_synthetic(spec)
    train, val = split_validation(src, 0.1, seed=0)
    return train, val, tgt


FAST = HyperParams(T=120, T0=40, k=5, m=5, B=16, lr=1e-3, lambda_D=0.5, dropout=0.2,
                   feature_dims=(8,), class_dims=(8,), domain_dims=(8,), eval_every=20)


def same_params(a, b):
    return all(u.tobytes() == v.tobytes() for u, v in zip(a.arrays(), b.arrays()))


def test_early_stop_examples():
    assert early_stop_monitor([1.0, 0.9, 0.95, 0.96, 0.97], patience=2) == (3, 1)
    assert early_stop_monitor([0.5, 0.5, 0.5], patience=1) == (1, 0)
    assert early_stop_monitor([3.0, 2.0, 1.0], patience=1) == (None, 2)
    with pytest.raises(ValueError):
        early_stop_monitor([1.0], patience=0)


def test_early_stopping_min_delta():
    mon = EarlyStopping(2, min_delta=0.1)
    assert not mon.update(1.0)
    assert not mon.update(0.95)
    assert mon.update(0.92)
    assert mon.best_index == 0


def test_hyperparam_validation():
    with pytest.raises(ValueError):
        HyperParams(B=15)
    with pytest.raises(ValueError):
        HyperParams(T=10, T0=10)
    with pytest.raises(ValueError):
        HyperParams(dropout=1.0)
    assert profile("coding-like").feature_dims == (128,)


def test_gamma_stays_uniform_without_updates(task):
    train, val, tgt = task
    hp = HyperParams(**{**FAST.__dict__, "lambda_D": 0.0, "T0": 0, "k": 1000})
    rep = step1_train(train, val, tgt, hp)
    assert np.array_equal(rep.gamma_final.probs, [0.5, 0.5])
    assert len(rep.gamma_trajectory) == 1


def test_frozen_gamma_at_prior_reproduces_dann(task):
    train, val, tgt = task
    prior = np.bincount(train.labels, minlength=2) / len(train)
    dann = dann_baseline(train, val, tgt, FAST)
    s2 = step2_train(train, val, tgt, prior, FAST)
    assert same_params(dann.checkpoint, s2.checkpoint)
    assert np.array_equal(dann.loss_curves["J_D"], s2.loss_curves["J_D"])


def test_runs_are_deterministic(task):
    train, val, tgt = task
    a = dan_lpe(train, val, tgt, FAST)
    b = dan_lpe(train, val, tgt, FAST)
    assert np.array_equal(a.gamma.probs, b.gamma.probs)
    assert same_params(a.step2.checkpoint, b.step2.checkpoint)
    assert [g.tolist() for _, g, _ in a.step1.gamma_trajectory] == \
        [g.tolist() for _, g, _ in b.step1.gamma_trajectory]


def test_gamma_schedule(task):
    train, val, tgt = task
    rep = step1_train(train, val, tgt, FAST)
    iters = [t for t, _, _ in rep.gamma_trajectory[1:]]
    assert iters == list(range(45, 121, 5))
    assert all(g.probs.min() >= 0.001 for _, g, _ in rep.gamma_trajectory)
    assert rep.stopped_iteration == 120
    assert len(rep.loss_curves["J_C"]) == 120
    assert list(rep.loss_curves["val_iteration"]) == [20, 40, 60, 80, 100, 120]


def test_gamma_moves_toward_target_prior():
    spec = make_synthetic_spec(L=2, d=6, n_source=1000, n_target=1000, separation=4.0, seed=5)
    src, tgt = generate_synthetic(spec)
    hp = HyperParams(**{**FAST.__dict__, "T": 400, "T0": 100})
    rep = step1_train(src, None, tgt, hp)
    assert rep.gamma_final.probs[0] > 0.8


def test_invalid_gamma(task):
    train, val, tgt = task
    with pytest.raises(ValueError):
        step2_train(train, val, tgt, [0.9995, 0.0005], FAST)
    with pytest.raises(ValueError):
        step2_train(train, val, tgt, [0.2, 0.3, 0.5], FAST)


def test_missing_class_is_rejected(task):
    train, val, tgt = task
    only0 = train.subset(np.flatnonzero(train.labels == 0))
    with pytest.raises(ValueError, match="class 1 missing"):
        dann_baseline(only0, None, tgt, FAST)


def test_early_stopping_stops_training(task):
    train, val, tgt = task
    hp = HyperParams(**{**FAST.__dict__, "T": 2000, "patience": 1, "min_delta": 10.0})
    rep = dnn_baseline(train, val, hp)
    # first evaluation sets the best, the second cannot improve by 10
    assert rep.stopped_iteration == 40
    assert rep.best_iteration == 20


def test_step2_continue_needs_params(task):
    train, val, tgt = task
    hp = HyperParams(**{**FAST.__dict__, "step2_reinit": False})
    with pytest.raises(ValueError):
        step2_train(train, val, tgt, [0.5, 0.5], hp)


def test_dnn_ignores_target_and_lambda(task):
    train, val, _ = task
    a = dnn_baseline(train, val, FAST)
    b = dnn_baseline(train, val, HyperParams(**{**FAST.__dict__, "lambda_D": 3.0}))
    assert same_params(a.checkpoint, b.checkpoint)
    assert np.all(a.loss_curves["J_D"] == 0)
