"""Training loops: DNN, DANN and the two-step DAN-LPE procedure.

Step 1 trains a domain-adversarial network while periodically re-estimating
the target label proportions ``gamma`` from the current classifier's
predictions; the domain loss reweights source samples by ``gamma / prior``.
Step 2 retrains with ``gamma`` frozen at its step-1 value.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field, replace

import numpy as np

from .data import LabeledDataset, UnlabeledDataset
from .distributions import (
    SimplexVector,
    empirical_prior,
    estimate_joint_confusion,
    prediction_histogram,
    row_normalize,
)
from .lpe import FLOOR, LpeConfig, LpeState, run_lpe_updates
from .network import (
    NetworkParameters,
    OptimizerState,
    backward_with_reversal,
    class_loss,
    domain_loss_reweighted,
    forward,
    init_network,
    inverse_frequency_weights,
    optimizer_step,
    predict,
)


@dataclass(frozen=True)
class HyperParams:
    lambda_D: float = 0.05
    lambda_L: float = 0.01
    T: int = 8000
    T0: int = 2000
    k: int = 5
    m: int = 5
    B: int = 64
    lr: float = 1e-4
    dropout: float = 0.6
    seed: int = 0
    feature_dims: tuple[int, ...] = (32,)
    class_dims: tuple[int, ...] = (32,)
    domain_dims: tuple[int, ...] = (32,)
    eval_every: int = 100
    patience: int | None = None
    min_delta: float = 1e-4
    class_weighting: bool = False
    step2_reinit: bool = True

    def __post_init__(self):
        if self.lambda_D < 0:
            raise ValueError("lambda_D must be non-negative")
        if not self.lambda_L > 0:
            raise ValueError("lambda_L must be positive")
        if self.T < 1 or self.k < 1 or self.m < 1 or self.eval_every < 1:
            raise ValueError("T, k, m and eval_every must be positive")
        if not 0 <= self.T0 < self.T:
            raise ValueError("need 0 <= T0 < T")
        if self.B < 2 or self.B % 2:
            raise ValueError("batch size B must be even and positive")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be positive")

    @property
    def lpe_config(self) -> LpeConfig:
        return LpeConfig(self.lambda_L, self.m, FLOOR)


# Experiment profiles: hidden width and dropout of the two reported setups.
PROFILES = {
    "yelp-like": dict(feature_dims=(32,), class_dims=(32,), domain_dims=(32,), dropout=0.6),
    "coding-like": dict(feature_dims=(128,), class_dims=(128,), domain_dims=(128,), dropout=0.4,
                        class_weighting=True),
}


def profile(name: str, **overrides) -> HyperParams:
    return HyperParams(**{**PROFILES[name], **overrides})


@dataclass
class TrainReport:
    """Outcome of one training run.

    ``checkpoint`` holds the weights at the iteration training stopped (the
    early-stopping trigger, or ``T``); ``best_params`` those with the lowest
    source validation loss.
    """

    gamma_final: SimplexVector
    checkpoint: NetworkParameters
    best_params: NetworkParameters
    loss_curves: dict[str, np.ndarray]
    gamma_trajectory: list[tuple[int, SimplexVector, float]] = field(default_factory=list)
    best_iteration: int = 0
    stopped_iteration: int = 0
    method: str = ""


class EarlyStopping:
    """Tracks validation losses; signals a stop after ``patience`` evaluations
    without an improvement of at least ``min_delta``."""

    def __init__(self, patience: int | None, min_delta: float = 1e-4):
        self.patience = patience
        self.min_delta = min_delta
        self.best = math.inf
        self.best_index = -1
        self.wait = 0
        self.count = 0

    def update(self, loss: float) -> bool:
        idx = self.count
        self.count += 1
        if loss <= self.best - self.min_delta or self.best_index < 0:
            self.best = loss
            self.best_index = idx
            self.wait = 0
            return False
        self.wait += 1
        return self.patience is not None and self.wait >= self.patience


def early_stop_monitor(validation_losses, patience: int, min_delta: float = 1e-4):
    """Replay ``validation_losses``; return ``(stop_index or None, best_index)``."""
    if patience < 1:
        raise ValueError("patience must be positive")
    mon = EarlyStopping(patience, min_delta)
    for i, loss in enumerate(validation_losses):
        if mon.update(loss):
            return i, mon.best_index
    return None, mon.best_index


def _check_inputs(train: LabeledDataset, target: UnlabeledDataset | None):
    if len(train) == 0:
        raise ValueError("empty source training set")
    counts = np.bincount(train.labels, minlength=train.L)
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        raise ValueError(f"class {int(missing[0])} missing from the source training split")
    if target is not None:
        if len(target) == 0:
            raise ValueError("empty target set")
        if target.d != train.d:
            raise ValueError("source and target feature widths differ")


def _validate_gamma(gamma, L: int) -> SimplexVector:
    g = gamma if isinstance(gamma, SimplexVector) else SimplexVector(gamma)
    if g.L != L:
        raise ValueError("gamma has the wrong number of classes")
    if g.probs.min() < FLOOR:
        raise ValueError(f"gamma entry {g.probs.min():.3g} below the floor {FLOOR}")
    return g


def _adversarial_run(train, val, target, hp: HyperParams, gamma: SimplexVector,
                     update_gamma: bool, domain: bool, method: str,
                     init_params: NetworkParameters | None = None,
                     log: Callable[[dict], None] | None = None) -> TrainReport:
    _check_inputs(train, target if domain else None)
    L = train.L
    rng = np.random.default_rng(hp.seed)
    params = init_network(train.d, L, hp.feature_dims, hp.class_dims, hp.domain_dims,
                          hp.dropout, rng)
    if init_params is not None:
        params = init_params.copy()
    opt = OptimizerState.for_params(params, hp.lr)
    alpha_tilde = empirical_prior(train.labels, L)
    cw = inverse_frequency_weights(train.labels, L) if hp.class_weighting else None
    lpe_state = LpeState(gamma)
    cfg = hp.lpe_config

    Xs, ys = train.features, train.labels
    Xt = target.features if domain else None
    half = hp.B // 2 if domain else hp.B
    jc_curve = np.zeros(hp.T)
    jd_curve = np.zeros(hp.T)
    val_iters, val_losses = [], []
    trajectory = [(0, lpe_state.gamma, float("nan"))]
    stopper = EarlyStopping(hp.patience, hp.min_delta)
    best_params, best_iter = params, 0
    grad_domain_zero = None
    t = 0
    for t in range(1, hp.T + 1):
        si = rng.integers(0, len(Xs), half)
        if domain:
            ti = rng.integers(0, len(Xt), half)
            x = np.concatenate([Xs[si], Xt[ti]])
        else:
            x = Xs[si]
        _, cl, dl, cache = forward(params, x, "train", rng)
        jc, g_src = class_loss(cl[:half], ys[si], cw, return_grad=True)
        g_cl = np.zeros_like(cl)
        g_cl[:half] = g_src
        if domain:
            jd, gp, gq = domain_loss_reweighted(dl[:half], ys[si], dl[half:], lpe_state.gamma,
                                                alpha_tilde, return_grad=True)
            g_dl = np.concatenate([gp, gq])
            lam = hp.lambda_D
        else:
            jd = 0.0
            if grad_domain_zero is None or grad_domain_zero.shape != dl.shape:
                grad_domain_zero = np.zeros_like(dl)
            g_dl = grad_domain_zero
            lam = 0.0
        if not (math.isfinite(jc) and math.isfinite(jd)):
            raise FloatingPointError(f"diverged: non-finite loss at iteration {t}")
        grads = backward_with_reversal(cache, params, g_cl, g_dl, lam)
        params, opt = optimizer_step(params, grads, opt)
        jc_curve[t - 1] = jc
        jd_curve[t - 1] = jd

        if update_gamma and t > hp.T0 and t % hp.k == 0:
            p_cond = row_normalize(estimate_joint_confusion(ys, predict(params, Xs), L))
            q_hat = prediction_histogram(predict(params, Xt), L)
            lpe_state = run_lpe_updates(lpe_state, cfg, p_cond, q_hat)
            trajectory.append((t, lpe_state.gamma, lpe_state.last_loss))
            if log:
                log({"event": "gamma", "iteration": t, "J_gamma": lpe_state.last_loss,
                     "gamma": lpe_state.gamma.tolist()})

        if val is not None and len(val) and (t % hp.eval_every == 0 or t == hp.T):
            vloss = class_loss(forward(params, val.features)[1], val.labels, cw)
            val_iters.append(t)
            val_losses.append(vloss)
            stop = stopper.update(vloss)
            if stopper.best_index == len(val_losses) - 1:
                best_params, best_iter = params, t
            if log:
                log({"event": "eval", "iteration": t, "J_C": float(jc), "J_D": float(jd),
                     "val_loss": float(vloss), "gamma": lpe_state.gamma.tolist()})
            if stop:
                break
    if val is None or not len(val):
        best_params, best_iter = params, t
    curves = {
        "J_C": jc_curve[:t],
        "J_D": jd_curve[:t],
        "val_iteration": np.array(val_iters, dtype=np.int64),
        "val_loss": np.array(val_losses),
    }
    return TrainReport(lpe_state.gamma, params, best_params, curves, trajectory,
                       best_iter, t, method)


def step1_train(train: LabeledDataset, val: LabeledDataset | None, target: UnlabeledDataset,
                hp: HyperParams, gamma_init=None, log=None) -> TrainReport:
    """Adversarial training with periodic label-proportion updates.

    ``gamma`` starts uniform unless ``gamma_init`` is given; after ``hp.T0``
    iterations it receives ``hp.m`` projected-gradient steps every ``hp.k``
    iterations.
    """
    gamma = SimplexVector.uniform(train.L) if gamma_init is None else _validate_gamma(gamma_init, train.L)
    return _adversarial_run(train, val, target, hp, gamma, True, True, "dan_lpe_step1", log=log)


def step2_train(train: LabeledDataset, val: LabeledDataset | None, target: UnlabeledDataset,
                gamma_fixed, hp: HyperParams, init_params: NetworkParameters | None = None,
                log=None) -> TrainReport:
    """Adversarial training with the reweighted domain loss and ``gamma`` frozen.

    Parameters are freshly initialised from ``hp.seed``; with
    ``hp.step2_reinit=False`` training continues from ``init_params`` instead.
    """
    gamma = _validate_gamma(gamma_fixed, train.L)
    start = None
    if not hp.step2_reinit:
        if init_params is None:
            raise ValueError("step2_reinit=False needs the step-1 parameters")
        start = init_params
    return _adversarial_run(train, val, target, hp, gamma, False, True, "dan_lpe",
                            init_params=start, log=log)


def dann_baseline(train: LabeledDataset, val: LabeledDataset | None, target: UnlabeledDataset,
                  hp: HyperParams, log=None) -> TrainReport:
    """Plain DANN: ``gamma`` frozen at the source training prior, so every
    domain-loss weight is 1."""
    alpha_tilde = empirical_prior(train.labels, train.L)
    return _adversarial_run(train, val, target, hp, alpha_tilde, False, True, "dann", log=log)


def dnn_baseline(train: LabeledDataset, val: LabeledDataset | None, hp: HyperParams,
                 log=None) -> TrainReport:
    """Feature extractor plus label classifier only; ``lambda_D`` is ignored."""
    alpha_tilde = empirical_prior(train.labels, train.L)
    return _adversarial_run(train, val, None, hp, alpha_tilde, False, False, "dnn", log=log)


@dataclass
class DanLpeResult:
    step1: TrainReport
    step2: TrainReport

    @property
    def gamma(self) -> SimplexVector:
        return self.step1.gamma_final


def dan_lpe(train, val, target, hp: HyperParams, log=None) -> DanLpeResult:
    """Both steps: estimate ``gamma`` while training, then retrain with it frozen."""
    s1 = step1_train(train, val, target, hp, log=log)
    s2 = step2_train(train, val, target, s1.gamma_final, hp, init_params=s1.checkpoint, log=log)
    return DanLpeResult(s1, s2)


def lpe_diagnostics(params: NetworkParameters, train: LabeledDataset, target: UnlabeledDataset):
    """Confusion rows, target prediction histogram and joint confusion for ``params``."""
    L = train.L
    joint = estimate_joint_confusion(train.labels, predict(params, train.features), L)
    q_hat = prediction_histogram(predict(params, target.features), L)
    return joint, row_normalize(joint), q_hat


def with_seed(hp: HyperParams, seed: int) -> HyperParams:
    return replace(hp, seed=seed)

