"""
Estimating target label proportions from a confusion matrix
============================================================

A classifier trained on the source domain has confusion rows
p(yhat = j | y = i).  Under label shift those rows carry over to the target,
so the target prediction histogram is a mixture of them weighted by the
unknown target proportions.  Projected gradient descent on the squared
mismatch recovers the weights.
"""

import numpy as np

from danlpe import (
    LpeConfig,
    RowConditional,
    bbse_estimate,
    estimate_joint_confusion,
    estimate_proportions,
    prediction_histogram,
    row_normalize,
    smoothness_step,
    solve_exact,
)

rng = np.random.default_rng(0)

# a three-class classifier that confuses classes 1 and 2 fairly often
rows = np.array([[0.85, 0.10, 0.05],
                 [0.05, 0.70, 0.25],
                 [0.05, 0.20, 0.75]])

# source split with a balanced prior; sample (label, prediction) pairs
source_labels = rng.choice(3, size=5000, p=[1 / 3, 1 / 3, 1 / 3])
source_preds = np.array([rng.choice(3, p=rows[y]) for y in source_labels])
joint = estimate_joint_confusion(source_labels, source_preds, 3)
p_cond = row_normalize(joint)
print("estimated confusion rows:\n", np.round(p_cond.rows, 3))

# the target prior is heavily skewed; only predictions are observed there
beta = np.array([0.6, 0.3, 0.1])
target_labels = rng.choice(3, size=5000, p=beta)
target_preds = np.array([rng.choice(3, p=rows[y]) for y in target_labels])
q_hat = prediction_histogram(target_preds, 3)
print("target prediction histogram:", np.round(q_hat.probs, 3))

# LPE: start uniform, take projected gradient steps until gamma stops moving
state = estimate_proportions(p_cond, q_hat, LpeConfig(lambda_L=0.1, m=5), tol=1e-10)
print("LPE estimate:", np.round(state.gamma.probs, 3), f"after {state.step_count} steps")

# a curvature-matched step gets there much faster
fast = estimate_proportions(p_cond, q_hat, LpeConfig(smoothness_step(p_cond), 5), tol=1e-10)
print("with 1/M step:", np.round(fast.gamma.probs, 3), f"after {fast.step_count} steps")

# the unconstrained solution and BBSE agree when the solution is interior
print("direct solve:", np.round(solve_exact(p_cond, q_hat), 3))
source_prior = joint.cells.sum(axis=1)
print("BBSE:", np.round(bbse_estimate(joint, q_hat, source_prior).beta_hat.probs, 3))
print("truth:", beta)

# when the target lacks a class, the direct solve can go negative while LPE
# stays on the simplex, pinned at the floor
q_edge = RowConditional(rows).rows.T @ np.array([0.9, 0.1, 0.0]) + [0.0, 0.02, -0.02]
state = estimate_proportions(RowConditional(rows), q_edge, LpeConfig(0.1, 5), tol=1e-10)
print("edge case direct solve:", np.round(solve_exact(RowConditional(rows), q_edge), 3))
print("edge case LPE:", np.round(state.gamma.probs, 4))
