"""
DAN-LPE versus DANN on a synthetic label-shift task
===================================================

Two Gaussian classes in ten dimensions.  The source domain is balanced, the
target is 90/10.  DANN aligns the feature distributions of both domains as
they are, which under label shift drags target features of the majority
class towards the minority class.  DAN-LPE reweights source samples by the
estimated target proportions before aligning.

Takes about ten seconds.
"""

import numpy as np

from danlpe import (
    HyperParams,
    bbse_estimate,
    dan_lpe,
    dann_baseline,
    empirical_prior,
    generate_synthetic,
    make_synthetic_spec,
    split_validation,
)
from danlpe.network import predict
from danlpe.training import lpe_diagnostics

seed = 3
spec = make_synthetic_spec(L=2, d=10, alpha=(0.5, 0.5), beta=(0.9, 0.1),
                           n_source=4000, n_target=4000, separation=3.0, seed=seed)
source, target = generate_synthetic(spec)
train, val = split_validation(source, 0.1, seed)

hp = HyperParams(T=4000, T0=1000, lambda_D=1.0, lr=1e-3, seed=seed)

# step 1 estimates gamma while training, step 2 retrains with it frozen
result = dan_lpe(train, val, target, hp)
dann = dann_baseline(train, val, target, hp)

print("gamma trajectory (iteration, gamma):")
for it, gamma, _ in result.step1.gamma_trajectory[::150]:
    print(f"  {it:5d}  {np.round(gamma.probs, 3)}")
print("final gamma:", np.round(result.gamma.probs, 4), " truth:", spec.beta.probs)

joint, _, q_hat = lpe_diagnostics(result.step1.checkpoint, train, target)
bbse = bbse_estimate(joint, q_hat, empirical_prior(train.labels, 2))
print("BBSE from the same classifier:", np.round(bbse.beta_hat.probs, 4))


def target_accuracy(params):
    return np.mean(predict(params, target.features) == target.hidden_labels)


print(f"target accuracy  DANN {target_accuracy(dann.checkpoint):.4f}"
      f"  DAN-LPE {target_accuracy(result.step2.checkpoint):.4f}")
