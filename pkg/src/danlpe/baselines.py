"""Black box shift estimation (BBSE) for comparison with the LPE estimate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import JointConfusion, SimplexVector
from .lpe import COND_CAP


@dataclass(frozen=True)
class BbseResult:
    beta_hat: SimplexVector
    raw_weights: np.ndarray
    clipped: bool


def bbse_estimate(
    joint: JointConfusion,
    q_hat,
    source_prior,
    cond_cap: float = COND_CAP,
) -> BbseResult:
    """Invert the joint confusion against the target prediction histogram.

    ``raw_weights`` estimate q(y)/p(y); negative weights are clipped to zero
    before the target prior is rebuilt from ``source_prior``.
    """
    C = joint.cells.T
    q = np.asarray(q_hat, dtype=np.float64)
    prior = np.asarray(source_prior, dtype=np.float64)
    if q.shape != (joint.L,) or prior.shape != (joint.L,):
        raise ValueError("dimension mismatch between confusion, q_hat and source prior")
    cond = np.linalg.cond(C)
    if not np.isfinite(cond) or cond > cond_cap:
        raise np.linalg.LinAlgError(f"confusion matrix is singular or ill-conditioned (cond={cond:.3g})")
    w = np.linalg.solve(C, q)
    clipped = bool(np.any(w < 0))
    beta = np.maximum(w, 0.0) * prior
    if beta.sum() <= 0:
        raise ValueError("all BBSE weights clipped to zero")
    return BbseResult(SimplexVector(beta / beta.sum()), w, clipped)
