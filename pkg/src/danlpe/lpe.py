"""Label-proportion estimation by projected gradient descent on the simplex.

The target prior ``gamma`` is fitted so that mixing the source confusion rows
with weights ``gamma`` reproduces the histogram of predictions on the target
domain::

    J(gamma) = sum_j (sum_i gamma_i * P[i, j] - qhat_j) ** 2

where ``P[i, j] = p(yhat=j | y=i)`` is estimated on the labelled source split.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import RowConditional, SimplexVector

FLOOR = 0.001
COND_CAP = 1e8


class DegenerateSimplexError(ValueError):
    pass


@dataclass(frozen=True)
class LpeConfig:
    lambda_L: float = 0.01
    m: int = 5
    floor: float = FLOOR

    def __post_init__(self):
        if not self.lambda_L > 0:
            raise ValueError("lambda_L must be positive")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError("m must be a positive integer")
        if not 0 <= self.floor < 1:
            raise ValueError("floor must lie in [0, 1)")


@dataclass(frozen=True)
class LpeState:
    gamma: SimplexVector
    step_count: int = 0
    last_loss: float = float("nan")

    @classmethod
    def initial(cls, L: int) -> LpeState:
        return cls(SimplexVector.uniform(L))


def _operands(gamma, p_cond: RowConditional, q_hat):
    g = np.asarray(gamma, dtype=np.float64)
    q = np.asarray(q_hat, dtype=np.float64)
    rows = p_cond.rows if isinstance(p_cond, RowConditional) else np.asarray(p_cond, dtype=np.float64)
    L = rows.shape[0]
    if g.shape != (L,) or q.shape != (L,) or rows.shape != (L, L):
        raise ValueError(
            f"dimension mismatch: gamma {g.shape}, confusion {rows.shape}, q_hat {q.shape}"
        )
    return g, rows, q


def lpe_loss(gamma, p_cond: RowConditional, q_hat) -> float:
    """Squared mismatch between the gamma-mixture of confusion rows and ``q_hat``."""
    g, rows, q = _operands(gamma, p_cond, q_hat)
    r = g @ rows - q
    return float(r @ r)


def lpe_gradient(gamma, p_cond: RowConditional, q_hat) -> np.ndarray:
    g, rows, q = _operands(gamma, p_cond, q_hat)
    return 2.0 * rows @ (g @ rows - q)


def projected_step(gamma, gradient, lambda_L: float) -> np.ndarray:
    """Gradient step with the all-ones component of the gradient removed.

    The result keeps the coordinate sum of ``gamma`` but may leave the
    non-negative orthant; :func:`clamp_floor` repairs that.
    """
    g = np.asarray(gamma, dtype=np.float64)
    G = np.asarray(gradient, dtype=np.float64)
    if G.shape != g.shape:
        raise ValueError(f"dimension mismatch: gamma {g.shape}, gradient {G.shape}")
    return g - lambda_L * (G - G.mean())


def clamp_floor(candidate, floor: float = FLOOR) -> SimplexVector:
    """Raise entries below ``floor`` to the floor, charging the largest entry.

    Sub-floor entries are handled in ascending index order and the largest
    entry is recomputed after every transfer.
    """
    g = np.array(candidate, dtype=np.float64)
    L = g.size
    if L * floor > 1:
        raise DegenerateSimplexError(f"degenerate simplex: {L} classes cannot all hold {floor}")
    if abs(g.sum() - 1.0) > 1e-6:
        raise ValueError(f"candidate sums to {g.sum()!r}, not 1")
    for i in range(L):
        if g[i] < floor:
            k = int(np.argmax(g))
            g[k] = g[k] + g[i] - floor
            g[i] = floor
            if g[k] < floor:
                raise DegenerateSimplexError("degenerate simplex: largest entry pushed below floor")
    return SimplexVector(g)


def run_lpe_updates(state: LpeState, config: LpeConfig, p_cond: RowConditional, q_hat) -> LpeState:
    """Apply ``config.m`` projected-gradient iterations to ``state.gamma``."""
    gamma = state.gamma
    for _ in range(config.m):
        grad = lpe_gradient(gamma, p_cond, q_hat)
        gamma = clamp_floor(projected_step(gamma, grad, config.lambda_L), config.floor)
    return LpeState(gamma, state.step_count + config.m, lpe_loss(gamma, p_cond, q_hat))


def estimate_proportions(
    p_cond: RowConditional,
    q_hat,
    config: LpeConfig,
    state: LpeState | None = None,
    tol: float = 1e-7,
    max_calls: int = 100_000,
) -> LpeState:
    """Run update calls until gamma moves less than ``tol`` (L2) in one call."""
    if state is None:
        state = LpeState.initial(p_cond.L)
    for _ in range(max_calls):
        new = run_lpe_updates(state, config, p_cond, q_hat)
        moved = np.linalg.norm(new.gamma.probs - state.gamma.probs)
        state = new
        if moved < tol:
            break
    return state


def solve_exact(p_cond: RowConditional, q_hat, cond_cap: float = COND_CAP) -> np.ndarray:
    """Solve the moment equations directly; the result may leave the simplex."""
    _, rows, q = _operands(np.zeros(p_cond.L), p_cond, q_hat)
    A = rows.T
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > cond_cap:
        raise np.linalg.LinAlgError(f"confusion matrix is singular or ill-conditioned (cond={cond:.3g})")
    return np.linalg.solve(A, q)



def smoothness_step(p_cond: RowConditional) -> float:
    """Step size ``1 / M`` where ``M`` is the largest curvature of the loss
    along the simplex (the top eigenvalue of the projected Hessian).

    Projected gradient descent with this step decreases the loss on every
    step the floor clamp leaves untouched; with an identity confusion it lands on ``q_hat`` in one
    step.
    """
    rows = np.asarray(p_cond.rows, dtype=np.float64)
    L = rows.shape[0]
    proj = np.eye(L) - 1.0 / L
    hess = proj @ (2.0 * rows @ rows.T) @ proj
    top = float(np.linalg.eigvalsh(hess).max())
    if top <= 0:
        raise ValueError("loss is flat along the simplex; any step size is a no-op")
    return 1.0 / top
