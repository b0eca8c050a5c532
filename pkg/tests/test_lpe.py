import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from danlpe.distributions import RowConditional, SimplexVector
from danlpe.lpe import (
    DegenerateSimplexError,
    LpeConfig,
    LpeState,
    clamp_floor,
    estimate_proportions,
    lpe_gradient,
    lpe_loss,
    projected_step,
    run_lpe_updates,
    smoothness_step,
    solve_exact,
)

I2 = RowConditional(np.eye(2))


def random_conditional(rng, L, strength=None):
    """Classifier-like confusion rows: identity mixed with Dirichlet noise."""
    noise = rng.dirichlet(np.ones(L), size=L)
    s = rng.uniform(0.3, 0.9) if strength is None else strength
    rows = s * np.eye(L) + (1 - s) * noise
    return RowConditional(rows / rows.sum(axis=1, keepdims=True))


def central_difference(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def test_loss_examples():
    assert lpe_loss([0.3, 0.7], I2, [0.3, 0.7]) == 0
    assert lpe_loss([0.5, 0.5], I2, [0.6, 0.4]) == pytest.approx(0.02, abs=1e-15)
    flat = RowConditional(np.full((2, 2), 0.5))
    for g in ([0.5, 0.5], [0.1, 0.9], [1.0, 0.0]):
        assert lpe_loss(g, flat, [0.6, 0.4]) == pytest.approx(0.02, abs=1e-15)


def test_loss_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension mismatch"):
        lpe_loss([0.2, 0.3, 0.5], I2, [0.5, 0.5])
    with pytest.raises(ValueError):
        lpe_gradient([0.5, 0.5], I2, [1.0])


def test_gradient_examples():
    assert np.allclose(lpe_gradient([0.5, 0.5], I2, [0.6, 0.4]), [-0.2, 0.2])
    rng = np.random.default_rng(0)
    p = random_conditional(rng, 4)
    beta = rng.dirichlet(np.ones(4))
    q = beta @ p.rows
    assert np.allclose(lpe_gradient(solve_exact(p, q), p, q), 0, atol=1e-14)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 10), st.integers(0, 2**32 - 1))
def test_gradient_matches_finite_differences(L, seed):
    rng = np.random.default_rng(seed)
    p = RowConditional(rng.dirichlet(np.ones(L), size=L))
    gamma = rng.dirichlet(np.ones(L))
    q = rng.dirichlet(np.ones(L))
    analytic = lpe_gradient(gamma, p, q)
    numeric = central_difference(lambda g: lpe_loss(g, p, q), gamma)
    scale = max(np.linalg.norm(analytic), 1e-3)
    assert np.linalg.norm(analytic - numeric) / scale < 1e-6


def test_projected_step_examples():
    assert np.array_equal(projected_step([0.3, 0.7], [2.0, 2.0], 0.5), [0.3, 0.7])
    assert np.allclose(projected_step([0.5, 0.5], [1.0, -1.0], 0.1), [0.4, 0.6])


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 10), st.integers(0, 2**32 - 1), st.floats(1e-4, 10))
def test_projected_step_preserves_sum(L, seed, lam):
    rng = np.random.default_rng(seed)
    g = rng.dirichlet(np.ones(L))
    G = rng.normal(size=L) * 3
    assert abs(projected_step(g, G, lam).sum() - g.sum()) < 1e-12


def test_clamp_floor_examples():
    assert np.allclose(clamp_floor([0.0005, 0.9995]).probs, [0.001, 0.999])
    assert np.array_equal(clamp_floor([0.3, 0.7]).probs, [0.3, 0.7])
    assert np.allclose(clamp_floor([-0.01, 0.2, 0.81]).probs, [0.001, 0.2, 0.799])


def test_clamp_floor_sequential_argmax():
    # second transfer must come from whichever entry is largest after the first
    out = clamp_floor([-0.2, 0.65, 0.6, -0.05])
    assert out.probs.min() >= 0.001
    assert abs(out.probs.sum() - 1) < 1e-12
    assert np.allclose(out.probs, [0.001, 0.449, 0.549, 0.001])


def test_clamp_floor_degenerate():
    with pytest.raises(DegenerateSimplexError, match="degenerate simplex"):
        clamp_floor(np.full(1001, 1 / 1001))
    with pytest.raises(DegenerateSimplexError):
        clamp_floor([-0.5, 0.5, 0.5, 0.5], floor=0.2)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 10), st.integers(0, 2**32 - 1))
def test_clamp_floor_invariants(L, seed):
    rng = np.random.default_rng(seed)
    g = rng.dirichlet(np.ones(L))
    cand = projected_step(g, rng.normal(size=L), rng.uniform(0, 0.3))
    try:
        out = clamp_floor(cand).probs
    except DegenerateSimplexError:
        # only legitimate when the largest entry cannot absorb a deficit
        assert cand.min() < 0.001
        assume(False)
    assert out.min() >= 0.001
    assert abs(out.sum() - 1) < 1e-12


def test_config_validation():
    with pytest.raises(ValueError):
        LpeConfig(lambda_L=0.1, m=0)
    with pytest.raises(ValueError):
        LpeConfig(lambda_L=0.0)


def test_updates_identity_case():
    q = [0.7, 0.3]
    state = estimate_proportions(I2, q, LpeConfig(0.05, 5))
    assert np.allclose(state.gamma.probs, q, atol=1e-5)
    assert state.step_count % 5 == 0


def test_updates_recover_interior_beta():
    p = RowConditional(np.array([[0.9, 0.1], [0.2, 0.8]]))
    beta = np.array([0.3, 0.7])
    q = beta @ p.rows
    state = estimate_proportions(p, q, LpeConfig(0.1, 5), tol=1e-12)
    assert np.linalg.norm(state.gamma.probs - beta) < 1e-4


def test_loss_non_increasing_for_small_step():
    rng = np.random.default_rng(3)
    p = random_conditional(rng, 5)
    q = rng.dirichlet(np.ones(5))
    state = LpeState.initial(5)
    losses = [lpe_loss(state.gamma, p, q)]
    for _ in range(50):
        state = run_lpe_updates(state, LpeConfig(0.01, 1), p, q)
        losses.append(state.last_loss)
    assert all(b <= a + 1e-15 for a, b in zip(losses, losses[1:]))


def test_grid_oracle_two_classes():
    grid = np.arange(1, 1000) / 1000
    rng = np.random.default_rng(11)
    for _ in range(20):
        p = random_conditional(rng, 2)
        q = rng.dirichlet([1, 1])
        losses = [lpe_loss([g, 1 - g], p, q) for g in grid]
        best = grid[int(np.argmin(losses))]
        state = estimate_proportions(p, q, LpeConfig(0.1, 5), tol=1e-12)
        assert abs(state.gamma.probs[0] - best) <= 0.001 + 1e-9


def test_solve_exact_examples():
    assert np.allclose(solve_exact(I2, [0.4, 0.6]), [0.4, 0.6])
    # response matrix [[0.9, 0.2], [0.1, 0.8]]: columns are responses per true class
    p = RowConditional(np.array([[0.9, 0.1], [0.2, 0.8]]))
    q = np.array([[0.9, 0.2], [0.1, 0.8]]) @ [0.3, 0.7]
    assert np.allclose(q, [0.41, 0.59])
    assert np.allclose(solve_exact(p, q), [0.3, 0.7])
    with pytest.raises(np.linalg.LinAlgError, match="cond"):
        solve_exact(RowConditional(np.full((2, 2), 0.5)), [0.5, 0.5])


@settings(max_examples=100, deadline=None)
@given(st.sampled_from([2, 3, 5, 10]), st.integers(0, 2**32 - 1))
def test_hessian_psd_and_chord_convexity(L, seed):
    rng = np.random.default_rng(seed)
    p = RowConditional(rng.dirichlet(np.ones(L), size=L))
    A = p.rows.T
    assert np.linalg.eigvalsh(2 * A.T @ A).min() >= -1e-10
    q = rng.dirichlet(np.ones(L))
    g1, g2 = rng.dirichlet(np.ones(L), size=2)
    t = rng.uniform()
    lhs = lpe_loss(t * g1 + (1 - t) * g2, p, q)
    rhs = t * lpe_loss(g1, p, q) + (1 - t) * lpe_loss(g2, p, q)
    assert lhs <= rhs + 1e-12


def test_zero_loss_at_truth():
    rng = np.random.default_rng(5)
    for L in (2, 3, 5):
        p = random_conditional(rng, L)
        beta = rng.dirichlet(np.ones(L) * 3)
        q = beta @ p.rows
        assert lpe_loss(beta, p, q) < 1e-12


def test_state_initial_is_uniform():
    s = LpeState.initial(4)
    assert isinstance(s.gamma, SimplexVector)
    assert np.array_equal(s.gamma.probs, np.full(4, 0.25))


def test_smoothness_step_identity_lands_in_one_step():
    assert smoothness_step(I2) == pytest.approx(0.5)
    state = run_lpe_updates(LpeState.initial(2), LpeConfig(smoothness_step(I2), 1), I2, [0.7, 0.3])
    assert np.allclose(state.gamma.probs, [0.7, 0.3], atol=1e-15)
    with pytest.raises(ValueError):
        smoothness_step(RowConditional(np.full((2, 2), 0.5)))


def test_smoothness_step_descends_monotonically():
    rng = np.random.default_rng(8)
    for _ in range(20):
        p = random_conditional(rng, 6)
        q = rng.dirichlet(np.ones(6))
        state = LpeState.initial(6)
        prev = lpe_loss(state.gamma, p, q)
        lam = smoothness_step(p)
        for _ in range(30):
            raw = projected_step(state.gamma.probs, lpe_gradient(state.gamma, p, q), lam)
            state = run_lpe_updates(state, LpeConfig(lam, 1), p, q)
            if raw.min() >= 0.001:
                # descent is only guaranteed when the floor clamp is inactive
                assert state.last_loss <= prev + 1e-15
            prev = state.last_loss
