from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import chisquare

from sdh.continuation import Constant, Exponential, HardIndicator, CatNormalized
from sdh.errors import UsageError
from sdh.mdp import (
    FiniteMdp,
    build_bernoulli_cost_mdp,
    build_counterexample_mdp,
    build_hazard_chain,
    build_hazard_gridworld,
    make_env,
    random_mdp,
    sample_trajectory,
    step,
)
from sdh.policy import SoftmaxPolicy


def two_state_mdp():
    P = np.array([[[0.3, 0.7]], [[0.0, 1.0]]])
    return FiniteMdp(P, np.zeros((2, 1)), np.zeros((1, 2, 1)), np.array([1.0, 0.0]), np.zeros(2, bool), 0.9)


def test_deterministic_transition_always_lands():
    mdp = build_hazard_chain(5, (2,))
    rng = np.random.default_rng(0)
    assert all(step(mdp, 1, 1, rng).next_state == 2 for _ in range(100))


def test_terminal_state_self_loops_with_zero_reward_and_cost():
    mdp = build_hazard_chain(5, (2,))
    out = step(mdp, 4, 0, np.random.default_rng(0))
    assert out.next_state == 4 and out.reward == 0.0 and not out.cost_vec.any() and out.terminated


def test_empirical_next_state_frequencies():
    mdp = two_state_mdp()
    rng = np.random.default_rng(1)
    draws = np.array([step(mdp, 0, 0, rng).next_state for _ in range(100_000)])
    freq = np.bincount(draws, minlength=2) / draws.size
    assert np.allclose(freq, [0.3, 0.7], atol=0.01)
    assert chisquare(np.bincount(draws), [30_000, 70_000]).pvalue > 1e-4


def test_step_rejects_out_of_range():
    mdp = two_state_mdp()
    with pytest.raises(UsageError):
        step(mdp, 2, 0, np.random.default_rng(0))
    with pytest.raises(UsageError):
        step(mdp, 0, 1, np.random.default_rng(0))


def test_invariants_enforced_at_construction():
    P = np.array([[[0.5, 0.4]], [[0.0, 1.0]]])
    with pytest.raises(UsageError):
        FiniteMdp(P, np.zeros((2, 1)), np.zeros((1, 2, 1)), np.array([1.0, 0.0]), np.zeros(2, bool), 0.9)
    good = two_state_mdp()
    with pytest.raises(UsageError):
        FiniteMdp(good.transition, np.zeros((2, 1)), -np.ones((1, 2, 1)), good.initial_dist, good.terminal, 0.9)
    with pytest.raises(UsageError):
        FiniteMdp(good.transition, np.zeros((2, 1)), np.zeros((1, 2, 1)), good.initial_dist, good.terminal, 1.0)
    # a terminal that does not self-loop
    with pytest.raises(UsageError):
        FiniteMdp(good.transition, np.zeros((2, 1)), np.zeros((1, 2, 1)), good.initial_dist, np.array([True, False]), 0.9)


def test_self_loop_policy_truncates_at_max_steps():
    mdp = build_counterexample_mdp(0.4, 0.9)
    pol = np.array([[1.0, 0.0]])
    traj = sample_trajectory(mdp, pol, 5, Constant(1.0), np.random.default_rng(0))
    assert traj.length == 5 and traj.truncated and not traj.terminal
    assert traj.alphas == [1.0] * 5


def test_counterexample_continue_forever_collects_r_every_step():
    mdp = build_counterexample_mdp(0.4, 0.9)
    traj = sample_trajectory(mdp, np.array([[1.0, 0.0]]), 50, HardIndicator(), np.random.default_rng(0))
    assert traj.rewards == [0.4] * 50 and traj.alphas == [1.0] * 50


def test_counterexample_stop_has_zero_alpha():
    mdp = build_counterexample_mdp(0.4, 0.9)
    alpha = HardIndicator()(mdp.costs)
    assert alpha.tolist() == [[1.0, 0.0]]
    with pytest.raises(UsageError):
        build_counterexample_mdp(0.0, 0.9)


def test_violations_never_reset():
    mdp = build_hazard_chain(6, (1, 2, 3, 4), gamma=0.9)
    traj = sample_trajectory(mdp, np.array([[0.0, 1.0]] * 6), 20, HardIndicator(), np.random.default_rng(0))
    assert traj.states == [0, 1, 2, 3, 4] and traj.terminal
    assert traj.alphas == [1.0, 0.0, 0.0, 0.0, 0.0]


def test_hazard_chain_cost_exactly_at_hazard_state():
    mdp = build_hazard_chain(5, (2,), hazard_cost=0.7)
    expected = np.zeros((5, 2))
    expected[2] = 0.7
    assert np.array_equal(mdp.costs[0], expected)
    with pytest.raises(UsageError):
        build_hazard_chain(1)
    with pytest.raises(UsageError):
        build_hazard_chain(5, (7,))


def test_no_hazards_gives_unit_alpha_for_every_model():
    mdp = build_hazard_chain(6)
    for model in (Exponential(2.0), CatNormalized(p_max=0.9), HardIndicator(), Exponential(1.0, "min")):
        assert np.all(model(mdp.costs) == 1.0)


def test_gridworld_single_row_matches_chain_dynamics():
    n = 6
    grid = build_hazard_gridworld(n, 1, (0, n - 1), [(0, 2)], gamma=0.9)
    chain = build_hazard_chain(n, (2,), gamma=0.9)
    # grid actions (up, down, left, right); chain actions (left, right)
    assert np.array_equal(grid.transition[:, [2, 3], :], chain.transition)
    assert np.array_equal(grid.reward[:, [2, 3]], chain.reward)
    assert np.array_equal(grid.costs[:, :, [2, 3]], chain.costs)


def test_gridworld_goal_is_terminal():
    grid = build_hazard_gridworld(3, 3, (2, 2))
    goal = 8
    assert grid.terminal[goal] and np.all(grid.transition[goal, :, goal] == 1.0)
    assert grid.reward[5, 1] == 1.0 and grid.reward[7, 3] == 1.0


def test_bernoulli_cost_mdp_is_iid():
    mdp = build_bernoulli_cost_mdp(0.1)
    assert np.allclose(mdp.transition[:, 0, :], [[0.9, 0.1], [0.9, 0.1]])
    assert np.allclose(mdp.initial_dist, [0.9, 0.1])


@given(st.integers(0, 2**31), st.integers(1, 5), st.integers(1, 4))
def test_random_mdps_satisfy_invariants(seed, S, A):
    mdp = random_mdp(np.random.default_rng(seed), S, A)
    assert np.allclose(mdp.transition.sum(axis=2), 1.0, atol=1e-12)
    assert np.all(mdp.costs >= 0) and np.all(np.isfinite(mdp.reward))
    assert np.isclose(mdp.initial_dist.sum(), 1.0)


@given(st.integers(0, 2**31))
def test_trajectories_bit_identical_for_same_seed(seed):
    mdp = random_mdp(np.random.default_rng(seed), 4, 3)
    pol = SoftmaxPolicy(np.random.default_rng(seed + 1).normal(size=(4, 3)))
    a = sample_trajectory(mdp, pol, 30, Exponential(0.5), np.random.default_rng(seed))
    b = sample_trajectory(mdp, pol, 30, Exponential(0.5), np.random.default_rng(seed))
    assert a.states == b.states and a.actions == b.actions and a.alphas == b.alphas
    assert all(0.0 <= x <= 1.0 for x in a.alphas)


@pytest.mark.parametrize("name", ["counterexample", "hazard_chain", "hazard_gridworld", "bernoulli_cost"])
def test_json_round_trip(name):
    mdp = make_env(name)
    back = FiniteMdp.from_json(mdp.to_json())
    for field in ("transition", "reward", "costs", "initial_dist", "terminal"):
        assert np.array_equal(getattr(mdp, field), getattr(back, field))
    assert back.gamma == mdp.gamma and back.name == mdp.name


def test_unknown_env():
    with pytest.raises(UsageError):
        make_env("nope")
