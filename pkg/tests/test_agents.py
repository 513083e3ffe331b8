from __future__ import annotations

import inspect
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import rel_entr

from sdh import bellman, oracle
from sdh.agents import losses
from sdh.agents.config import DualState, LearnerConfig
from sdh.agents.learners import AsSacLearner
from sdh.continuation import HardIndicator
from sdh.errors import UsageError
from sdh.mdp import build_counterexample_mdp
from sdh.oracle import ObjectiveSpec
from sdh.policy import LOGIT_CLAMP, SoftmaxPolicy
from sdh.replay import NStepRecord, TransitionRecord

from tests.strategies import instances

# frozen: 1 - 0.2 ln 2 + 0.45 and e / (1 + e), to 15 digits
Y_SINGLE = 1.31137056388801
BOLTZMANN_1_0 = 0.731058578630005


def tr(r_tilde, gamma_tilde, done, s=0, a=0, s_next=0):
    return TransitionRecord(s, a, r_tilde, 0.0, s_next, gamma_tilde, done)


def test_single_target_examples():
    ones = np.ones((1, 1))
    y = losses.as_sac_target_single(tr(1.0, 0.45, False), ones, (ones, ones), 0.2, math.log(2))
    assert float(y) == pytest.approx(Y_SINGLE, abs=1e-12)
    y_done = losses.as_sac_target_single(tr(1.0, 0.45, True), ones, (ones, ones), 0.2, math.log(2))
    assert float(y_done) == pytest.approx(1.0 - 0.2 * math.log(2))
    Q = np.array([[2.0, 4.0]])
    pol = np.array([[0.25, 0.75]])
    assert float(losses.as_sac_target_single(tr(0.5, 0.9, False), pol, (Q, Q + 1), 0.0, 0.3)) == pytest.approx(0.5 + 0.9 * 3.5)


def test_single_target_uses_twin_minimum():
    pol = np.array([[1.0, 0.0]])
    q1, q2 = np.array([[5.0, 0.0]]), np.array([[2.0, 9.0]])
    assert float(losses.as_sac_target_single(tr(0.0, 1.0, False), pol, (q1, q2), 0.0, 0.0)) == 2.0


def test_two_targets_examples():
    pol_uniform = np.full((1, 2), 0.5)
    big = np.full((1, 2), 100.0)
    y_r, y_kl = losses.as_sac_targets_two(tr(0.8, 0.9, True), pol_uniform, (big, big), (big, big), math.log(2))
    assert float(y_r) == 0.8 and float(y_kl) == pytest.approx(0.0, abs=1e-15)
    det = np.array([[1.0, 0.0]])
    _, y_kl = losses.as_sac_targets_two(tr(0.8, 0.9, True), det, (big, big), (big, big), 0.0)
    assert float(y_kl) == 0.0


def test_two_targets_never_take_kappa():
    assert "kappa" not in inspect.signature(losses.as_sac_targets_two).parameters


def test_two_critic_updates_identical_across_kappa():
    rng = np.random.default_rng(0)
    batch = {
        "s": rng.integers(0, 3, 16), "a": rng.integers(0, 2, 16), "r_tilde": rng.random(16),
        "cost": np.zeros(16), "s_next": rng.integers(0, 3, 16), "gamma_tilde": 0.9 * rng.random(16),
        "done": rng.random(16) < 0.2,
    }
    tables = []
    for kappa in (1e-3, 1.0, 10.0):
        learner = AsSacLearner(3, 2, LearnerConfig(init_kappa=kappa))
        learner.policy = SoftmaxPolicy(np.array([[0.3, -0.2], [1.0, 0.0], [-0.5, 0.5]]))
        learner.update(batch, np.random.default_rng(1))
        tables.append({k: learner.tables[k].copy() for k in ("QR1", "QKL1")})
    for t in tables[1:]:
        assert np.array_equal(t["QR1"], tables[0]["QR1"]) and np.array_equal(t["QKL1"], tables[0]["QKL1"])


def test_actor_loss_kappa_zero_is_negative_expected_q():
    rng = np.random.default_rng(1)
    pol = SoftmaxPolicy(rng.normal(size=(3, 2)))
    QR, QKL = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
    states = np.array([0, 1, 1, 2])
    loss, grad = losses.as_sac_actor_loss(states, pol, QR, QKL, 0.0)
    assert loss == pytest.approx(-losses.expected_q(states, pol, QR))
    _, g_pg = losses._expected_loss_and_grad(np.array([0.25, 0.5, 0.25]), pol.probs, -QR)
    assert np.allclose(grad, g_pg)


def test_actor_loss_counterexample_equals_negative_objective():
    mdp = build_counterexample_mdp(0.4, 0.9)
    shaped = bellman.shape(mdp, HardIndicator())
    for p in (0.2, 0.5, 0.707, 0.95):
        pol = SoftmaxPolicy.from_probs([[p, 1 - p]])
        crit = bellman.two_critic_fixed_point(pol, shaped, math.log(2), tol=1e-13)
        loss, _ = losses.as_sac_actor_loss([0], pol, crit.Q_R, crit.Q_KL, 1.0)
        assert -loss == pytest.approx(oracle.counterexample_objectives(p, 0.9, 1.0, 0.4)[0], abs=1e-8)


@given(instances(max_states=4, max_actions=3), st.floats(0.0, 3.0))
def test_actor_value_consistency_with_exact_critics(inst, kappa):
    mdp, cont, pol = inst
    crit = bellman.two_critic_fixed_point(pol, bellman.shape(mdp, cont), math.log(mdp.n_actions), tol=1e-13)
    loss, _ = losses.as_sac_actor_loss(None, pol, crit.Q_R, crit.Q_KL, kappa, d=mdp.initial_dist)
    exact = oracle.j_as_exact(mdp, pol, cont, ObjectiveSpec("AS", kappa, tail_tol=1e-13))
    assert -loss == pytest.approx(exact, abs=1e-8)


def test_gi_variant_same_value_gradient_differs_by_grad_log_pi():
    rng = np.random.default_rng(2)
    pol = SoftmaxPolicy(rng.normal(size=(3, 3)))
    QR, QKL = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
    states = np.array([0, 2, 2, 1])
    actions = np.array([1, 0, 2, 2])
    kappa = 0.7
    base, g0 = losses.as_sac_actor_loss(states, pol, QR, QKL, kappa)
    gi, g1 = losses.as_sac_actor_loss(states, pol, QR, QKL, kappa, gi_variant=True, actions=actions)
    assert gi == base
    extra = sum(losses.grad_log_pi(pol.probs, s, a) for s, a in zip(states, actions)) / len(states)
    assert np.allclose(g1 - g0, kappa * extra, atol=1e-15)
    _, g_exp = losses.as_sac_actor_loss(states, pol, QR, QKL, kappa, gi_variant=True)
    assert np.allclose(g_exp, g0, atol=1e-15)


def test_kappa_dual_examples():
    dual = DualState(log_kappa=0.0, kl_budget_eps=0.5)
    assert losses.kappa_dual_loss(0.0, 0.5, 0.5)[1] == 0.0
    value, grad = losses.kappa_dual_loss(0.0, 0.5, 0.0)
    assert grad == pytest.approx(-0.5)
    Q = np.array([[0.5, 0.5]])
    grow = losses.kappa_dual_step([0], np.full((1, 2), 0.5), Q, DualState(0.0, 0.0), 0.1)
    assert grow.log_kappa == pytest.approx(0.05) and grow.kappa > 1.0
    shrink = losses.kappa_dual_step([0], np.full((1, 2), 0.5), Q, DualState(0.0, 2.0), 0.1)
    assert shrink.kappa < 1.0
    same = losses.kappa_dual_step([0], np.full((1, 2), 0.5), Q, dual, 0.1)
    assert same.log_kappa == 0.0


def test_naive_tuning_examples():
    uni = np.full((1, 2), 0.5)
    at_target = losses.naive_tuning_step([0], uni, DualState(0.3), 0.1, math.log(2))
    assert at_target.log_kappa == pytest.approx(0.3)
    low = losses.naive_tuning_step([0], np.array([[0.9, 0.1]]), DualState(0.0), 0.1, math.log(2))
    assert low.log_kappa > 0.0
    det = losses.naive_tuning_step([0], np.array([[1.0, 0.0]]), DualState(0.0), 0.1, -math.log(2))
    assert det.log_kappa < 0.0


def nrec(R, u, done, s_boot=0):
    return NStepRecord(0, 0, R, 0.0, s_boot, u, done, 0.0, 2)


def test_td_n_target_examples():
    Q = np.array([[1.0, 1.0]])
    pol = np.full((1, 2), 0.5)
    assert float(losses.vt_mpo_td_target(nrec(1.4, 0.405, True), pol, Q)) == pytest.approx(1.4)
    assert float(losses.vt_mpo_td_target(nrec(1.4, 0.405, False), pol, Q)) == pytest.approx(1.805)
    det = np.array([[1.0, 0.0]])
    c = np.full((1, 2), -2.5)
    assert float(losses.vt_mpo_td_target(nrec(0.3, 0.5, False), det, c)) == pytest.approx(0.3 + 0.5 * -2.5)
    sampled = losses.vt_mpo_td_target(nrec(0.3, 0.5, False), det, c, np.random.default_rng(0), "sample", 4)
    assert float(sampled) == pytest.approx(0.3 + 0.5 * -2.5)


def test_e_step_examples():
    prior = np.array([[0.2, 0.5, 0.3]])
    q_const = losses.boltzmann_weights(prior, np.full((1, 3), 4.0), 0.3)
    assert np.allclose(q_const, prior)
    q_hot = losses.boltzmann_weights(prior, np.array([[1.0, -2.0, 3.0]]), 1e6)
    assert 0.5 * np.abs(q_hot - prior).sum() < 1e-4
    w = losses.boltzmann_weights(np.full((1, 2), 0.5), np.array([[1.0, 0.0]]), 1.0)
    assert w[0, 0] == pytest.approx(BOLTZMANN_1_0, abs=1e-12)


def test_e_step_constant_q_returns_prior():
    prior = SoftmaxPolicy(np.array([[0.1, 0.4], [0.0, -1.0]]))
    weights, dual = losses.mpo_e_step([0, 1, 1], prior, np.full((2, 2), 3.0), DualState(mpo_kl_eps=0.1))
    assert np.allclose(weights, prior.probs[[0, 1, 1]])


@given(st.integers(0, 2**31), st.floats(0.01, 1.0))
def test_e_step_feasible_and_dual_optimal(seed, eps):
    rng = np.random.default_rng(seed)
    S, A = int(rng.integers(1, 5)), int(rng.integers(2, 5))
    prior = SoftmaxPolicy(rng.normal(size=(S, A)))
    Q = rng.normal(0, 3, size=(S, A))
    states = rng.integers(0, S, size=8)
    weights, dual = losses.mpo_e_step(states, prior, Q, DualState(mpo_kl_eps=eps))
    pb = prior.probs[states]
    kl = rel_entr(weights, pb).sum(axis=1).mean()
    assert kl <= eps + 1e-6
    assert np.allclose(weights.sum(axis=1), 1.0)
    g = lambda eta: losses.estep_dual(eta, pb, Q[states], eps)
    if dual.eta_E > 1.01 * losses.ETA_MIN:
        assert g(dual.eta_E) <= min(g(dual.eta_E * 1.01), g(dual.eta_E / 1.01)) + 1e-9


def test_e_step_rejects_nonpositive_budget():
    with pytest.raises(UsageError):
        losses.solve_eta(np.full((1, 2), 0.5), np.array([[1.0, 0.0]]), 0.0)


def test_m_step_examples():
    pol = SoftmaxPolicy(np.array([[0.3, -0.4]]))
    _, grad = losses.mpo_m_step_loss(pol.logits, pol.probs, [0])
    assert np.allclose(grad, 0.0)
    target = np.array([[BOLTZMANN_1_0, 1 - BOLTZMANN_1_0]])
    fitted = losses.mpo_m_step(SoftmaxPolicy.uniform(1, 2), target, [0], 1.0, 200)
    assert 0.5 * np.abs(fitted.probs - target).sum() < 1e-4
    hot = losses.mpo_m_step(SoftmaxPolicy.uniform(1, 2), np.array([[1.0, 0.0]]), [0], 50.0, 500)
    assert np.all(np.abs(hot.logits) <= LOGIT_CLAMP) and np.all(np.isfinite(hot.log_probs))


@given(st.integers(0, 2**31))
def test_m_step_reaches_kl_tolerance(seed):
    rng = np.random.default_rng(seed)
    S, A = 3, int(rng.integers(2, 5))
    states = rng.integers(0, S, size=12)
    weights = rng.dirichlet(np.ones(A) * 2, size=12)
    fitted = losses.mpo_m_step(SoftmaxPolicy.uniform(S, A), weights, states, 1.0, 200)
    for s in np.unique(states):
        q = weights[states == s].mean(axis=0)
        assert rel_entr(q, fitted.probs[s]).sum() < 1e-4


def test_gradient_check_examples():
    assert losses.gradient_check(lambda x: (0.0, np.zeros_like(x)), np.ones((2, 2))) == 0.0
    rng = np.random.default_rng(3)
    QR, QKL = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
    err = losses.gradient_check(lambda L: losses.as_sac_actor_loss([0, 1, 2], SoftmaxPolicy(L), QR, QKL, 0.8), rng.normal(size=(3, 2)))
    assert err < 1e-5
    assert losses.gradient_check(losses.entropy_loss, rng.normal(size=(4, 3))) < 1e-6


def test_learner_config_validation():
    with pytest.raises(UsageError):
        LearnerConfig(variant="SAC")
    with pytest.raises(UsageError):
        LearnerConfig(actor_lr=0.0)
    assert LearnerConfig(variant="AS_SAC_naive_critic").living_cost_mode() == "zero"
    assert LearnerConfig(variant="AS_SAC_const_kappa").living_cost_mode() == "H_tgt"


def _run(variant, cont, seed, steps=1500, **cfg):
    from sdh.agents import train

    from sdh.harness.experiments import sweep_chain

    config = LearnerConfig(variant=variant, init_kappa=0.1, max_episode_steps=50, **cfg)
    return train(sweep_chain(), cont, config, seed, steps, 500, eval_episodes=1)


@pytest.mark.parametrize("variant", ["AS_SAC_full", "VT_MPO"])
def test_unit_continuation_matches_zero_lambda_exactly(variant):
    from sdh.continuation import Constant, Exponential

    a = _run(variant, Constant(1.0), 3)
    b = _run(variant, Exponential(0.0), 3)
    assert a.metrics == b.metrics
    assert a.learner.state_dict() == b.learner.state_dict()


@pytest.mark.slow
def test_vt_mpo_hard_indicator_avoids_hazard():
    finals = [_run("VT_MPO", HardIndicator(), seed, steps=4000).metrics[-1]["cost_return"] for seed in range(5)]
    assert sum(c == 0.0 for c in finals) >= 4
