"""Targets, losses and analytic gradients for tabular AS-SAC and VT-MPO.

Records may be single dataclass records or minibatches given as dicts of
column arrays; every function broadcasts over the batch. Expectations over
the discrete action set are exact unless a sampling mode is requested.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from sdh.agents.config import DualState
from sdh.errors import NumericError, UsageError
from sdh.policy import SoftmaxPolicy, as_probs, safe_log, softmax
from sdh.replay import terminal_mask

ETA_MIN = 1e-8
ETA_MAX = 1e8


def _get(rec, name):
    value = rec[name] if isinstance(rec, dict) else getattr(rec, name)
    return np.asarray(value)


def _probs_logp(policy):
    if isinstance(policy, SoftmaxPolicy):
        return policy.probs, policy.log_probs
    probs = as_probs(policy)
    return probs, safe_log(probs)


def _pair_min(q_pair) -> np.ndarray:
    if isinstance(q_pair, np.ndarray) and q_pair.ndim == 2:
        return q_pair
    return np.minimum(*q_pair) if len(q_pair) == 2 else np.asarray(q_pair[0])


def _next_expectation(table: np.ndarray, probs: np.ndarray, s_next, rng, mode: str) -> np.ndarray:
    """E_{a' ~ pi(.|s')}[table(s', a')], exactly or from one sampled action per entry."""
    if mode == "exact":
        return (probs * table).sum(axis=1)[s_next]
    if mode != "sample":
        raise UsageError("mode must be 'exact' or 'sample'")
    s_next = np.atleast_1d(s_next)
    cum = np.cumsum(probs[s_next], axis=1)
    a_next = np.minimum((rng.random(s_next.shape[0])[:, None] >= cum).sum(axis=1), probs.shape[1] - 1)
    return table[s_next, a_next]


def _bootstrap(rec, key="gamma_tilde"):
    done = _get(rec, "done").astype(bool)
    g = _get(rec, key).astype(float)
    if done.ndim == 0:
        return terminal_mask(bool(done), False, float(g))
    return np.where(done, 0.0, g)


def as_sac_target_single(rec, policy, target_q_pair, kappa: float, c_lc: float, rng=None, mode: str = "exact"):
    """y = r~ - kappa c_LC + g~ V(s'), V(s') = E_{a'}[min_i Qbar_i(s', a') - kappa log pi(a'|s')]."""
    probs, logp = _probs_logp(policy)
    soft = _pair_min(target_q_pair) - kappa * logp
    v_next = _next_expectation(soft, probs, _get(rec, "s_next"), rng, mode)
    return _get(rec, "r_tilde") - kappa * c_lc + _bootstrap(rec) * v_next


def as_sac_targets_two(rec, policy, target_qr_pair, target_qkl_pair, H_tgt: float, rng=None, mode: str = "exact"):
    """kappa-free targets (y_R, y_KL) of the two-critic decomposition.

    y_R = r~ + g~ E[min_i Qbar_R,i(s', .)];
    y_KL = (log pi(a|s) + H_tgt) + g~ E[min_i Qbar_KL,i(s', .)], with log pi treated as data.
    """
    probs, logp = _probs_logp(policy)
    s_next = _get(rec, "s_next")
    g = _bootstrap(rec)
    if mode == "sample":
        # one shared a' for both critics
        state = rng.bit_generator.state
        vr = _next_expectation(_pair_min(target_qr_pair), probs, s_next, rng, mode)
        rng.bit_generator.state = state
        vkl = _next_expectation(_pair_min(target_qkl_pair), probs, s_next, rng, mode)
    else:
        vr = _next_expectation(_pair_min(target_qr_pair), probs, s_next, rng, mode)
        vkl = _next_expectation(_pair_min(target_qkl_pair), probs, s_next, rng, mode)
    y_r = _get(rec, "r_tilde") + g * vr
    y_kl = logp[_get(rec, "s"), _get(rec, "a")] + H_tgt + g * vkl
    return y_r, y_kl


def _state_weights(states, n_states: int) -> np.ndarray:
    """Empirical state distribution of a batch (each entry weighs 1/N)."""
    states = np.atleast_1d(np.asarray(states, dtype=int))
    if states.size == 0:
        raise UsageError("empty batch of states")
    return np.bincount(states, minlength=n_states) / states.size


def _expected_loss_and_grad(d: np.ndarray, probs: np.ndarray, g: np.ndarray):
    """L = sum_s d(s) sum_a pi(a|s) g(s, a) with g held fixed; dL/dlogits = d(s) pi (g - E_pi g)."""
    g_bar = (probs * g).sum(axis=1, keepdims=True)
    loss = float(d @ g_bar[:, 0])
    grad = d[:, None] * probs * (g - g_bar)
    return loss, grad


def grad_log_pi(probs: np.ndarray, s: int, a: int) -> np.ndarray:
    """Gradient of log pi(a|s) with respect to the full logit table."""
    out = np.zeros_like(probs)
    out[s] = -probs[s]
    out[s, a] += 1.0
    return out


def as_sac_actor_loss(states, policy: SoftmaxPolicy, Q_R, Q_KL, kappa: float, gi_variant: bool = False, actions=None, d=None):
    """Two-critic actor loss E_s E_a[kappa Q_KL - Q_R] and its gradient with respect to the logits.

    The GI variant adds kappa (c_KL - sg[c_KL]) with c_KL = log pi + H_tgt: zero value,
    extra gradient kappa * grad log pi. With ``actions`` given the extra path is taken
    at those actions (one per batch entry); otherwise in expectation over pi,
    where it vanishes identically. ``d`` overrides the batch state distribution.
    """
    probs = policy.probs
    d = _state_weights(states, probs.shape[0]) if d is None else np.asarray(d, dtype=float)
    loss, grad = _expected_loss_and_grad(d, probs, kappa * np.asarray(Q_KL) - np.asarray(Q_R))
    if gi_variant:
        grad = grad + kappa * gi_gradient_term(states, probs, actions)
    return loss, grad


def gi_gradient_term(states, probs: np.ndarray, actions=None) -> np.ndarray:
    states = np.atleast_1d(np.asarray(states, dtype=int))
    out = np.zeros_like(probs)
    if actions is None:
        d = _state_weights(states, probs.shape[0])
        # sum_a pi(a|s) (e_a - pi(.|s)) per state
        out = d[:, None] * (probs - probs * probs.sum(axis=1, keepdims=True))
        return out
    actions = np.atleast_1d(np.asarray(actions, dtype=int))
    for s, a in zip(states, actions):
        out += grad_log_pi(probs, s, a)
    return out / states.size


def sac_actor_loss(states, policy: SoftmaxPolicy, Q, kappa: float, d=None):
    """Single-critic actor loss E_s E_a[kappa log pi - Q] and its logit gradient."""
    probs, logp = policy.probs, policy.log_probs
    d = _state_weights(states, probs.shape[0]) if d is None else np.asarray(d, dtype=float)
    loss, grad = _expected_loss_and_grad(d, probs, kappa * logp - np.asarray(Q))
    # the log pi path contributes kappa * sum_a pi grad log pi = 0 per state
    return loss, grad


def expected_q(states, policy, Q) -> float:
    probs, _ = _probs_logp(policy)
    d = _state_weights(states, probs.shape[0])
    return float(d @ (probs * np.asarray(Q)).sum(axis=1))


def kappa_dual_loss(log_kappa: float, mean_q_kl: float, eps: float) -> tuple[float, float]:
    """L = -exp(log_kappa) (E[Q_KL] - eps) and dL/dlog_kappa."""
    kappa = math.exp(log_kappa)
    value = -kappa * (mean_q_kl - eps)
    return value, value


def kappa_dual_step(states, policy, Q_KL, dual: DualState, lr: float) -> DualState:
    _, grad = kappa_dual_loss(dual.log_kappa, expected_q(states, policy, Q_KL), dual.kl_budget_eps)
    return dataclasses.replace(dual, log_kappa=dual.log_kappa - lr * grad)


def mean_entropy(states, policy) -> float:
    probs, logp = _probs_logp(policy)
    d = _state_weights(states, probs.shape[0])
    return float(d @ -(probs * logp).sum(axis=1))


def naive_tuning_loss(log_kappa: float, entropy: float, target_entropy: float) -> tuple[float, float]:
    """Standard temperature loss -kappa (E[log pi] + target) = kappa (H - target), and its log-kappa derivative."""
    value = math.exp(log_kappa) * (entropy - target_entropy)
    return value, value


def naive_tuning_step(states, policy, dual: DualState, lr: float, target_entropy: float) -> DualState:
    _, grad = naive_tuning_loss(dual.log_kappa, mean_entropy(states, policy), target_entropy)
    return dataclasses.replace(dual, log_kappa=dual.log_kappa - lr * grad)


# --------------------------------------------------------------------------- VT-MPO


def vt_mpo_td_target(rec, policy, target_q, rng=None, mode: str = "exact", n_action_samples: int = 1):
    """y = R_n + (1 - done) u_boot E_{a ~ pi}[Qbar(s_boot, a)]."""
    probs, _ = _probs_logp(policy)
    target_q = np.asarray(target_q)
    s_boot = _get(rec, "s_boot")
    if mode == "sample":
        draws = [_next_expectation(target_q, probs, s_boot, rng, "sample") for _ in range(n_action_samples)]
        v = np.mean(draws, axis=0)
        if np.ndim(s_boot) == 0:
            v = v[0]
    else:
        v = _next_expectation(target_q, probs, s_boot, rng, "exact")
    return _get(rec, "R_n") + _bootstrap(rec, "u_boot") * v


def boltzmann_weights(prior_probs: np.ndarray, Q: np.ndarray, eta: float) -> np.ndarray:
    """q(a|s) proportional to pi0(a|s) exp(Q(s, a) / eta), rowwise."""
    logits = safe_log(prior_probs) + np.asarray(Q) / eta
    logits = np.where(prior_probs > 0, logits, -np.inf)
    return softmax(logits)


def _mean_kl(prior_probs, Q, eta) -> float:
    q = boltzmann_weights(prior_probs, Q, eta)
    kl = (q * (safe_log(q) - safe_log(prior_probs))).sum(axis=1)
    return float(kl.mean())


def estep_dual(eta: float, prior_probs: np.ndarray, Q: np.ndarray, eps: float) -> float:
    """g(eta) = eta eps + eta mean_s log E_{pi0} exp(Q / eta)."""
    logz = logsumexp(np.asarray(Q) / eta, b=prior_probs, axis=1)
    return float(eta * eps + eta * logz.mean())


def solve_eta(prior_probs: np.ndarray, Q: np.ndarray, eps: float, eta_init: float = 1.0) -> float:
    """Minimiser of the convex E-step dual.

    Stationarity is mean KL(q_eta || pi0) = eps; KL decreases in eta, so the root is
    bracketed in log eta (widening geometrically). If even the greedy limit stays
    within budget the constraint is inactive and the lower boundary is returned.
    """
    if eps <= 0:
        raise UsageError("mpo_kl_eps must be positive")
    h = lambda log_eta: _mean_kl(prior_probs, Q, math.exp(log_eta)) - eps
    lo = hi = math.log(eta_init)
    for _ in range(200):
        if h(hi) <= 0:
            break
        hi += 2.0
    else:
        raise NumericError("E-step temperature bracket failed to close from above")
    if h(hi) == 0:
        return math.exp(hi)
    for _ in range(200):
        if h(lo) > 0 or lo <= math.log(ETA_MIN):
            break
        lo -= 2.0
    lo = max(lo, math.log(ETA_MIN))
    if h(lo) <= 0:
        return math.exp(lo)
    return math.exp(brentq(h, lo, hi, xtol=1e-12, rtol=1e-12, maxiter=500))


def estep_dual_grad(eta: float, prior_probs: np.ndarray, Q: np.ndarray, eps: float) -> float:
    """dg/deta = eps - mean_s KL(q_eta || pi0)."""
    return eps - _mean_kl(prior_probs, Q, eta)


def mpo_e_step(states, policy_prior, Q, dual: DualState, rng=None):
    """Per-entry improvement distributions q* proportional to pi0 exp(Q / eta_E), eta_E solved for the KL budget."""
    prior_probs, _ = _probs_logp(policy_prior)
    states = np.atleast_1d(np.asarray(states, dtype=int))
    pb = prior_probs[states]
    qb = np.asarray(Q)[states]
    eta = solve_eta(pb, qb, dual.mpo_kl_eps, dual.eta_E)
    return boltzmann_weights(pb, qb, eta), dataclasses.replace(dual, eta_E=eta)


def mpo_m_step_loss(logits: np.ndarray, weights: np.ndarray, states) -> tuple[float, np.ndarray]:
    """Weighted negative log-likelihood -mean_i sum_a q_i(a) log pi(a|s_i) and its logit gradient."""
    states = np.atleast_1d(np.asarray(states, dtype=int))
    pol = SoftmaxPolicy(logits)
    logp = pol.log_probs
    loss = -float((weights * logp[states]).sum(axis=1).mean())
    grad = np.zeros_like(logp)
    np.add.at(grad, states, pol.probs[states] - weights)
    return loss, grad / states.size


def mpo_m_step(policy: SoftmaxPolicy, weights, states, lr: float, n_iters: int) -> SoftmaxPolicy:
    """Fit the tabular actor to the E-step targets by per-state normalised gradient steps.

    Each visited state moves by lr * (mean target - pi), the likelihood gradient
    rescaled by the state's batch share, so every state converges at the same rate.
    """
    states = np.atleast_1d(np.asarray(states, dtype=int))
    weights = np.asarray(weights, dtype=float)
    counts = np.bincount(states, minlength=policy.n_states).astype(float)
    target = np.zeros((policy.n_states, policy.n_actions))
    np.add.at(target, states, weights)
    visited = counts > 0
    target[visited] /= counts[visited, None]
    out = policy.copy()
    for _ in range(n_iters):
        probs = out.probs
        step = np.zeros_like(probs)
        step[visited] = target[visited] - probs[visited]
        out.logits = out.logits + lr * step
    return out


# --------------------------------------------------------------------------- checks


def gradient_check(loss_fn, params: np.ndarray, h: float = 1e-5) -> float:
    """max over entries of |analytic - central FD| / max(1, |FD|) for loss_fn(params) -> (value, grad)."""
    params = np.array(params, dtype=float)
    _, grad = loss_fn(params)
    grad = np.asarray(grad, dtype=float)
    worst = 0.0
    for idx in np.ndindex(params.shape):
        plus = params.copy()
        minus = params.copy()
        plus[idx] += h
        minus[idx] -= h
        fd = (loss_fn(plus)[0] - loss_fn(minus)[0]) / (2.0 * h)
        worst = max(worst, abs(grad[idx] - fd) / max(1.0, abs(fd)))
    return worst


def entropy_loss(logits: np.ndarray) -> tuple[float, np.ndarray]:
    """Total softmax entropy sum_s H(pi(.|s)) and its logit gradient -pi (log pi + H)."""
    pol = SoftmaxPolicy(logits)
    p, lp = pol.probs, pol.log_probs
    H = -(p * lp).sum(axis=1, keepdims=True)
    return float(H.sum()), -p * (lp + H)
