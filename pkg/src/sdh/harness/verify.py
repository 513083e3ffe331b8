"""Named property suites driving the oracle, Bellman, replay and gradient checks; each returns a JSON-able report."""

from __future__ import annotations

import math

import numpy as np

from sdh import bellman, oracle
from sdh.agents import losses
from sdh.continuation import Exponential
from sdh.errors import UsageError
from sdh.mdp import build_bernoulli_cost_mdp, build_hazard_chain, random_mdp
from sdh.policy import SoftmaxPolicy
from sdh.replay import WindowStep, compress_window

COUNTEREXAMPLE_ARGMAX = (0.707, 0.984)


def _check(name, observed, expected, passed) -> dict:
    return {"name": name, "observed": observed, "expected": expected, "passed": bool(passed)}


def _report(suite: str, checks: list[dict], **extra) -> dict:
    return {"suite": suite, "passed": all(c["passed"] for c in checks), "checks": checks, **extra}


def random_policy(rng, n_states: int, n_actions: int) -> SoftmaxPolicy:
    return SoftmaxPolicy(rng.normal(0.0, 1.5, size=(n_states, n_actions)))


def random_instance(rng, n_states=3, n_actions=2):
    mdp = random_mdp(rng, n_states, n_actions)
    cont = Exponential(float(rng.uniform(0.0, 2.0)))
    return mdp, cont, random_policy(rng, n_states, n_actions)


def suite_counterexample(tol: float = 0.005, **_) -> dict:
    p_as, p_asn = oracle.counterexample_argmax(0.9, 1.0, 0.4)
    checks = [
        _check("argmax J_AS", p_as, COUNTEREXAMPLE_ARGMAX[0], abs(p_as - COUNTEREXAMPLE_ARGMAX[0]) <= tol),
        _check("argmax J_AS-N", p_asn, COUNTEREXAMPLE_ARGMAX[1], abs(p_asn - COUNTEREXAMPLE_ARGMAX[1]) <= tol),
    ]
    return _report("counterexample", checks)


def suite_contraction(n_instances: int = 1000, seed: int = 0, **_) -> dict:
    """One random (MDP, alpha, policy, V, W) tuple per instance; the modulus must not exceed gamma."""
    rng = np.random.default_rng(seed)
    worst_excess = -math.inf
    worst = None
    for _ in range(n_instances):
        mdp, cont, pol = random_instance(rng, int(rng.integers(2, 6)), int(rng.integers(1, 4)))
        shaped = bellman.shape(mdp, cont)
        mod = bellman.contraction_check(shaped, pol, 1, rng)
        if mod - mdp.gamma > worst_excess:
            worst_excess, worst = mod - mdp.gamma, (mod, mdp.gamma)
    checks = [_check("max(modulus - gamma)", worst_excess, "<= 1e-12", worst_excess <= 1e-12)]
    return _report("contraction", checks, n_instances=n_instances, worst_pair=worst)


def suite_gate_mc(n_mdps: int = 10, n_samples: int = 1_000_000, n_sigma: float = 4.0, seed: int = 1, **_) -> dict:
    rng = np.random.default_rng(seed)
    checks = []
    for i in range(n_mdps):
        mdp, cont, pol = random_instance(rng, 3, 2)
        kappa = float(rng.uniform(0.0, 1.0))
        for sem, exact_fn in (("AS", oracle.j_as_exact), ("VT", oracle.j_vt_exact)):
            spec = oracle.ObjectiveSpec(sem, kappa)
            exact = exact_fn(mdp, pol, cont, spec)
            est = oracle.mc_elbo_estimate(mdp, pol, cont, spec, n_samples, rng)
            z = abs(est.mean - exact) / est.stderr
            checks.append(_check(f"mdp{i} {sem}", {"mc": est.mean, "stderr": est.stderr, "z": z}, exact, z <= n_sigma))
    return _report("gate-mc", checks)


def suite_two_critic(n_instances: int = 20, seed: int = 2, kappas=(0.0, 0.5, 2.0), **_) -> dict:
    rng = np.random.default_rng(seed)
    checks = []
    for i in range(n_instances):
        mdp, cont, pol = random_instance(rng, int(rng.integers(2, 5)), int(rng.integers(2, 4)))
        shaped = bellman.shape(mdp, cont)
        critics = bellman.two_critic_fixed_point(pol, shaped, math.log(mdp.n_actions), tol=1e-13)
        for kappa in kappas:
            v0 = float(mdp.initial_dist @ (pol.probs * bellman.combine_kappa(critics, kappa)).sum(axis=1))
            exact = oracle.j_as_exact(mdp, pol, cont, oracle.ObjectiveSpec("AS", kappa, tail_tol=1e-13))
            checks.append(_check(f"instance{i} kappa={kappa}", v0, exact, abs(v0 - exact) <= 1e-8))
    return _report("two-critic", checks)


def random_hazard_chain(rng):
    n = int(rng.integers(4, 11))
    k = int(rng.integers(1, n - 1))
    hazards = tuple(sorted(rng.choice(np.arange(1, n - 1), size=min(k, n - 2), replace=False).tolist()))
    cost = float(rng.choice([0.5, 1.0, 2.0]))
    mdp = build_hazard_chain(n, hazards, cost, gamma=0.9, slip=float(rng.uniform(0.0, 0.3)))
    return mdp, cost


def chance_instance(mdp, policy, lam, H, b, n_rollouts, rng) -> dict:
    S_H = oracle.survival_statistic(mdp, policy, lam, H, "exact")
    cert = oracle.chance_bound(S_H, lam, b, H)
    totals = oracle.sample_cost_totals(mdp, policy, H, n_rollouts, rng)
    freq = float(np.mean(totals >= b - 1e-12))
    return {"S_H": S_H, "bound": cert.bound, "freq": freq}


def suite_chance_bound(n_chains: int = 50, n_rollouts: int = 100_000, seed: int = 3, **_) -> dict:
    rng = np.random.default_rng(seed)
    checks = []
    bern = build_bernoulli_cost_mdp(0.1)
    one = np.ones((2, 1))
    r = chance_instance(bern, one, 1.0, 5, 1.0, n_rollouts, rng)
    checks.append(_check("bernoulli q=0.1 H=5 lambda=1 b=1", r, 1 - 0.9**5, r["bound"] >= r["freq"] and r["bound"] >= 1 - 0.9**5))
    for i in range(n_chains):
        mdp, cost = random_hazard_chain(rng)
        pol = random_policy(rng, mdp.n_states, 2)
        lam = float(rng.uniform(0.25, 2.0))
        H = int(rng.integers(5, 21))
        r = chance_instance(mdp, pol, lam, H, 1.5 * cost, n_rollouts, rng)
        checks.append(_check(f"chain{i}", r, "bound >= freq", r["bound"] >= r["freq"]))
    return _report("chance-bound", checks)


def brute_force_window(r, alpha, gamma):
    n = len(r)
    R = 0.0
    for k in range(n):
        prefix = 1.0
        for j in range(k):
            prefix = prefix * (gamma * alpha[j])
        R += prefix * (alpha[k] * r[k])
    u = 1.0
    for j in range(n):
        u = u * (gamma * alpha[j])
    return R, u


def suite_replay(n_windows: int = 10_000, seed: int = 4, **_) -> dict:
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(n_windows):
        n = int(rng.integers(1, 9))
        gamma = float(rng.uniform(0.5, 0.999))
        r = rng.random(n) * 3
        alpha = np.where(rng.random(n) < 0.2, 1.0, rng.random(n))
        rec = compress_window([WindowStep(0, 0, float(r[k]), 0.0, float(alpha[k])) for k in range(n)], gamma, 0)
        R, u = brute_force_window(r.tolist(), alpha.tolist(), gamma)
        mismatches += (rec.R_n != R) or (rec.u_boot != u)
    return _report("replay", [_check("bit-exact mismatches", mismatches, 0, mismatches == 0)], n_windows=n_windows)


def suite_gradients(n_instances: int = 100, seed: int = 5, tol: float = 1e-4, **_) -> dict:
    rng = np.random.default_rng(seed)
    worst = {"actor": 0.0, "actor_gi": 0.0, "sac_actor": 0.0, "kappa_dual": 0.0, "naive_tuning": 0.0, "m_step": 0.0, "e_step_dual": 0.0}
    for _ in range(n_instances):
        S, A = int(rng.integers(1, 5)), int(rng.integers(2, 5))
        states = rng.integers(0, S, size=int(rng.integers(1, 12)))
        QR, QKL = rng.normal(size=(S, A)), rng.normal(size=(S, A))
        kappa = float(rng.uniform(0.0, 3.0))
        logits = rng.normal(size=(S, A))
        worst["actor"] = max(worst["actor"], losses.gradient_check(
            lambda L: losses.as_sac_actor_loss(states, SoftmaxPolicy(L), QR, QKL, kappa), logits))
        worst["actor_gi"] = max(worst["actor_gi"], losses.gradient_check(
            lambda L: losses.as_sac_actor_loss(states, SoftmaxPolicy(L), QR, QKL, kappa, gi_variant=True), logits))
        worst["sac_actor"] = max(worst["sac_actor"], losses.gradient_check(
            lambda L: _sac_total_loss(states, L, QR, kappa), logits))
        eps, x = float(rng.uniform(0, 2)), float(rng.normal())
        worst["kappa_dual"] = max(worst["kappa_dual"], losses.gradient_check(
            lambda v: _scalar(losses.kappa_dual_loss, v, x, eps), np.array([rng.normal()])))
        worst["naive_tuning"] = max(worst["naive_tuning"], losses.gradient_check(
            lambda v: _scalar(losses.naive_tuning_loss, v, x, eps), np.array([rng.normal()])))
        weights = rng.dirichlet(np.ones(A), size=states.size)
        worst["m_step"] = max(worst["m_step"], losses.gradient_check(
            lambda L: losses.mpo_m_step_loss(L, weights, states), logits))
        prior = rng.dirichlet(np.ones(A), size=states.size)
        Qb = rng.normal(size=(states.size, A))
        worst["e_step_dual"] = max(worst["e_step_dual"], losses.gradient_check(
            lambda v: (losses.estep_dual(float(v[0]), prior, Qb, eps + 0.05), np.array([losses.estep_dual_grad(float(v[0]), prior, Qb, eps + 0.05)])),
            np.array([float(rng.uniform(0.3, 3.0))])))
    checks = [_check(k, v, f"< {tol}", v < tol) for k, v in worst.items()]
    return _report("gradients", checks, n_instances=n_instances)


def _scalar(fn, v, x, eps):
    value, grad = fn(float(v[0]), x, eps)
    return value, np.array([grad])


def _sac_total_loss(states, logits, Q, kappa):
    """Single-critic loss including the log-pi path, for finite differencing."""
    return losses.sac_actor_loss(states, SoftmaxPolicy(logits), Q, kappa)


SUITES = {
    "counterexample": suite_counterexample,
    "contraction": suite_contraction,
    "gate-mc": suite_gate_mc,
    "two-critic": suite_two_critic,
    "chance-bound": suite_chance_bound,
    "replay": suite_replay,
    "gradients": suite_gradients,
}

QUICK = {
    "contraction": {"n_instances": 100},
    "gate-mc": {"n_mdps": 2, "n_samples": 100_000},
    "two-critic": {"n_instances": 5},
    "chance-bound": {"n_chains": 5, "n_rollouts": 20_000},
    "replay": {"n_windows": 1000},
    "gradients": {"n_instances": 10},
}


def run_suite(name: str, quick: bool = False, **params) -> dict:
    try:
        fn = SUITES[name]
    except KeyError:
        raise UsageError(f"unknown suite {name!r}; expected one of {sorted(SUITES)}") from None
    kwargs = {**(QUICK.get(name, {}) if quick else {}), **params}
    return fn(**kwargs)
