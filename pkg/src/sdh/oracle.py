"""Ground-truth objective values: closed forms, forward occupancy recursions and gate-explicit Monte Carlo.

These routines share no code path with :mod:`sdh.bellman` (which iterates
backward operators); tests compare the two.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from sdh.errors import UsageError
from sdh.mdp import FiniteMdp, rollout_batch
from sdh.policy import as_probs, safe_log

SEMANTICS = ("AS", "VT", "SurvOnly")


@dataclass(frozen=True)
class ObjectiveSpec:
    """Objective settings. ``prior_log_const`` defaults to log|A| (normalized uniform prior).

    ``horizon_H=None`` picks the smallest horizon meeting ``tail_tol``.
    """

    semantics: str = "AS"
    kappa: float = 0.0
    prior_log_const: float | None = None
    horizon_H: int | None = None
    tail_tol: float = 1e-12

    def __post_init__(self):
        if self.semantics not in SEMANTICS:
            raise UsageError(f"semantics must be one of {SEMANTICS}")
        if self.kappa < 0:
            raise UsageError("kappa must be nonnegative")
        if self.tail_tol <= 0:
            raise UsageError("tail_tol must be positive")

    def ell_c(self, n_actions: int) -> float:
        return math.log(n_actions) if self.prior_log_const is None else self.prior_log_const


class ExactValue(NamedTuple):
    value: float
    tail_bound: float


@dataclass(frozen=True)
class ChanceCertificate:
    lam: float
    threshold_b: float
    horizon_H: int | None
    S_H: float
    bound: float


class McEstimate(NamedTuple):
    mean: float
    stderr: float

    def brackets(self, target: float, n_sigma: float = 4.0) -> bool:
        return abs(self.mean - target) <= n_sigma * self.stderr + 1e-12


def alpha_table(mdp: FiniteMdp, cont) -> np.ndarray:
    alpha = np.asarray(cont(mdp.costs), dtype=float)
    if alpha.shape != (mdp.n_states, mdp.n_actions) or np.any((alpha < 0) | (alpha > 1)):
        raise UsageError("continuation model must yield alpha in [0, 1] for every (s, a)")
    return alpha


def required_horizon(gamma: float, bound_per_step: float, tail_tol: float) -> int:
    """Smallest H with gamma^H * bound / (1 - gamma) <= tail_tol."""
    if bound_per_step <= 0:
        return 1
    need = math.log(tail_tol * (1.0 - gamma) / bound_per_step) / math.log(gamma)
    return max(1, math.ceil(need))


def _horizon(mdp: FiniteMdp, spec: ObjectiveSpec, bound_per_step: float) -> int:
    need = required_horizon(mdp.gamma, bound_per_step, spec.tail_tol)
    if spec.horizon_H is None:
        return need
    if spec.horizon_H < need:
        raise UsageError(f"horizon {spec.horizon_H} too small for tail_tol {spec.tail_tol}; need H >= {need}")
    return spec.horizon_H


def _tail(gamma: float, H: int, bound: float) -> float:
    return gamma**H * bound / (1.0 - gamma)


class _Sums(NamedTuple):
    reward: float
    kl_as: float
    kl_vt: float
    decision_mass: float
    entropy_as: float


def _occupancy_sums(mdp: FiniteMdp, probs: np.ndarray, alpha: np.ndarray, ell_c: float, H: int) -> _Sums:
    """Forward recursion for the first H steps.

    ``mu`` carries E[w_t 1{s_t = s}] with w_t = gamma^t prod_{k<t} alpha_k (AS decision weight);
    ``nu`` carries E[gamma^t 1{s_t = s}] (VT decision weight).
    """
    P, r, g = mdp.transition, mdp.reward, mdp.gamma
    logp = safe_log(probs)
    kl_state = (probs * (logp + ell_c)).sum(axis=1)  # E_a[log pi + ell_c] per state
    ent_state = -(probs * logp).sum(axis=1)
    reward_state = (probs * alpha * r).sum(axis=1)
    M_as = np.einsum("sa,sa,sat->st", probs, g * alpha, P)
    M_vt = np.einsum("sa,sat->st", probs, g * P)
    mu = mdp.initial_dist.copy()
    nu = mdp.initial_dist.copy()
    acc = np.zeros(5)
    for _ in range(H):
        acc += (mu @ reward_state, mu @ kl_state, nu @ kl_state, mu.sum(), mu @ ent_state)
        mu = mu @ M_as
        nu = nu @ M_vt
    return _Sums(*acc)


def _per_step_bounds(mdp, probs, ell_c):
    logp = safe_log(probs)
    kl = np.abs((probs * (logp + ell_c)).sum(axis=1)).max()
    return float(np.abs(mdp.reward).max()), float(kl)


def j_surv_exact(mdp: FiniteMdp, policy, cont, spec: ObjectiveSpec | None = None) -> ExactValue:
    spec = spec or ObjectiveSpec(semantics="SurvOnly")
    probs = as_probs(policy)
    rmax, _ = _per_step_bounds(mdp, probs, 0.0)
    H = _horizon(mdp, spec, rmax)
    sums = _occupancy_sums(mdp, probs, alpha_table(mdp, cont), 0.0, H)
    return ExactValue(float(sums.reward), _tail(mdp.gamma, H, rmax))


def _j_exact(mdp, policy, cont, spec, which: str) -> float:
    probs = as_probs(policy)
    ell_c = spec.ell_c(mdp.n_actions)
    rmax, klmax = _per_step_bounds(mdp, probs, ell_c)
    H = _horizon(mdp, spec, rmax + spec.kappa * klmax)
    sums = _occupancy_sums(mdp, probs, alpha_table(mdp, cont), ell_c, H)
    kl = sums.kl_as if which == "AS" else sums.kl_vt
    return float(sums.reward - spec.kappa * kl)


def j_as_exact(mdp: FiniteMdp, policy, cont, spec: ObjectiveSpec) -> float:
    """Absorbing-state objective: survival return minus KL weighted by gamma^t prod_{k<t} alpha_k."""
    return _j_exact(mdp, policy, cont, spec, "AS")


def j_vt_exact(mdp: FiniteMdp, policy, cont, spec: ObjectiveSpec) -> float:
    """Virtual-termination objective: survival return minus KL weighted by plain gamma^t."""
    return _j_exact(mdp, policy, cont, spec, "VT")


def decision_mass_Z(mdp: FiniteMdp, policy, cont, spec: ObjectiveSpec | None = None) -> float:
    spec = spec or ObjectiveSpec()
    probs = as_probs(policy)
    H = _horizon(mdp, spec, 1.0)
    return float(_occupancy_sums(mdp, probs, alpha_table(mdp, cont), 0.0, H).decision_mass)


def as_entropy_mass(mdp: FiniteMdp, policy, cont, spec: ObjectiveSpec | None = None) -> float:
    """E[sum_t w_t H(pi(.|s_t))], the survival-weighted policy entropy."""
    spec = spec or ObjectiveSpec()
    probs = as_probs(policy)
    H = _horizon(mdp, spec, max(math.log(mdp.n_actions), 1e-300))
    return float(_occupancy_sums(mdp, probs, alpha_table(mdp, cont), 0.0, H).entropy_as)


# --------------------------------------------------------------------------- counterexample


def binary_entropy(p: float) -> float:
    return -(p * math.log(p) if p > 0 else 0.0) - ((1 - p) * math.log(1 - p) if p < 1 else 0.0)


def counterexample_objectives(p: float, gamma: float, kappa: float, r: float) -> tuple[float, float]:
    """Closed-form (J_AS, J_AS without living cost) for the continue-probability-p policy."""
    if not 0.0 < p < 1.0:
        raise UsageError("p must lie in (0, 1)")
    num = p * r + kappa * binary_entropy(p)
    denom = 1.0 - gamma * p
    return (num - kappa * math.log(2.0)) / denom, num / denom


def argmax_scan(f: Callable[[float], float], lo: float, hi: float, grid_n: int = 200, refine_iters: int = 80) -> float:
    """Maximise ``f`` on (lo, hi): cell-midpoint grid scan, then golden-section refinement.

    Ties on the grid go to the lowest index, and the refined point is kept only if
    it strictly improves on the best grid value.
    """
    if not hi > lo or grid_n < 1:
        raise UsageError("need hi > lo and grid_n >= 1")
    width = (hi - lo) / grid_n
    xs = lo + (np.arange(grid_n) + 0.5) * width
    vals = np.array([f(float(x)) for x in xs])
    i = int(np.argmax(vals))
    best_x, best_v = float(xs[i]), float(vals[i])
    a, b = max(lo, best_x - width), min(hi, best_x + width)
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(refine_iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = (a + b) / 2.0
    return x if f(x) > best_v else best_x


def counterexample_argmax(gamma: float = 0.9, kappa: float = 1.0, r: float = 0.4) -> tuple[float, float]:
    """Maximising continue-probabilities of (J_AS, J_AS-N)."""
    p_as = argmax_scan(lambda p: counterexample_objectives(p, gamma, kappa, r)[0], 0.0, 1.0)
    p_asn = argmax_scan(lambda p: counterexample_objectives(p, gamma, kappa, r)[1], 0.0, 1.0)
    return p_as, p_asn


# --------------------------------------------------------------------------- chance bounds

MAX_COST_SUPPORT = 20000


def cost_distribution_exact(mdp: FiniteMdp, policy, H: int, decimals: int = 12) -> dict[float, float] | None:
    """Exact law of C_H = sum_{t<H} sum_i c_i(s_t, a_t); None if the support grows too large."""
    probs = as_probs(policy)
    total_cost = mdp.costs.sum(axis=0)
    dist: dict[tuple[int, float], float] = {}
    for s in np.flatnonzero(mdp.initial_dist):
        dist[(int(s), 0.0)] = float(mdp.initial_dist[s])
    for _ in range(H):
        nxt: dict[tuple[int, float], float] = {}
        for (s, c), m in dist.items():
            for a in np.flatnonzero(probs[s]):
                c2 = round(float(c + total_cost[s, a]), decimals)
                w = m * probs[s, a]
                for s2 in np.flatnonzero(mdp.transition[s, a]):
                    key = (int(s2), c2)
                    nxt[key] = nxt.get(key, 0.0) + w * mdp.transition[s, a, s2]
        dist = nxt
        if len(dist) > MAX_COST_SUPPORT:
            return None
    law: dict[float, float] = {}
    for (_, c), m in dist.items():
        law[c] = law.get(c, 0.0) + m
    return law


def sample_cost_totals(mdp: FiniteMdp, policy, H: int, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    states, actions = rollout_batch(mdp, as_probs(policy), n_samples, H, rng)
    return mdp.costs.sum(axis=0)[states, actions].sum(axis=1)


def survival_statistic(
    mdp: FiniteMdp,
    policy,
    lam: float,
    H: int,
    mode: str = "exact",
    n_samples: int = 100_000,
    rng: np.random.Generator | None = None,
) -> float:
    """S_H(lambda) = E[exp(-lambda C_H)]."""
    if mode not in ("exact", "mc"):
        raise UsageError("mode must be 'exact' or 'mc'")
    if mode == "exact":
        law = cost_distribution_exact(mdp, policy, H)
        if law is not None:
            return float(min(1.0, sum(m * math.exp(-lam * c) for c, m in law.items())))
        warnings.warn("cost support too large for exact survival statistic; falling back to Monte Carlo")
    rng = rng if rng is not None else np.random.default_rng(0)
    return float(np.exp(-lam * sample_cost_totals(mdp, policy, H, n_samples, rng)).mean())


def chance_bound(S_H: float, lam: float, b: float, horizon_H: int | None = None) -> ChanceCertificate:
    """Upper bound on P(C_H >= b) from the survival statistic: (1 - S_H) / (1 - exp(-lambda b))."""
    if lam * b <= 0 or lam <= 0 or b <= 0:
        raise UsageError("chance bound needs lambda > 0 and b > 0")
    if not 0.0 <= S_H <= 1.0:
        raise UsageError("S_H must lie in [0, 1]")
    bound = max(0.0, (1.0 - S_H) / -math.expm1(-lam * b))
    return ChanceCertificate(lam, b, horizon_H, S_H, bound)


# --------------------------------------------------------------------------- gate-explicit Monte Carlo


def _sample_actions(cum_pi, s, rng):
    return np.minimum((rng.random(s.shape[0])[:, None] >= cum_pi[s]).sum(axis=1), cum_pi.shape[1] - 1)


def _sample_next(cum_P, s, a, rng):
    return np.minimum((rng.random(s.shape[0])[:, None] >= cum_P[s, a]).sum(axis=1), cum_P.shape[2] - 1)


def mc_gate_estimate(mdp, policy, cont, t: int, semantics: str, n_samples: int, rng) -> tuple[float, float]:
    """Monte Carlo (E[Gamma_t], E[A_t]) with explicit Bernoulli continuation and horizon gates."""
    if semantics not in ("AS", "VT"):
        raise UsageError("semantics must be 'AS' or 'VT'")
    if n_samples < 1:
        raise UsageError("n_samples must be >= 1")
    probs = as_probs(policy)
    alpha = alpha_table(mdp, cont)
    cum_pi = np.cumsum(probs, axis=1)
    cum_P = mdp._cum_transition
    s = np.minimum(np.searchsorted(mdp._cum_initial, rng.random(n_samples), side="right"), mdp.n_states - 1)
    horizon_alive = np.ones(n_samples, dtype=bool)  # H_k
    feasible = np.ones(n_samples, dtype=bool)  # prod_{j<k} C_j
    for k in range(t + 1):
        a = _sample_actions(cum_pi, s, rng)
        C = rng.random(n_samples) < alpha[s, a]
        if k == t:
            gamma_t = horizon_alive & feasible & C
            A_t = horizon_alive & feasible if semantics == "AS" else horizon_alive
            return float(gamma_t.mean()), float(A_t.mean())
        D = rng.random(n_samples) >= mdp.gamma  # stop with prob 1 - gamma
        horizon_alive &= ~D
        feasible &= C
        s = _sample_next(cum_P, s, a, rng)
    raise AssertionError("unreachable")


def mc_elbo_estimate(
    mdp: FiniteMdp,
    policy,
    cont,
    spec: ObjectiveSpec,
    n_samples: int,
    rng: np.random.Generator,
    chunk: int = 250_000,
) -> McEstimate:
    """Sample (tau, C, D) from the variational model and average
    sum_t Gamma_t r_t - kappa * sum_t A_t (log pi - log pi0).
    """
    if spec.semantics not in ("AS", "VT"):
        raise UsageError("ELBO estimate needs AS or VT semantics")
    probs = as_probs(policy)
    alpha = alpha_table(mdp, cont)
    logratio = safe_log(probs) + spec.ell_c(mdp.n_actions)
    cum_pi = np.cumsum(probs, axis=1)
    cum_P = mdp._cum_transition
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        vals = _elbo_chunk(mdp, alpha, logratio, cum_pi, cum_P, spec, m, rng)
        total += vals.sum()
        total_sq += (vals**2).sum()
        done += m
    mean = total / n_samples
    var = max(total_sq / n_samples - mean**2, 0.0) * n_samples / max(n_samples - 1, 1)
    return McEstimate(float(mean), float(math.sqrt(var / n_samples)))


def _elbo_chunk(mdp, alpha, logratio, cum_pi, cum_P, spec, m, rng) -> np.ndarray:
    vals = np.zeros(m)
    idx = np.arange(m)
    s = np.minimum(np.searchsorted(mdp._cum_initial, rng.random(m), side="right"), mdp.n_states - 1)
    feasible = np.ones(m, dtype=bool)
    as_sem = spec.semantics == "AS"
    while idx.size:
        a = _sample_actions(cum_pi, s, rng)
        C = rng.random(idx.size) < alpha[s, a]
        decision = feasible if as_sem else np.ones(idx.size, dtype=bool)
        contrib = np.where(feasible & C, mdp.reward[s, a], 0.0)
        if spec.kappa:
            contrib = contrib - spec.kappa * np.where(decision, logratio[s, a], 0.0)
        vals[idx] += contrib
        feasible = feasible & C
        alive = rng.random(idx.size) < mdp.gamma
        if as_sem:
            alive &= feasible
        s = _sample_next(cum_P, s[alive], a[alive], rng)
        idx, feasible = idx[alive], feasible[alive]
    return vals
