"""Tabular AS-SAC and VT-MPO learners: parameter tables plus one gradient step per call."""

from __future__ import annotations

import math

import numpy as np

from sdh.agents import losses
from sdh.agents.config import DualState, LearnerConfig
from sdh.policy import SoftmaxPolicy


def regress(table: np.ndarray, s: np.ndarray, a: np.ndarray, y: np.ndarray, lr: float) -> float:
    """Move each visited Q(s, a) by lr times the mean residual of its batch entries; returns the MSE."""
    resid = y - table[s, a]
    total = np.zeros_like(table)
    count = np.zeros_like(table)
    np.add.at(total, (s, a), resid)
    np.add.at(count, (s, a), 1.0)
    hit = count > 0
    table[hit] += lr * total[hit] / count[hit]
    return float(np.mean(resid**2))


def polyak(target: np.ndarray, source: np.ndarray, tau: float) -> None:
    target *= 1.0 - tau
    target += tau * source


class AsSacLearner:
    """Absorbing-state SAC with twin tabular critics.

    The full and naive-critic variants keep the kappa-free pair (Q_R, Q_KL) and
    differ only in H_tgt; the const-kappa and naive-tuning variants keep one soft
    critic with living cost c_LC.
    """

    def __init__(self, n_states: int, n_actions: int, config: LearnerConfig):
        self.config = config
        self.policy = SoftmaxPolicy.uniform(n_states, n_actions)
        self.ell_c = math.log(n_actions)
        self.H_tgt = self.ell_c if config.living_cost_mode() == "H_tgt" else 0.0
        self.target_entropy = config.target_entropy_frac * self.ell_c
        self.dual = DualState(
            log_kappa=math.log(config.init_kappa), kl_budget_eps=config.kl_budget_eps, H_tgt=self.H_tgt
        )
        shape = (n_states, n_actions)
        if config.two_critics:
            self.tables = {k: np.zeros(shape) for k in ("QR1", "QR2", "QKL1", "QKL2", "QR1_t", "QR2_t", "QKL1_t", "QKL2_t")}
        else:
            self.tables = {k: np.zeros(shape) for k in ("Q1", "Q2", "Q1_t", "Q2_t")}

    def behavior_probs(self) -> np.ndarray:
        return self.policy.probs

    def update(self, batch: dict, rng: np.random.Generator) -> float:
        cfg, T = self.config, self.tables
        s, a = batch["s"], batch["a"]
        kappa = self.dual.kappa
        if cfg.two_critics:
            y_r, y_kl = losses.as_sac_targets_two(
                batch, self.policy, (T["QR1_t"], T["QR2_t"]), (T["QKL1_t"], T["QKL2_t"]), self.H_tgt, rng, cfg.target_mode
            )
            loss = sum(regress(T[k], s, a, y_r, cfg.critic_lr) for k in ("QR1", "QR2"))
            loss += sum(regress(T[k], s, a, y_kl, cfg.critic_lr) for k in ("QKL1", "QKL2"))
            q_r, q_kl = np.minimum(T["QR1"], T["QR2"]), np.minimum(T["QKL1"], T["QKL2"])
            _, grad = losses.as_sac_actor_loss(s, self.policy, q_r, q_kl, kappa, cfg.gi_variant)
            self.policy.logits = self.policy.logits - cfg.actor_lr * grad
            if cfg.dual_lr > 0:
                self.dual = losses.kappa_dual_step(s, self.policy, q_kl, self.dual, cfg.dual_lr)
            for k in ("QR1", "QR2", "QKL1", "QKL2"):
                polyak(T[k + "_t"], T[k], cfg.tau)
            return loss / 4.0
        y = losses.as_sac_target_single(batch, self.policy, (T["Q1_t"], T["Q2_t"]), kappa, self.H_tgt, rng, cfg.target_mode)
        loss = sum(regress(T[k], s, a, y, cfg.critic_lr) for k in ("Q1", "Q2"))
        _, grad = losses.sac_actor_loss(s, self.policy, np.minimum(T["Q1"], T["Q2"]), kappa)
        self.policy.logits = self.policy.logits - cfg.actor_lr * grad
        if cfg.variant == "AS_SAC_naive_tuning" and cfg.dual_lr > 0:
            self.dual = losses.naive_tuning_step(s, self.policy, self.dual, cfg.dual_lr, self.target_entropy)
        for k in ("Q1", "Q2"):
            polyak(T[k + "_t"], T[k], cfg.tau)
        return loss / 2.0

    def metrics(self) -> dict:
        return {"kappa": self.dual.kappa, "eta_E": None}

    def state_dict(self) -> dict:
        return {
            "logits": self.policy.logits.tolist(),
            "tables": {k: v.tolist() for k, v in self.tables.items()},
            "dual": vars(self.dual).copy(),
        }

    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.policy.logits))) and all(np.all(np.isfinite(v)) for v in self.tables.values()) and math.isfinite(self.dual.log_kappa)


class VtMpoLearner:
    """Virtual-termination MPO: unregularised survival TD(n) critic and KL-budgeted E/M policy steps.

    The E-step prior is a Polyak-averaged target actor.
    """

    def __init__(self, n_states: int, n_actions: int, config: LearnerConfig):
        self.config = config
        self.policy = SoftmaxPolicy.uniform(n_states, n_actions)
        self.prior = SoftmaxPolicy.uniform(n_states, n_actions)
        self.dual = DualState(eta_E=config.init_eta, mpo_kl_eps=config.mpo_kl_eps)
        self.tables = {"Q": np.zeros((n_states, n_actions)), "Q_t": np.zeros((n_states, n_actions))}
        self._updates = 0

    def behavior_probs(self) -> np.ndarray:
        return self.policy.probs

    def update(self, batch: dict, rng: np.random.Generator) -> float:
        cfg, T = self.config, self.tables
        s, a = batch["s"], batch["a"]
        y = losses.vt_mpo_td_target(batch, self.policy, T["Q_t"], rng, cfg.target_mode)
        loss = regress(T["Q"], s, a, y, cfg.critic_lr)
        polyak(T["Q_t"], T["Q"], cfg.tau)
        self._updates += 1
        if self._updates % cfg.mpo_every == 0:
            weights, self.dual = losses.mpo_e_step(s, self.prior, T["Q"], self.dual)
            self.policy = losses.mpo_m_step(self.policy, weights, s, cfg.m_step_lr, cfg.m_step_iters)
        self.prior.logits = (1.0 - cfg.tau) * self.prior.logits + cfg.tau * self.policy.logits
        return loss

    def metrics(self) -> dict:
        return {"kappa": None, "eta_E": self.dual.eta_E}

    def state_dict(self) -> dict:
        return {
            "logits": self.policy.logits.tolist(),
            "prior_logits": self.prior.logits.tolist(),
            "tables": {k: v.tolist() for k, v in self.tables.items()},
            "dual": vars(self.dual).copy(),
        }

    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.policy.logits))) and all(np.all(np.isfinite(v)) for v in self.tables.values())


def make_learner(n_states: int, n_actions: int, config: LearnerConfig):
    cls = AsSacLearner if config.is_as_sac else VtMpoLearner
    return cls(n_states, n_actions, config)
