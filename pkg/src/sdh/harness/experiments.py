"""Desk-scale learning experiments shared by the scripts and the acceptance suite."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sdh.agents import LearnerConfig, train
from sdh.continuation import Exponential, HardIndicator, Schedule
from sdh.mdp import build_counterexample_mdp, build_hazard_chain

SWEEP_LAMBDAS = (0.0, 0.3, 0.6, 0.9)
SWEEP_AGENTS = ("AS_SAC_full", "VT_MPO")


def counterexample_learning(variant: str, seed: int, steps: int = 20_000, gamma: float = 0.9, r: float = 0.4, kappa: float = 1.0) -> float:
    """Train on the one-state continue/stop problem with kappa held fixed; returns the learned continue probability."""
    env = build_counterexample_mdp(r, gamma)
    cfg = LearnerConfig(variant=variant, dual_lr=0.0, init_kappa=kappa, batch_size=32)
    res = train(env, HardIndicator(), cfg, seed, steps, steps, eval_episodes=1)
    return float(res.learner.policy.probs[0, 0])


def sweep_chain():
    return build_hazard_chain(8, (3, 4), 1.0, gamma=0.95, side_reward=0.3)


@dataclass
class SweepResult:
    agent: str
    lam_end: float
    final_costs: list[float]
    final_rewards: list[float]

    @property
    def mean_cost(self) -> float:
        return float(np.mean(self.final_costs))


def lambda_sweep_run(agent: str, lam_end: float, seeds=range(5), steps: int = 10_000) -> SweepResult:
    """Linear lambda schedule 0 -> lam_end over 10%..50% of training; final greedy cost per seed."""
    env = sweep_chain()
    costs, rewards = [], []
    for seed in seeds:
        cfg = LearnerConfig(variant=agent, init_kappa=0.1, max_episode_steps=50)
        sched = Schedule("lambda", "linear", 0.0, lam_end, steps // 10, steps // 2)
        res = train(env, Exponential(0.0), cfg, seed, steps, steps, schedule=sched, eval_episodes=1)
        costs.append(res.metrics[-1]["cost_return"])
        rewards.append(res.metrics[-1]["reward_return"])
    return SweepResult(agent, lam_end, costs, rewards)


def is_non_increasing(values, tol: float = 1e-12) -> bool:
    return all(b <= a + tol for a, b in zip(values, values[1:]))
