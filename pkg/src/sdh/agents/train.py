"""Training loop shared by both agent families: collect, store, update, evaluate."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from sdh.agents.config import LearnerConfig
from sdh.agents.learners import make_learner
from sdh.continuation import CatNormalized, Schedule, apply_schedule, schedule_value
from sdh.errors import NumericError, UsageError
from sdh.mdp import FiniteMdp, _draw, step
from sdh.policy import safe_log
from sdh.replay import NStepRecord, ReplayBuffer, RollingWindow, TransitionRecord, WindowStep

EVAL_MODES = ("greedy", "stochastic")


@dataclass
class TrainResult:
    learner: object
    metrics: list[dict] = field(default_factory=list)


def greedy_probs(probs: np.ndarray) -> np.ndarray:
    out = np.zeros_like(probs)
    out[np.arange(probs.shape[0]), probs.argmax(axis=1)] = 1.0
    return out


def evaluate(env: FiniteMdp, probs: np.ndarray, episodes: int, max_steps: int, rng) -> tuple[float, float]:
    """Mean undiscounted (reward, cost) return over ``episodes`` rollouts of at most ``max_steps``."""
    cum = np.cumsum(probs, axis=1)
    rewards, costs = [], []
    for _ in range(episodes):
        s = env.sample_initial(rng)
        R = C = 0.0
        for _ in range(max_steps):
            if env.terminal[s]:
                break
            a = _draw(cum[s], rng.random())
            out = step(env, s, a, rng)
            R += out.reward
            C += float(out.cost_vec.sum())
            s = out.next_state
        rewards.append(R)
        costs.append(C)
    return float(np.mean(rewards)), float(np.mean(costs))


def policy_entropy(env: FiniteMdp, probs: np.ndarray) -> float:
    live = ~env.terminal
    return float(-(probs * safe_log(probs)).sum(axis=1)[live].mean())


def iter_train(
    env: FiniteMdp,
    cont,
    config: LearnerConfig,
    seed: int,
    total_steps: int,
    eval_interval: int,
    schedule: Schedule | None = None,
    eval_episodes: int = 5,
    eval_mode: str = "greedy",
    result: TrainResult | None = None,
):
    """Generator of per-interval metric dicts.

    The master seed is split into independent collector, learner and evaluation
    streams, so (config, seed) fixes every draw. A non-finite parameter aborts
    with a NumericError carrying a snapshot of the learner state.
    """
    if total_steps < 1 or eval_interval < 1:
        raise UsageError("total_steps and eval_interval must be >= 1")
    if eval_mode not in EVAL_MODES:
        raise UsageError(f"eval_mode must be one of {EVAL_MODES}")
    gamma = env.gamma if config.gamma is None else config.gamma
    learner = make_learner(env.n_states, env.n_actions, config)
    if result is not None:
        result.learner = learner
    collect_ss, learn_ss, eval_ss = np.random.SeedSequence(seed).spawn(3)
    rng_c, rng_l, rng_e = (np.random.default_rng(ss) for ss in (collect_ss, learn_ss, eval_ss))
    record_type = TransitionRecord if config.is_as_sac else NStepRecord
    buffer = ReplayBuffer(config.replay_capacity, record_type)
    window = None if config.is_as_sac else RollingWindow(config.n_step, gamma)

    s = env.sample_initial(rng_c)
    ep_len = 0
    critic_loss = None
    for t in range(total_steps):
        if schedule is not None:
            apply_schedule(cont, schedule, t)
        probs = learner.behavior_probs()
        a = _draw(np.cumsum(probs[s]), rng_c.random())
        out = step(env, s, a, rng_c)
        alpha = float(cont(out.cost_vec))
        cost = float(out.cost_vec.sum())
        ep_len += 1
        truncated = not out.terminated and ep_len >= config.max_episode_steps
        if window is None:
            buffer.push(TransitionRecord(s, a, alpha * out.reward, cost, out.next_state, gamma * alpha, out.terminated))
        else:
            logp = math.log(probs[s, a]) if probs[s, a] > 0 else -math.inf
            buffer.extend(window.push(WindowStep(s, a, out.reward, cost, alpha, logp), out.next_state, out.terminated, truncated))

        if t + 1 >= config.warmup_steps and len(buffer) > 0:
            batch = buffer.sample_minibatch(config.batch_size, rng_l)
            if isinstance(cont, CatNormalized):
                cont.update_scale(batch["cost"])
            critic_loss = learner.update(batch, rng_l)
            if not learner.finite():
                err = NumericError(f"non-finite learner parameters at step {t + 1}")
                err.snapshot = learner.state_dict()
                raise err

        if out.terminated or truncated:
            s = env.sample_initial(rng_c)
            ep_len = 0
            if window is not None:
                window.reset()
        else:
            s = out.next_state

        if (t + 1) % eval_interval == 0:
            pol = learner.behavior_probs()
            eval_probs = greedy_probs(pol) if eval_mode == "greedy" else pol
            reward_ret, cost_ret = evaluate(env, eval_probs, eval_episodes, config.max_episode_steps, rng_e)
            row = {
                "step": t + 1,
                "reward_return": reward_ret,
                "cost_return": cost_ret,
                **learner.metrics(),
                "c_max": cont.c_max if isinstance(cont, CatNormalized) else None,
                "entropy": policy_entropy(env, pol),
                "critic_loss": critic_loss,
                "schedule_value": None if schedule is None else schedule_value(schedule, t),
            }
            yield row


def train(env, cont, config: LearnerConfig, seed: int, total_steps: int, eval_interval: int, **kwargs) -> TrainResult:
    result = TrainResult(learner=None)
    result.metrics = list(iter_train(env, cont, config, seed, total_steps, eval_interval, result=result, **kwargs))
    return result
