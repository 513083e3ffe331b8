"""Experiment orchestration: one metrics JSONL and checkpoint per seed, then a cross-seed summary."""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path

import numpy as np
from scipy.stats import trim_mean

from sdh import __version__
from sdh.agents.train import TrainResult, iter_train
from sdh.config import ExperimentConfig
from sdh.errors import NumericError, UsageError

log = logging.getLogger(__name__)

SEED_ENV_VAR = "SDH_SEED"


def seeds_from_env(default: list[int]) -> list[int]:
    raw = os.environ.get(SEED_ENV_VAR)
    if not raw:
        return list(default)
    try:
        return [int(x) for x in raw.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"{SEED_ENV_VAR} must be a comma-separated list of integers, got {raw!r}") from None


def dump_line(row: dict) -> str:
    return json.dumps(row, sort_keys=True, allow_nan=False) + "\n"


def run_seed(config: ExperimentConfig, seed: int, out_dir: Path) -> dict:
    """Train one seed, streaming metrics to disk; returns the final metrics row."""
    stamp = {"config_hash": config.config_hash(), "version": __version__, "seed": seed}
    env = config.env.build()
    cont = config.continuation.build()
    result = TrainResult(learner=None)
    metrics_path = out_dir / f"metrics_seed{seed}.jsonl"
    last = None
    try:
        with open(metrics_path, "w", encoding="utf-8", newline="\n") as fh:
            for row in iter_train(
                env,
                cont,
                config.learner,
                seed,
                config.total_steps,
                config.eval_interval,
                schedule=config.resolved_schedule(),
                eval_episodes=config.eval_episodes,
                eval_mode=config.eval_mode,
                result=result,
            ):
                last = {**row, **stamp}
                fh.write(dump_line(last))
    except NumericError as e:
        snap = {**stamp, "error": str(e), "snapshot": getattr(e, "snapshot", None)}
        (out_dir / f"diagnostic_seed{seed}.json").write_text(json.dumps(snap), encoding="utf-8")
        raise
    ckpt = {**stamp, "format": "sdh-checkpoint", "format_version": 1, "state": result.learner.state_dict()}
    (out_dir / f"checkpoint_seed{seed}.json").write_text(json.dumps(ckpt, sort_keys=True) + "\n", encoding="utf-8")
    return last


def iqm(values) -> float:
    return float(trim_mean(np.asarray(values, dtype=float), 0.25))


def summarize(config: ExperimentConfig, finals: dict[int, dict]) -> dict:
    per_seed = {str(s): {"reward_return": r["reward_return"], "cost_return": r["cost_return"]} for s, r in finals.items()}
    rewards = [r["reward_return"] for r in finals.values()]
    costs = [r["cost_return"] for r in finals.values()]
    return {
        "config_hash": config.config_hash(),
        "version": __version__,
        "name": config.name,
        "per_seed": per_seed,
        "aggregate": {
            "reward_return_iqm": iqm(rewards),
            "cost_return_iqm": iqm(costs),
            "reward_return_mean": float(np.mean(rewards)),
            "cost_return_mean": float(np.mean(costs)),
            "n_seeds": len(finals),
        },
    }


def run_experiment(config: ExperimentConfig, out_dir=None, seeds: list[int] | None = None) -> dict:
    out = Path(out_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(config.to_json(), encoding="utf-8")
    seeds = seeds if seeds is not None else seeds_from_env(config.seeds)
    finals = {}
    for seed in seeds:
        log.info("running seed %d of %s", seed, config.name)
        finals[seed] = run_seed(config, seed, out)
    summary = summarize(config, finals)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return summary
