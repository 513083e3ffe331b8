"""Experiment configuration: a single JSON document with exact round-trip and a stable hash."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from sdh import __version__
from sdh.agents.config import LearnerConfig
from sdh.continuation import Schedule, make_continuation
from sdh.errors import UsageError
from sdh.mdp import make_env

# named schedules a config may reference instead of spelling one out
NAMED_SCHEDULES = {
    "lambda_0_to_0.9": Schedule("lambda", "linear", 0.0, 0.9, 50_000, 500_000),
    "p_max_ramp": Schedule("p_max", "linear", 0.0, 0.75, 0, 500_000),
}

REQUIRED_KEYS = ("env", "continuation", "learner", "seeds", "total_steps", "eval_interval")


@dataclass
class EnvSpec:
    name: str
    params: dict = field(default_factory=dict)

    def build(self):
        return make_env(self.name, **self.params)


@dataclass
class ContinuationSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def build(self):
        return make_continuation(self.kind, **self.params)


@dataclass
class ExperimentConfig:
    env: EnvSpec
    continuation: ContinuationSpec
    learner: LearnerConfig
    seeds: list[int]
    total_steps: int
    eval_interval: int
    schedule: Schedule | str | None = None
    eval_episodes: int = 5
    eval_mode: str = "greedy"
    cost_limit: float | None = None
    output_dir: str = "runs/default"
    name: str = "experiment"

    def __post_init__(self):
        if not self.seeds:
            raise UsageError("seeds: at least one seed is required")
        if self.total_steps < 1 or self.eval_interval < 1:
            raise UsageError("total_steps and eval_interval must be >= 1")
        if isinstance(self.schedule, str) and self.schedule not in NAMED_SCHEDULES:
            raise UsageError(f"schedule: unknown named schedule {self.schedule!r}; known: {sorted(NAMED_SCHEDULES)}")

    def resolved_schedule(self) -> Schedule | None:
        if isinstance(self.schedule, str):
            return NAMED_SCHEDULES[self.schedule]
        return self.schedule

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if isinstance(self.schedule, str):
            d["schedule"] = self.schedule
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        if not isinstance(d, dict):
            raise UsageError("config must be a JSON object")
        missing = [k for k in REQUIRED_KEYS if k not in d]
        if missing:
            raise UsageError(f"missing required key {missing[0]!r}")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise UsageError(f"unknown key {unknown[0]!r}")
        d = dict(d)
        d["env"] = _build(EnvSpec, d["env"], "env")
        d["continuation"] = _build(ContinuationSpec, d["continuation"], "continuation")
        d["learner"] = _build(LearnerConfig, d["learner"], "learner")
        sched = d.get("schedule")
        if isinstance(sched, dict):
            d["schedule"] = _build(Schedule, sched, "schedule")
        d["seeds"] = [int(s) for s in d["seeds"]]
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> ExperimentConfig:
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise UsageError(f"config parse error at line {e.lineno}, column {e.colno}: {e.msg}") from None
        return cls.from_dict(d)

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _build(cls, value, key: str):
    if not isinstance(value, dict):
        raise UsageError(f"{key}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(value) - names)
    if unknown:
        raise UsageError(f"{key}.{unknown[0]}: unknown key")
    try:
        return cls(**value)
    except TypeError as e:
        raise UsageError(f"{key}: {e}") from None
    except UsageError as e:
        raise UsageError(f"{key}: {e}") from None


def version_stamp() -> str:
    return __version__
