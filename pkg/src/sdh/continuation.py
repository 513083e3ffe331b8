"""Continuation probabilities alpha(s, a) in [0, 1] computed from per-step cost signals.

Every model is callable on a cost array whose *first* axis indexes constraint
channels, e.g. a single cost vector of shape ``(K,)`` or a full table of shape
``(K, S, A)``; the channel axis is reduced away.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from sdh.errors import UsageError

log = logging.getLogger(__name__)


def alpha_exponential(cost_vec, lam: float) -> float:
    costs = np.asarray(cost_vec, dtype=float)
    if np.any(costs < 0):
        raise UsageError("costs must be nonnegative")
    if lam < 0:
        raise UsageError("lambda must be nonnegative")
    return math.exp(-lam * float(costs.sum()))


def alpha_cat(violation: float, p_max: float, c_max: float, eps: float) -> float:
    if not 0.0 <= p_max <= 1.0:
        raise UsageError("p_max must lie in [0, 1]")
    if eps <= 0:
        raise UsageError("eps must be positive")
    return 1.0 - p_max * min(max(violation / max(c_max, eps), 0.0), 1.0)


def aggregate_min(alphas) -> float:
    alphas = np.asarray(alphas, dtype=float)
    if alphas.size == 0:
        raise UsageError("cannot aggregate an empty set of continuation probabilities")
    if np.any((alphas < 0) | (alphas > 1)):
        raise UsageError("continuation probabilities must lie in [0, 1]")
    return float(alphas.min())


def ema_update(c_max: float, batch_costs, limit_b: float, rho: float, per_sample: bool = False) -> float:
    """Moving-average update of the violation scale.

    The default uses the batch maximum hinge ``max_c [c - b]_+``. With
    ``per_sample=True`` the update is applied once per batch entry in order,
    which is the per-sample hinge variant.
    """
    if not 0.0 <= rho <= 1.0:
        raise UsageError("rho must lie in [0, 1]")
    costs = np.asarray(batch_costs, dtype=float).ravel()
    if costs.size == 0:
        log.warning("ema_update called with an empty batch; c_max left at %r", c_max)
        return c_max
    hinge = np.maximum(costs - limit_b, 0.0)
    if per_sample:
        for v in hinge:
            c_max = rho * c_max + (1.0 - rho) * float(v)
        return max(c_max, 0.0)
    return max(rho * c_max + (1.0 - rho) * float(hinge.max()), 0.0)


class Hazard(NamedTuple):
    value: float
    infinite: bool


def hazard(alpha: float) -> Hazard:
    """Per-step hazard ``-log alpha``; alpha == 0 yields an infinite hazard, flagged."""
    if not 0.0 <= alpha <= 1.0:
        raise UsageError("alpha must lie in [0, 1]")
    if alpha == 0.0:
        return Hazard(math.inf, True)
    return Hazard(-math.log(alpha) + 0.0, False)


def _channels(costs) -> np.ndarray:
    costs = np.asarray(costs, dtype=float)
    if costs.ndim == 0:
        costs = costs[None]
    return costs


@dataclass
class Exponential:
    """alpha = exp(-lam * sum_i c_i); ``aggregate="min"`` uses min_i exp(-lam * c_i) instead."""

    lam: float = 0.0
    aggregate: str = "sum"

    def __call__(self, costs) -> np.ndarray:
        c = _channels(costs)
        if self.aggregate == "sum":
            total = c.sum(axis=0)
        elif self.aggregate == "min":
            total = c.max(axis=0)
        else:
            raise UsageError(f"unknown aggregate {self.aggregate!r}")
        return np.exp(-self.lam * total)


@dataclass
class CatNormalized:
    """alpha_i = 1 - p_max * clip([c_i - b]_+ / max(c_max, eps), 0, 1), aggregated by min over channels.

    ``c_max`` is mutable state maintained by :meth:`update_scale`.
    """

    p_max: float = 0.75
    c_max: float = 1.0
    eps: float = 1e-6
    limit_b: float = 0.0
    rho: float = 0.99
    per_sample_ema: bool = False

    def __call__(self, costs) -> np.ndarray:
        c = _channels(costs)
        v = np.maximum(c - self.limit_b, 0.0)
        ratio = np.clip(v / max(self.c_max, self.eps), 0.0, 1.0)
        return (1.0 - self.p_max * ratio).min(axis=0)

    def update_scale(self, batch_costs) -> float:
        self.c_max = ema_update(self.c_max, batch_costs, self.limit_b, self.rho, self.per_sample_ema)
        return self.c_max


@dataclass
class HardIndicator:
    """alpha = 1 iff every channel is <= 0, else 0."""

    def __call__(self, costs) -> np.ndarray:
        c = _channels(costs)
        return np.all(c <= 0.0, axis=0).astype(float)


@dataclass
class Constant:
    alpha: float = 1.0

    def __call__(self, costs) -> np.ndarray:
        c = _channels(costs)
        return np.full(c.shape[1:], float(self.alpha))


ContinuationModel = Exponential | CatNormalized | HardIndicator | Constant

_MODELS = {
    "exponential": Exponential,
    "cat": CatNormalized,
    "hard": HardIndicator,
    "constant": Constant,
}


def make_continuation(kind: str, **params) -> ContinuationModel:
    try:
        cls = _MODELS[kind]
    except KeyError:
        raise UsageError(f"unknown continuation kind {kind!r}; expected one of {sorted(_MODELS)}") from None
    return cls(**params)


def continuation_kind(model: ContinuationModel) -> str:
    for name, cls in _MODELS.items():
        if isinstance(model, cls):
            return name
    raise UsageError(f"not a continuation model: {model!r}")


@dataclass(frozen=True)
class Schedule:
    """Piecewise-affine schedule for a continuation parameter (``target`` is "lambda" or "p_max")."""

    target: str = "lambda"
    kind: str = "constant"
    start_value: float = 0.0
    end_value: float = 0.0
    start_step: int = 0
    end_step: int = 0

    def __post_init__(self):
        if self.target not in ("lambda", "p_max"):
            raise UsageError(f"schedule target must be 'lambda' or 'p_max', got {self.target!r}")
        if self.kind not in ("constant", "linear"):
            raise UsageError(f"schedule kind must be 'constant' or 'linear', got {self.kind!r}")
        if self.kind == "linear" and self.end_step < self.start_step:
            raise UsageError("schedule end_step precedes start_step")


def schedule_value(schedule: Schedule, t: int) -> float:
    if t < 0:
        raise UsageError("step count must be nonnegative")
    if schedule.kind == "constant":
        return schedule.start_value
    if t <= schedule.start_step:
        return schedule.start_value
    if t >= schedule.end_step:
        return schedule.end_value
    frac = (t - schedule.start_step) / (schedule.end_step - schedule.start_step)
    return schedule.start_value + frac * (schedule.end_value - schedule.start_value)


def apply_schedule(model: ContinuationModel, schedule: Schedule, t: int) -> None:
    value = schedule_value(schedule, t)
    if schedule.target == "lambda":
        if not isinstance(model, Exponential):
            raise UsageError("a lambda schedule needs an exponential continuation model")
        model.lam = value
    else:
        if not isinstance(model, CatNormalized):
            raise UsageError("a p_max schedule needs a CaT-normalized continuation model")
        model.p_max = value
