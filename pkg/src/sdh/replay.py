"""Replay storage: one-step shaped transitions, compressed survival-shaped n-step records and a FIFO ring buffer."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import astuple, dataclass, fields
from typing import NamedTuple

import numpy as np

from sdh.errors import UsageError

REPLAY_FORMAT = "sdh-replay"
REPLAY_VERSION = 1


@dataclass(frozen=True)
class TransitionRecord:
    s: int
    a: int
    r_tilde: float
    cost: float
    s_next: int
    gamma_tilde: float
    done: bool


@dataclass(frozen=True)
class NStepRecord:
    s: int
    a: int
    R_n: float
    cost: float
    s_boot: int
    u_boot: float
    done: bool
    behavior_logp: float
    n: int


RECORD_TYPES = {"transition": TransitionRecord, "nstep": NStepRecord}


class WindowStep(NamedTuple):
    s: int
    a: int
    r: float
    cost: float
    alpha: float
    logp: float = 0.0


def terminal_mask(done: bool, truncated: bool, gamma_tilde: float) -> float:
    """Effective bootstrap factor: true terminals cut bootstrapping, time-limit truncations keep it."""
    if done and truncated:
        raise UsageError("a step cannot be both terminal and truncated")
    return 0.0 if done else gamma_tilde


def compress_window(steps, gamma: float, s_boot: int, done: bool = False, n: int | None = None) -> NStepRecord:
    """Fold a window of raw steps into one record.

    R_n = sum_k (prod_{j<k} gamma alpha_j) alpha_k r_k and u_boot = prod_j gamma alpha_j,
    accumulated left to right with a running product.
    """
    steps = list(steps)
    if not steps:
        raise UsageError("cannot compress an empty window")
    if n is not None and len(steps) > n:
        raise UsageError(f"window holds {len(steps)} steps but n = {n}")
    u = 1.0
    R = 0.0
    for st in steps:
        R += u * (st.alpha * st.r)
        u = u * (gamma * st.alpha)
    first = steps[0]
    return NStepRecord(int(first.s), int(first.a), R, float(first.cost), int(s_boot), u, bool(done), float(first.logp), len(steps))


class RollingWindow:
    """Holds the last n raw steps of the current episode and emits compressed records.

    One record is emitted per step once the window is full; at episode end the
    remaining shortened windows are flushed. True terminals set ``done``;
    time-limit truncations keep bootstrapping from the final state.
    """

    def __init__(self, n: int, gamma: float):
        if n < 1:
            raise UsageError("n must be >= 1")
        self.n = n
        self.gamma = gamma
        self._steps: deque[WindowStep] = deque()

    def __len__(self) -> int:
        return len(self._steps)

    def push(self, step: WindowStep, s_next: int, terminated: bool = False, truncated: bool = False) -> list[NStepRecord]:
        if terminated and truncated:
            raise UsageError("a step cannot be both terminal and truncated")
        self._steps.append(step)
        out = []
        if len(self._steps) == self.n:
            out.append(compress_window(self._steps, self.gamma, s_next, terminated, self.n))
            self._steps.popleft()
        if terminated or truncated:
            while self._steps:
                out.append(compress_window(self._steps, self.gamma, s_next, terminated, self.n))
                self._steps.popleft()
        return out

    def reset(self) -> None:
        self._steps.clear()


class ReplayBuffer:
    """Fixed-capacity FIFO ring of records stored column-wise."""

    def __init__(self, capacity: int, record_type=TransitionRecord):
        if capacity < 1:
            raise UsageError("capacity must be >= 1")
        if record_type not in RECORD_TYPES.values():
            raise UsageError(f"unsupported record type {record_type!r}")
        self.capacity = capacity
        self.record_type = record_type
        self._names = [f.name for f in fields(record_type)]
        self._cols = {
            f.name: np.zeros(capacity, dtype=_dtype(f.type)) for f in fields(record_type)
        }
        self._size = 0
        self._next = 0

    def __len__(self) -> int:
        return self._size

    def push(self, record) -> None:
        for name, value in zip(self._names, astuple(record)):
            self._cols[name][self._next] = value
        self._next = (self._next + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def extend(self, records) -> None:
        for rec in records:
            self.push(rec)

    def _order(self) -> np.ndarray:
        """Slot indices from oldest to newest."""
        if self._size < self.capacity:
            return np.arange(self._size)
        return (np.arange(self.capacity) + self._next) % self.capacity

    def record(self, i: int):
        slot = self._order()[i]
        return self.record_type(*(self._cols[n][slot].item() for n in self._names))

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if self._size == 0:
            raise UsageError("cannot sample from an empty replay buffer")
        return rng.integers(0, self._size, size=batch_size)

    def sample_minibatch(self, batch_size: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        """Uniform sample with replacement, returned as a dict of column arrays."""
        idx = self.sample_indices(batch_size, rng)
        return {n: col[idx] for n, col in self._cols.items()}

    def to_json(self) -> str:
        order = self._order()
        body = {
            "format": REPLAY_FORMAT,
            "version": REPLAY_VERSION,
            "record": next(k for k, v in RECORD_TYPES.items() if v is self.record_type),
            "capacity": self.capacity,
            "columns": {n: self._cols[n][order].tolist() for n in self._names},
        }
        return json.dumps(body)

    @classmethod
    def from_json(cls, text: str) -> ReplayBuffer:
        d = json.loads(text)
        if d.get("format") != REPLAY_FORMAT or d.get("version") != REPLAY_VERSION:
            raise UsageError("not a version-1 replay dump")
        buf = cls(int(d["capacity"]), RECORD_TYPES[d["record"]])
        cols = d["columns"]
        size = len(cols[buf._names[0]])
        for n in buf._names:
            buf._cols[n][:size] = cols[n]
        buf._size = size
        buf._next = size % buf.capacity
        return buf


def _dtype(annotation) -> type:
    name = annotation if isinstance(annotation, str) else annotation.__name__
    return {"int": np.int64, "float": np.float64, "bool": np.bool_}[name]
