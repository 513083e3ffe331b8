"""Tabular softmax policies over discrete actions."""

from __future__ import annotations

import numpy as np

LOGIT_CLAMP = 30.0


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def safe_log(p: np.ndarray) -> np.ndarray:
    """Elementwise log with log(0) := 0, so that 0 * log 0 evaluates to 0."""
    p = np.asarray(p, dtype=float)
    out = np.zeros_like(p)
    np.log(p, out=out, where=p > 0)
    return out


class SoftmaxPolicy:
    """Per-state logits; the logits are the parameters.

    Logits are clamped to ``[-LOGIT_CLAMP, LOGIT_CLAMP]`` whenever they are set
    so that log-probabilities stay finite.
    """

    def __init__(self, logits):
        self.logits = np.array(logits, dtype=float)

    @property
    def logits(self) -> np.ndarray:
        return self._logits

    @logits.setter
    def logits(self, value) -> None:
        value = np.asarray(value, dtype=float)
        if value.ndim != 2:
            raise ValueError("logits must be a (n_states, n_actions) table")
        self._logits = np.clip(value, -LOGIT_CLAMP, LOGIT_CLAMP)

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> SoftmaxPolicy:
        return cls(np.zeros((n_states, n_actions)))

    @classmethod
    def from_probs(cls, probs) -> SoftmaxPolicy:
        probs = np.asarray(probs, dtype=float)
        with np.errstate(divide="ignore"):
            logits = np.log(probs)
        logits = np.where(np.isfinite(logits), logits, -np.inf)
        logits = logits - np.max(logits, axis=-1, keepdims=True)
        return cls(np.maximum(logits, -2 * LOGIT_CLAMP))

    @property
    def n_states(self) -> int:
        return self._logits.shape[0]

    @property
    def n_actions(self) -> int:
        return self._logits.shape[1]

    @property
    def probs(self) -> np.ndarray:
        return softmax(self._logits)

    @property
    def log_probs(self) -> np.ndarray:
        return log_softmax(self._logits)

    def entropy(self) -> np.ndarray:
        p = self.probs
        return -(p * self.log_probs).sum(axis=-1)

    def sample(self, s: int, rng: np.random.Generator) -> int:
        cum = np.cumsum(self.probs[s])
        return int(min(np.searchsorted(cum, rng.random() * cum[-1], side="right"), self.n_actions - 1))

    def copy(self) -> SoftmaxPolicy:
        return SoftmaxPolicy(self._logits.copy())

    def __repr__(self) -> str:
        return f"SoftmaxPolicy(n_states={self.n_states}, n_actions={self.n_actions})"


def as_probs(policy) -> np.ndarray:
    """Probability table of a policy given as a SoftmaxPolicy or a raw (S, A) table."""
    if isinstance(policy, SoftmaxPolicy):
        return policy.probs
    probs = np.asarray(policy, dtype=float)
    if probs.ndim != 2 or np.any(probs < 0) or not np.allclose(probs.sum(axis=1), 1.0, atol=1e-12):
        raise ValueError("policy table must be (n_states, n_actions) with rows summing to 1")
    return probs
