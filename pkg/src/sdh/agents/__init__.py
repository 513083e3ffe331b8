"""Tabular AS-SAC and VT-MPO agents."""

from sdh.agents.config import VARIANTS, DualState, LearnerConfig
from sdh.agents.learners import AsSacLearner, VtMpoLearner, make_learner
from sdh.agents.train import TrainResult, iter_train, train

__all__ = [
    "VARIANTS",
    "DualState",
    "LearnerConfig",
    "AsSacLearner",
    "VtMpoLearner",
    "make_learner",
    "TrainResult",
    "iter_train",
    "train",
]
