"""Hypothesis strategies for small random MDPs, policies and continuation models."""

from __future__ import annotations

import numpy as np
from hypothesis import strategies as st

from sdh.continuation import Exponential
from sdh.mdp import random_mdp
from sdh.policy import SoftmaxPolicy


@st.composite
def instances(draw, max_states=4, max_actions=3):
    """(mdp, continuation, policy) drawn from a seeded generator."""
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    S = draw(st.integers(1, max_states))
    A = draw(st.integers(1, max_actions))
    mdp = random_mdp(rng, S, A, n_costs=draw(st.integers(1, 2)))
    lam = draw(st.floats(0.0, 3.0))
    policy = SoftmaxPolicy(rng.normal(0.0, 1.5, size=(S, A)))
    return mdp, Exponential(lam), policy
