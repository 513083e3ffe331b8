"""Finite MDPs with nonnegative cost channels, toy environments and seeded rollouts."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from sdh.errors import UsageError
from sdh.policy import as_probs

ROW_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class FiniteMdp:
    """Tabular MDP. Arrays are copied and made read-only at construction.

    ``transition`` has shape (S, A, S), ``reward`` (S, A), ``costs`` (K, S, A).
    Terminal states must self-loop with zero reward and zero cost.
    """

    transition: np.ndarray
    reward: np.ndarray
    costs: np.ndarray
    initial_dist: np.ndarray
    terminal: np.ndarray
    gamma: float
    name: str = "mdp"
    action_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        P = _frozen(self.transition, float)
        r = _frozen(self.reward, float)
        c = _frozen(self.costs, float)
        if c.ndim == 2:
            c = _frozen(c[None], float)
        mu = _frozen(self.initial_dist, float)
        term = _frozen(self.terminal, bool)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", r)
        object.__setattr__(self, "costs", c)
        object.__setattr__(self, "initial_dist", mu)
        object.__setattr__(self, "terminal", term)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "action_names", tuple(self.action_names))
        self._validate()

    def _validate(self) -> None:
        P, r, c = self.transition, self.reward, self.costs
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise UsageError("transition must have shape (S, A, S)")
        S, A, _ = P.shape
        if S < 1 or A < 1:
            raise UsageError("MDP needs at least one state and one action")
        if r.shape != (S, A):
            raise UsageError(f"reward must have shape {(S, A)}, got {r.shape}")
        if c.ndim != 3 or c.shape[1:] != (S, A):
            raise UsageError(f"costs must have shape (K, {S}, {A}), got {c.shape}")
        if self.initial_dist.shape != (S,) or self.terminal.shape != (S,):
            raise UsageError("initial_dist and terminal must have one entry per state")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=2) - 1.0) > ROW_TOL):
            raise UsageError("every transition row must be a probability vector (sum 1 +- 1e-12)")
        if not np.all(np.isfinite(r)) or np.any(r < 0):
            raise UsageError("rewards must be finite and nonnegative")
        if not np.all(np.isfinite(c)) or np.any(c < 0):
            raise UsageError("costs must be finite and nonnegative")
        mu = self.initial_dist
        if np.any(mu < 0) or abs(mu.sum() - 1.0) > ROW_TOL:
            raise UsageError("initial_dist must sum to 1")
        if not 0.0 < self.gamma < 1.0:
            raise UsageError("gamma must lie in (0, 1)")
        for s in np.flatnonzero(self.terminal):
            if np.any(P[s, :, s] != 1.0) or np.any(r[s] != 0) or np.any(c[:, s] != 0):
                raise UsageError(f"terminal state {s} must self-loop with zero reward and cost")
        if self.action_names and len(self.action_names) != A:
            raise UsageError("action_names must name every action")

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def n_costs(self) -> int:
        return self.costs.shape[0]

    @cached_property
    def _cum_transition(self) -> np.ndarray:
        return np.cumsum(self.transition, axis=2)

    @cached_property
    def _cum_initial(self) -> np.ndarray:
        return np.cumsum(self.initial_dist)

    def sample_initial(self, rng: np.random.Generator) -> int:
        return _draw(self._cum_initial, rng.random())

    def to_json_dict(self) -> dict:
        return {
            "format": "sdh-mdp",
            "version": 1,
            "name": self.name,
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "action_names": list(self.action_names),
            "gamma": self.gamma,
            "transition": self.transition.tolist(),
            "reward": self.reward.tolist(),
            "costs": self.costs.tolist(),
            "initial_dist": self.initial_dist.tolist(),
            "terminal": self.terminal.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json_dict(cls, d: dict) -> FiniteMdp:
        if d.get("format") != "sdh-mdp":
            raise UsageError("not an sdh-mdp document")
        return cls(
            transition=np.array(d["transition"], dtype=float),
            reward=np.array(d["reward"], dtype=float),
            costs=np.array(d["costs"], dtype=float),
            initial_dist=np.array(d["initial_dist"], dtype=float),
            terminal=np.array(d["terminal"], dtype=bool),
            gamma=d["gamma"],
            name=d.get("name", "mdp"),
            action_names=tuple(d.get("action_names", ())),
        )

    @classmethod
    def from_json(cls, text: str) -> FiniteMdp:
        return cls.from_json_dict(json.loads(text))


def _frozen(x, dtype) -> np.ndarray:
    a = np.array(x, dtype=dtype)
    a.setflags(write=False)
    return a


def _draw(cum: np.ndarray, u: float) -> int:
    return int(min(np.searchsorted(cum, u * cum[-1], side="right"), cum.shape[-1] - 1))


@dataclass(frozen=True)
class StepOutcome:
    next_state: int
    reward: float
    cost_vec: np.ndarray
    terminated: bool
    truncated: bool = False


@dataclass
class Trajectory:
    states: list[int]
    actions: list[int]
    rewards: list[float]
    costs: list[np.ndarray]
    alphas: list[float]
    final_state: int
    terminal: bool
    truncated: bool

    @property
    def length(self) -> int:
        return len(self.actions)

    @property
    def reward_return(self) -> float:
        return float(sum(self.rewards))

    @property
    def cost_return(self) -> float:
        return float(sum(float(c.sum()) for c in self.costs))


def _check_index(mdp: FiniteMdp, s: int, a: int) -> None:
    if not 0 <= s < mdp.n_states:
        raise UsageError(f"state {s} out of range [0, {mdp.n_states})")
    if not 0 <= a < mdp.n_actions:
        raise UsageError(f"action {a} out of range [0, {mdp.n_actions})")


def step(mdp: FiniteMdp, s: int, a: int, rng: np.random.Generator) -> StepOutcome:
    _check_index(mdp, s, a)
    s_next = _draw(mdp._cum_transition[s, a], rng.random())
    return StepOutcome(
        next_state=s_next,
        reward=float(mdp.reward[s, a]),
        cost_vec=mdp.costs[:, s, a].copy(),
        terminated=bool(mdp.terminal[s_next]),
    )


def sample_trajectory(mdp, policy, max_steps: int, cont, rng, start_state: int | None = None) -> Trajectory:
    """Roll out ``policy`` until a terminal state or ``max_steps`` (truncation).

    Constraint violations never end the rollout; they only lower the recorded alpha.
    """
    if max_steps < 1:
        raise UsageError("max_steps must be >= 1")
    cum_pi = np.cumsum(as_probs(policy), axis=1)
    s = mdp.sample_initial(rng) if start_state is None else int(start_state)
    traj = Trajectory([], [], [], [], [], s, False, False)
    if mdp.terminal[s]:
        traj.terminal = True
        return traj
    for _ in range(max_steps):
        a = _draw(cum_pi[s], rng.random())
        out = step(mdp, s, a, rng)
        traj.states.append(s)
        traj.actions.append(a)
        traj.rewards.append(out.reward)
        traj.costs.append(out.cost_vec)
        traj.alphas.append(float(cont(out.cost_vec)))
        s = out.next_state
        if out.terminated:
            traj.terminal = True
            break
    traj.final_state = s
    traj.truncated = not traj.terminal
    return traj


def rollout_batch(mdp: FiniteMdp, probs: np.ndarray, n: int, horizon: int, rng: np.random.Generator):
    """Vectorised rollouts of ``n`` trajectories for exactly ``horizon`` steps.

    Terminal states self-loop, so no masking is needed. Returns (states, actions),
    both integer arrays of shape (n, horizon).
    """
    cum_pi = np.cumsum(probs, axis=1)
    cum_P = mdp._cum_transition
    S, A = mdp.n_states, mdp.n_actions
    states = np.empty((n, horizon), dtype=np.int64)
    actions = np.empty((n, horizon), dtype=np.int64)
    s = np.minimum(np.searchsorted(mdp._cum_initial, rng.random(n), side="right"), S - 1)
    for t in range(horizon):
        a = np.minimum((rng.random(n)[:, None] >= cum_pi[s]).sum(axis=1), A - 1)
        states[:, t] = s
        actions[:, t] = a
        s = np.minimum((rng.random(n)[:, None] >= cum_P[s, a]).sum(axis=1), S - 1)
    return states, actions


# --------------------------------------------------------------------------- builders


def build_counterexample_mdp(r: float, gamma: float) -> FiniteMdp:
    """One state, actions (continue, stop). Stop emits cost 1, continue pays reward ``r``.

    Pair with :class:`~sdh.continuation.HardIndicator` to get alpha(continue)=1, alpha(stop)=0.
    """
    if r <= 0:
        raise UsageError("counterexample reward r must be positive")
    if not 0.0 < gamma < 1.0:
        raise UsageError("gamma must lie in (0, 1)")
    return FiniteMdp(
        transition=np.ones((1, 2, 1)),
        reward=np.array([[r, 0.0]]),
        costs=np.array([[[0.0, 1.0]]]),
        initial_dist=np.array([1.0]),
        terminal=np.array([False]),
        gamma=gamma,
        name="counterexample",
        action_names=("continue", "stop"),
    )


def build_hazard_chain(
    n: int,
    hazard_states=(),
    hazard_cost: float = 1.0,
    *,
    gamma: float = 0.9,
    goal_reward: float = 1.0,
    side_reward: float = 0.0,
    start: int | None = None,
    slip: float = 0.0,
) -> FiniteMdp:
    """Line of ``n`` states with actions (left, right); state ``n-1`` is a terminal goal.

    Entering the goal pays ``goal_reward``. Every action taken in a hazard state
    emits ``hazard_cost``. With ``side_reward > 0`` state 0 becomes a terminal
    exit paying ``side_reward`` on entry, giving a hazard-free alternative;
    otherwise state 0 is a wall. ``slip`` is the probability that a move goes
    the opposite way.
    """
    if n < 2:
        raise UsageError("a hazard chain needs at least two states")
    hazards = sorted(set(int(h) for h in hazard_states))
    if any(not 0 <= h < n for h in hazards):
        raise UsageError("hazard states must lie within the chain")
    if not 0.0 <= slip < 1.0:
        raise UsageError("slip must lie in [0, 1)")
    goal = n - 1
    terminal = np.zeros(n, dtype=bool)
    terminal[goal] = True
    has_exit = side_reward > 0
    if has_exit:
        if n < 3:
            raise UsageError("a chain with an exit needs at least three states")
        terminal[0] = True
    if start is None:
        start = 1 if has_exit else 0
    if not 0 <= start < n or terminal[start]:
        raise UsageError("start must be a non-terminal state of the chain")
    if any(terminal[h] for h in hazards):
        raise UsageError("hazards cannot sit on terminal states")

    P = np.zeros((n, 2, n))
    R = np.zeros((n, 2))
    for s in range(n):
        if terminal[s]:
            P[s, :, s] = 1.0
            continue
        left, right = max(s - 1, 0), min(s + 1, n - 1)
        P[s, 0, left] += 1.0 - slip
        P[s, 0, right] += slip
        P[s, 1, right] += 1.0 - slip
        P[s, 1, left] += slip
        for a in range(2):
            R[s, a] = goal_reward * P[s, a, goal] + (side_reward * P[s, a, 0] if has_exit else 0.0)
    C = np.zeros((1, n, 2))
    for h in hazards:
        C[0, h, :] = hazard_cost
    mu = np.zeros(n)
    mu[start] = 1.0
    return FiniteMdp(P, R, C, mu, terminal, gamma, name="hazard_chain", action_names=("left", "right"))


GRID_MOVES = {"up": (-1, 0), "down": (1, 0), "left": (0, -1), "right": (0, 1)}


def build_hazard_gridworld(
    width: int,
    height: int,
    goal: tuple[int, int],
    hazards=(),
    *,
    gamma: float = 0.9,
    start: tuple[int, int] = (0, 0),
    goal_reward: float = 1.0,
    hazard_cost: float = 1.0,
) -> FiniteMdp:
    """Deterministic grid, cells indexed ``row * width + col``, actions (up, down, left, right).

    Moves into walls stay put. Entering the terminal goal pays ``goal_reward``;
    acting in a hazard cell emits ``hazard_cost``; all other rewards are 0.
    """
    if width < 1 or height < 1 or width * height < 2:
        raise UsageError("grid needs at least two cells")
    cells = [(i, j) for i in range(height) for j in range(width)]

    def idx(cell):
        i, j = cell
        if not (0 <= i < height and 0 <= j < width):
            raise UsageError(f"cell {cell} outside the {height}x{width} grid")
        return i * width + j

    g = idx(goal)
    hz = sorted({idx(h) for h in hazards})
    st = idx(start)
    if g in hz or st == g:
        raise UsageError("goal must differ from start and from hazard cells")
    S, A = len(cells), len(GRID_MOVES)
    P = np.zeros((S, A, S))
    R = np.zeros((S, A))
    for s, (i, j) in enumerate(cells):
        if s == g:
            P[s, :, s] = 1.0
            continue
        for a, (di, dj) in enumerate(GRID_MOVES.values()):
            ni, nj = i + di, j + dj
            s2 = ni * width + nj if (0 <= ni < height and 0 <= nj < width) else s
            P[s, a, s2] = 1.0
            R[s, a] = goal_reward if s2 == g else 0.0
    C = np.zeros((1, S, A))
    C[0, hz, :] = hazard_cost
    terminal = np.zeros(S, dtype=bool)
    terminal[g] = True
    mu = np.zeros(S)
    mu[st] = 1.0
    return FiniteMdp(P, R, C, mu, terminal, gamma, name="hazard_gridworld", action_names=tuple(GRID_MOVES))


def build_bernoulli_cost_mdp(q: float, gamma: float = 0.9) -> FiniteMdp:
    """Two states visited i.i.d. with P(hazard) = q each step; acting in the hazard state costs 1."""
    if not 0.0 <= q <= 1.0:
        raise UsageError("q must lie in [0, 1]")
    row = np.array([1.0 - q, q])
    P = np.tile(row, (2, 1, 1))
    C = np.array([[[0.0], [1.0]]])
    return FiniteMdp(P, np.zeros((2, 1)), C, row, np.zeros(2, dtype=bool), gamma, name="bernoulli_cost")


def random_mdp(
    rng: np.random.Generator,
    n_states: int = 3,
    n_actions: int = 2,
    n_costs: int = 1,
    gamma: float | None = None,
    cost_scale: float = 1.0,
) -> FiniteMdp:
    """Dense random MDP (Dirichlet rows, uniform rewards in [0, 1], sparse costs)."""
    P = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    R = rng.random((n_states, n_actions))
    C = cost_scale * rng.random((n_costs, n_states, n_actions)) * (rng.random((n_costs, n_states, n_actions)) < 0.5)
    mu = rng.dirichlet(np.ones(n_states))
    if gamma is None:
        gamma = float(rng.uniform(0.5, 0.95))
    return FiniteMdp(P, R, C, mu, np.zeros(n_states, dtype=bool), gamma, name="random")


ENVIRONMENTS = {
    "counterexample": lambda **kw: build_counterexample_mdp(kw.pop("r", 0.4), kw.pop("gamma", 0.9), **kw),
    "hazard_chain": lambda **kw: build_hazard_chain(kw.pop("n", 8), kw.pop("hazard_states", (3, 4)), **kw),
    "hazard_gridworld": lambda **kw: build_hazard_gridworld(
        kw.pop("width", 4), kw.pop("height", 4), tuple(kw.pop("goal", (3, 3))),
        [tuple(h) for h in kw.pop("hazards", ((1, 1), (2, 2)))], **kw
    ),
    "bernoulli_cost": lambda **kw: build_bernoulli_cost_mdp(kw.pop("q", 0.1), **kw),
}


def make_env(name: str, **params) -> FiniteMdp:
    try:
        builder = ENVIRONMENTS[name]
    except KeyError:
        raise UsageError(f"unknown environment {name!r}; expected one of {sorted(ENVIRONMENTS)}") from None
    return builder(**params)
