"""Variable-discount policy-evaluation operators, fixed-point solvers and the two-critic decomposition."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from sdh.errors import NumericError, UsageError
from sdh.mdp import FiniteMdp
from sdh.oracle import alpha_table
from sdh.policy import as_probs, safe_log

DEFAULT_TOL = 1e-10
MAX_ITERS = 1_000_000


@dataclass(frozen=True, eq=False)
class ShapedMdp:
    """Shaped reward r~ = alpha r and shaped discount g~ = gamma alpha, plus the dynamics they act on."""

    r_tilde: np.ndarray
    gamma_tilde: np.ndarray
    transition: np.ndarray
    gamma: float
    initial_dist: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.r_tilde)):
            raise UsageError("shaped reward must be finite")
        if np.any(self.gamma_tilde < 0) or np.any(self.gamma_tilde > self.gamma + 1e-15):
            raise UsageError("shaped discount must lie in [0, gamma]")

    @property
    def n_states(self) -> int:
        return self.r_tilde.shape[0]

    @property
    def n_actions(self) -> int:
        return self.r_tilde.shape[1]

    def with_reward(self, r_tilde: np.ndarray) -> ShapedMdp:
        return ShapedMdp(np.asarray(r_tilde, dtype=float), self.gamma_tilde, self.transition, self.gamma, self.initial_dist)


def shape(mdp: FiniteMdp, cont) -> ShapedMdp:
    alpha = alpha_table(mdp, cont)
    return ShapedMdp(alpha * mdp.reward, mdp.gamma * alpha, mdp.transition, mdp.gamma, mdp.initial_dist)


def backup_q(V: np.ndarray, shaped: ShapedMdp, f: np.ndarray | None = None) -> np.ndarray:
    """Q(s, a) = r~ + f + g~ * E_{s'}[V(s')]."""
    q = shaped.r_tilde + shaped.gamma_tilde * (shaped.transition @ V)
    return q if f is None else q + f


def apply_eval_operator(V, policy, shaped: ShapedMdp, f: np.ndarray | None = None) -> np.ndarray:
    """One application of (T V)(s) = E_a[r~ + f + g~ E_{s'} V]."""
    V = np.asarray(V, dtype=float)
    if V.shape != (shaped.n_states,):
        raise UsageError(f"value vector must have shape ({shaped.n_states},)")
    probs = as_probs(policy)
    return (probs * backup_q(V, shaped, f)).sum(axis=1)


def operator_modulus_bound(shaped: ShapedMdp, policy) -> float:
    """max_s sum_a pi(a|s) g~(s, a), a Lipschitz constant of the evaluation operator (at most gamma)."""
    return float((as_probs(policy) * shaped.gamma_tilde).sum(axis=1).max())


def evaluate_policy(policy, shaped: ShapedMdp, f: np.ndarray | None = None, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Fixed point of the evaluation operator by Banach iteration.

    Stops once ||V_{k+1} - V_k|| <= tol (1 - c) / c with c the operator modulus
    bound, which guarantees ||V_{k+1} - V*|| <= tol.
    """
    if tol <= 0:
        raise UsageError("tol must be positive")
    probs = as_probs(policy)
    c = operator_modulus_bound(shaped, probs)
    r_pi = (probs * (shaped.r_tilde if f is None else shaped.r_tilde + f)).sum(axis=1)
    M = np.einsum("sa,sa,sat->st", probs, shaped.gamma_tilde, shaped.transition)
    if not (np.all(np.isfinite(r_pi)) and np.all(np.isfinite(M))):
        raise NumericError("non-finite entries in the evaluation operator")
    V = r_pi.copy()
    if c == 0.0:
        return V
    threshold = tol * (1.0 - c) / c
    for _ in range(MAX_ITERS):
        V_next = r_pi + M @ V
        if not np.all(np.isfinite(V_next)):
            raise NumericError("value iteration diverged to non-finite values")
        if np.max(np.abs(V_next - V)) <= threshold:
            return V_next
        V = V_next
    raise NumericError("policy evaluation did not converge")


def soft_evaluate_AS(policy, shaped: ShapedMdp, kappa: float, ell_c: float, tol: float = DEFAULT_TOL):
    """Soft absorbing-state evaluation.

    Q = r~ - kappa ell_c + g~ E_{s'} V and V = E_a[Q - kappa log pi], realised with the
    extra reward f = -kappa (log pi + ell_c). Returns (Q, V).
    """
    probs = as_probs(policy)
    f = -kappa * (safe_log(probs) + ell_c)
    V = evaluate_policy(probs, shaped, f, tol)
    Q = backup_q(V, shaped) - kappa * ell_c
    return Q, V


@dataclass
class CriticTables:
    Q_R: np.ndarray
    Q_KL: np.ndarray
    Q: np.ndarray | None = None

    def values(self, policy) -> tuple[np.ndarray, np.ndarray]:
        probs = as_probs(policy)
        return (probs * self.Q_R).sum(axis=1), (probs * self.Q_KL).sum(axis=1)


def two_critic_fixed_point(policy, shaped: ShapedMdp, H_tgt: float, tol: float = DEFAULT_TOL) -> CriticTables:
    """Fixed points of the kappa-free recursions
    Q_R = r~ + g~ E[V_R] and Q_KL = (log pi + H_tgt) + g~ E[V_KL], with V = E_a Q.
    """
    probs = as_probs(policy)
    V_R = evaluate_policy(probs, shaped, None, tol)
    kl_shaped = shaped.with_reward(safe_log(probs) + H_tgt)
    V_KL = evaluate_policy(probs, kl_shaped, None, tol)
    return CriticTables(Q_R=backup_q(V_R, shaped), Q_KL=backup_q(V_KL, kl_shaped))


def combine_kappa(critics: CriticTables, kappa: float) -> np.ndarray:
    return critics.Q_R - kappa * critics.Q_KL


def contraction_check(
    shaped: ShapedMdp,
    policy,
    n_trials: int,
    rng: np.random.Generator,
    f: np.ndarray | None = None,
    scale: float = 10.0,
) -> float:
    """Largest observed ||TV - TW|| / ||V - W|| over random bounded pairs.

    Half the trials use constant-offset pairs (W = V + c), where the ratio is
    attained by the most persistent state.
    """
    if n_trials < 1:
        raise UsageError("n_trials must be >= 1")
    probs = as_probs(policy)
    worst = 0.0
    for i in range(n_trials):
        V = rng.uniform(-scale, scale, shaped.n_states)
        if i % 2:
            W = V + rng.uniform(-scale, scale)
        else:
            W = rng.uniform(-scale, scale, shaped.n_states)
        denom = np.max(np.abs(V - W))
        if denom == 0.0:
            continue
        diff = apply_eval_operator(V, probs, shaped, f) - apply_eval_operator(W, probs, shaped, f)
        worst = max(worst, float(np.max(np.abs(diff)) / denom))
    return worst


def write_tables_csv(path, **tables: np.ndarray) -> None:
    """Write (S, A) or (S,) tables as long-format CSV rows: table, state, action, value."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["table", "state", "action", "value"])
        for name, table in tables.items():
            arr = np.asarray(table, dtype=float)
            if arr.ndim == 1:
                arr = arr[:, None]
                actions = [""]
            else:
                actions = list(range(arr.shape[1]))
            for s in range(arr.shape[0]):
                for j, a in enumerate(actions):
                    writer.writerow([name, s, a, repr(float(arr[s, j]))])
