"""Learner configuration and dual (temperature) state."""

from __future__ import annotations

import math
from dataclasses import dataclass

from sdh.errors import UsageError

AS_SAC_VARIANTS = ("AS_SAC_full", "AS_SAC_naive_critic", "AS_SAC_const_kappa", "AS_SAC_naive_tuning")
VARIANTS = AS_SAC_VARIANTS + ("VT_MPO",)


@dataclass
class LearnerConfig:
    """Hyperparameters of one tabular learner.

    ``c_lc=None`` picks the living-cost constant implied by the variant
    (zero for the naive critic, H_tgt otherwise). ``gamma=None`` uses the
    environment discount.
    """

    variant: str = "AS_SAC_full"
    gamma: float | None = None
    n_step: int = 5
    batch_size: int = 64
    actor_lr: float = 0.5
    critic_lr: float = 0.2
    dual_lr: float = 0.01
    tau: float = 0.05
    c_lc: str | None = None
    init_kappa: float = 1.0
    kl_budget_eps: float = 1.0
    target_entropy_frac: float = 0.5
    init_eta: float = 1.0
    mpo_kl_eps: float = 0.1
    mpo_every: int = 10
    m_step_iters: int = 20
    m_step_lr: float = 1.0
    replay_capacity: int = 100_000
    warmup_steps: int = 100
    max_episode_steps: int = 100
    target_mode: str = "exact"
    gi_variant: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise UsageError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        for name in ("actor_lr", "critic_lr", "tau", "init_kappa", "init_eta", "mpo_kl_eps", "m_step_lr"):
            if not getattr(self, name) > 0:
                raise UsageError(f"{name} must be positive")
        if self.dual_lr < 0:
            raise UsageError("dual_lr must be nonnegative")
        for name in ("n_step", "batch_size", "mpo_every", "m_step_iters", "replay_capacity", "max_episode_steps"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be >= 1")
        if self.c_lc not in (None, "H_tgt", "zero"):
            raise UsageError("c_lc must be 'H_tgt', 'zero' or null")
        if self.target_mode not in ("exact", "sample"):
            raise UsageError("target_mode must be 'exact' or 'sample'")
        if self.gamma is not None and not 0.0 < self.gamma < 1.0:
            raise UsageError("gamma must lie in (0, 1)")

    @property
    def is_as_sac(self) -> bool:
        return self.variant in AS_SAC_VARIANTS

    @property
    def two_critics(self) -> bool:
        return self.variant in ("AS_SAC_full", "AS_SAC_naive_critic")

    def living_cost_mode(self) -> str:
        if self.c_lc is not None:
            return self.c_lc
        return "zero" if self.variant == "AS_SAC_naive_critic" else "H_tgt"


@dataclass
class DualState:
    """log_kappa parameterises the AS-SAC temperature; eta_E is the MPO E-step temperature."""

    log_kappa: float = 0.0
    kl_budget_eps: float = 1.0
    eta_E: float = 1.0
    mpo_kl_eps: float = 0.1
    H_tgt: float = 0.0

    def __post_init__(self):
        if not self.eta_E > 0:
            raise UsageError("eta_E must be positive")
        if not math.isfinite(self.log_kappa):
            raise UsageError("log_kappa must be finite")

    @property
    def kappa(self) -> float:
        return math.exp(self.log_kappa)
