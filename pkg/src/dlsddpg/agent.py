"""Network ownership and action selection.

Two ways of choosing the executed action:

* ``oac`` - refine the clipped actor output with a bounded quasi-Newton
  ascent on Q (the optimal action ``o``), then add exploration noise.
* ``aac`` - add noise to the clipped actor output directly.

In both modes ``o`` can be computed for the LR training buffer.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import bounded_qn
from .bounded_qn import QnConfig
from .ls_update import RegCoeffState
from .network import (
    ActorParams,
    AdamState,
    BoxBounds,
    CriticParams,
    QSurface,
    actor_forward,
    init_actor,
    init_critic,
)
from .numerics import Rng, clip_box, gaussian_vector

log = logging.getLogger(__name__)


@dataclass
class AgentState:
    actor: ActorParams
    critic: CriticParams
    actor_target: ActorParams
    critic_target: CriticParams
    actor_adam: AdamState
    critic_adam: AdamState
    coeffs: RegCoeffState = field(default_factory=RegCoeffState)
    qn_calls: int = 0

    @classmethod
    def create(
        cls,
        rng: Rng,
        state_dim: int,
        action_dim: int,
        hidden: int,
        lr: float = 1e-3,
        coeffs: RegCoeffState | None = None,
    ) -> "AgentState":
        actor = init_actor(rng, state_dim, action_dim, hidden)
        critic = init_critic(rng, state_dim, action_dim, hidden)
        return cls(
            actor=actor,
            critic=critic,
            actor_target=actor.copy(),
            critic_target=critic.copy(),
            actor_adam=AdamState.like(actor, lr),
            critic_adam=AdamState.like(critic, lr),
            coeffs=coeffs if coeffs is not None else RegCoeffState(),
        )

    def snapshot(self) -> "AgentState":
        """Deep copy, safe to hand to an evaluator."""
        return AgentState(
            self.actor.copy(),
            self.critic.copy(),
            self.actor_target.copy(),
            self.critic_target.copy(),
            self.actor_adam.copy(),
            self.critic_adam.copy(),
            RegCoeffState(**vars(self.coeffs)),
            self.qn_calls,
        )

    def all_finite(self) -> bool:
        return all(
            p.all_finite() for p in (self.actor, self.critic, self.actor_target, self.critic_target)
        )


@dataclass
class ActionChoice:
    a: np.ndarray
    mu: np.ndarray
    o: np.ndarray | None = None


def qn_box(mu: np.ndarray, bounds: BoxBounds, b: float) -> BoxBounds:
    """Search box for the optimal action: [C(mu - b), C(mu + b)]."""
    return BoxBounds(bounds.clip(mu - b), bounds.clip(mu + b))


def policy_action(state: AgentState, s: np.ndarray, bounds: BoxBounds) -> np.ndarray:
    return bounds.clip(actor_forward(state.actor, s)[0])


def compute_optimal_for_storage(
    state: AgentState,
    s: np.ndarray,
    bounds: BoxBounds,
    b: float,
    qn: QnConfig,
    mu: np.ndarray | None = None,
) -> np.ndarray:
    """Approximate argmax of Q(s, .) in the b-box around the clipped actor output."""
    if mu is None:
        mu = policy_action(state, s, bounds)
    surface = QSurface(state.critic, s)
    state.qn_calls += 1
    res = bounded_qn.minimize(surface.neg, mu, qn_box(mu, bounds, b), qn)
    if res.status == "nonfinite":
        log.warning("critic is non-finite at the actor action; using o = mu")
        return mu.copy()
    return res.x


def select_action_oac(
    state: AgentState,
    s: np.ndarray,
    bounds: BoxBounds,
    b: float,
    qn: QnConfig,
    rng: Rng,
    with_noise: bool,
    sigma: float = 0.1,
) -> ActionChoice:
    mu = policy_action(state, s, bounds)
    o = compute_optimal_for_storage(state, s, bounds, b, qn, mu=mu)
    a = o + gaussian_vector(rng, bounds.dim, sigma) if with_noise else o
    return ActionChoice(a=clip_box(a, bounds.low, bounds.high), mu=mu, o=o)


def select_action_aac(
    state: AgentState,
    s: np.ndarray,
    bounds: BoxBounds,
    rng: Rng,
    with_noise: bool,
    sigma: float = 0.1,
) -> ActionChoice:
    mu = policy_action(state, s, bounds)
    a = mu + gaussian_vector(rng, bounds.dim, sigma) if with_noise else mu
    return ActionChoice(a=clip_box(a, bounds.low, bounds.high), mu=mu)


def random_action(rng: Rng, bounds: BoxBounds) -> np.ndarray:
    return rng.uniform(bounds.low, bounds.high)
