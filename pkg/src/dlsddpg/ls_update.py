"""Closed-form output-layer updates and the regularization schedule.

Only ``w_out`` of each network is touched here; the hidden layers stay as
the gradient updates left them and act as a fixed feature map during the
solve.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, NotPositiveDefinite
from .network import (
    ActorParams,
    BoxBounds,
    CriticParams,
    Minibatch,
    actor_forward,
    critic_forward,
    critic_targets,
)
from .numerics import spd_solve_right, symmetrize


def normalized_norm(w: np.ndarray) -> float:
    """Root mean square of the entries of ``w``."""
    w = np.asarray(w, dtype=np.float64)
    if w.size == 0:
        raise ValueError("empty matrix")
    return float(np.sqrt(np.mean(w * w)))


@dataclass
class RegCoeffState:
    """Current regularization coefficients plus their schedule constants.

    ``beta_a``/``beta_c`` weight the ridge/anchor terms of the least-squares
    solves; the primed ones weight the L2 penalties of the gradient losses.
    ``fixed_actor``/``fixed_critic`` pin a pair to a constant and switch off
    its schedule (used by the fixed-beta and zero-regularization ablations).
    """

    beta_a0: float = 0.01
    beta_a_min: float = 0.001
    beta_a_prime0: float = 0.01
    beta_a_prime_min: float = 0.001
    beta_c0: float = 0.01
    beta_c_min: float = 0.001
    beta_c_prime0: float = 0.01
    beta_c_prime_min: float = 0.001
    delta: float = 0.95
    c_a: float = 1.0
    c_c: float = 10.0
    fixed_actor: float | None = None
    fixed_critic: float | None = None
    # current values; None means "start at the initial value"
    beta_a: float | None = None
    beta_a_prime: float | None = None
    beta_c: float | None = None
    beta_c_prime: float | None = None

    def __post_init__(self) -> None:
        if self.beta_a is None:
            self.beta_a = self.beta_a0 if self.fixed_actor is None else self.fixed_actor
        if self.beta_a_prime is None:
            self.beta_a_prime = self.beta_a_prime0 if self.fixed_actor is None else self.fixed_actor
        if self.beta_c is None:
            self.beta_c = self.beta_c0 if self.fixed_critic is None else self.fixed_critic
        if self.beta_c_prime is None:
            self.beta_c_prime = self.beta_c_prime0 if self.fixed_critic is None else self.fixed_critic

    def values(self) -> tuple[float, float, float, float]:
        return self.beta_a, self.beta_a_prime, self.beta_c, self.beta_c_prime

    def in_range(self) -> bool:
        def ok(v, lo, hi, fixed):
            return v == fixed if fixed is not None else lo <= v <= hi

        return (
            ok(self.beta_a, self.beta_a_min, self.beta_a0, self.fixed_actor)
            and ok(self.beta_a_prime, self.beta_a_prime_min, self.beta_a_prime0, self.fixed_actor)
            and ok(self.beta_c, self.beta_c_min, self.beta_c0, self.fixed_critic)
            and ok(self.beta_c_prime, self.beta_c_prime_min, self.beta_c_prime0, self.fixed_critic)
        )


def _schedule(value: float, init: float, floor: float, delta: float, reset: bool) -> float:
    return init if reset else max(delta * value, floor)


def update_coeffs(state: RegCoeffState, n_theta: float, n_phi: float) -> RegCoeffState:
    """One scheduler step: reset a pair to its initial values when the
    matching output-weight norm exceeds its threshold, otherwise decay it
    geometrically down to its floor."""
    if not (np.isfinite(n_theta) and np.isfinite(n_phi)):
        raise ValueError("norms must be finite")
    new = dataclasses.replace(state)
    if state.fixed_actor is None:
        reset = n_theta > state.c_a
        new.beta_a = _schedule(state.beta_a, state.beta_a0, state.beta_a_min, state.delta, reset)
        new.beta_a_prime = _schedule(
            state.beta_a_prime, state.beta_a_prime0, state.beta_a_prime_min, state.delta, reset
        )
    if state.fixed_critic is None:
        reset = n_phi > state.c_c
        new.beta_c = _schedule(state.beta_c, state.beta_c0, state.beta_c_min, state.delta, reset)
        new.beta_c_prime = _schedule(
            state.beta_c_prime, state.beta_c_prime0, state.beta_c_prime_min, state.delta, reset
        )
    return new


# ------------------------------------------------------------- solves


def critic_normal_equations(
    features: np.ndarray, targets: np.ndarray, beta_c: float
) -> tuple[np.ndarray, np.ndarray]:
    n, k = features.shape
    a = symmetrize(features.T @ features) + beta_c * n * np.eye(k)
    b = targets @ features
    return a, b


def critic_lr_update(
    critic: CriticParams,
    actor_target: ActorParams,
    critic_target: CriticParams,
    mb: Minibatch,
    gamma: float,
    beta_c: float,
    bounds: BoxBounds,
) -> CriticParams:
    """Ridge-regress bootstrapped targets onto the critic's hidden features.

    Targets use the target networks and the clipped target-actor action (no
    quasi-Newton refinement). Returns a new parameter set whose input
    tensors are copies of the current ones and whose ``w_out`` is the
    solution.
    """
    if len(mb) == 0:
        raise ValueError("empty minibatch")
    y = critic_targets(actor_target, critic_target, mb, gamma, bounds)
    _, x = critic_forward(critic, mb.s, mb.a)
    a, b = critic_normal_equations(x, y, beta_c)
    try:
        w = spd_solve_right(a, b[None, :])
    except NotPositiveDefinite as exc:
        raise NotPositiveDefinite(f"critic LR solve failed (beta_c={beta_c:g}): {exc}") from exc
    out = critic.copy()
    out.w_out = w
    return out


def actor_normal_equations(
    x_lr: np.ndarray,
    o: np.ndarray,
    x_mb: np.ndarray,
    theta_temp: np.ndarray,
    w_a: float,
    beta_a: float,
) -> tuple[np.ndarray, np.ndarray]:
    """A = Xᵀ X + w_a (X_mbᵀ X_mb + beta_a N I);  b = Oᵀ X + w_a θ_temp (same bracket)."""
    n, k = x_mb.shape
    anchor = symmetrize(x_mb.T @ x_mb) + beta_a * n * np.eye(k)
    a = symmetrize(x_lr.T @ x_lr) + w_a * anchor
    b = o.T @ x_lr + w_a * (theta_temp @ anchor)
    return a, b


def actor_lr_update(
    actor: ActorParams,
    lr_pairs: Sequence[tuple[np.ndarray, np.ndarray]] | tuple[np.ndarray, np.ndarray],
    mb: Minibatch,
    w_a: float,
    beta_a: float,
) -> ActorParams:
    """Regress stored optimal actions onto the actor's hidden features,
    anchored to the current output weights by the replay minibatch.

    ``lr_pairs`` is either a list of ``(s, o)`` pairs or a ``(S, O)`` array
    tuple. Features of the stored states are recomputed with the current
    input weights.
    """
    if isinstance(lr_pairs, tuple) and isinstance(lr_pairs[0], np.ndarray) and lr_pairs[0].ndim == 2:
        states, o = (np.asarray(v, dtype=np.float64) for v in lr_pairs)
    else:
        if len(lr_pairs) == 0:
            raise ValueError("no (state, optimal action) pairs")
        states = np.array([p[0] for p in lr_pairs], dtype=np.float64)
        o = np.array([p[1] for p in lr_pairs], dtype=np.float64)
    if o.ndim == 1:
        o = o[:, None]
    if o.shape[1] != actor.action_dim or states.shape[0] != o.shape[0]:
        raise DimensionMismatch("optimal actions do not match the actor/state count")
    theta_temp = actor.w_out.copy()
    _, x_lr = actor_forward(actor, states)
    _, x_mb = actor_forward(actor, mb.s)
    a, b = actor_normal_equations(x_lr, o, x_mb, theta_temp, w_a, beta_a)
    try:
        w = spd_solve_right(a, b)
    except NotPositiveDefinite as exc:
        raise NotPositiveDefinite(f"actor LR solve failed (beta_a={beta_a:g}): {exc}") from exc
    out = actor.copy()
    out.w_out = w
    return out
