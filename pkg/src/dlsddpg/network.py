"""One-hidden-layer tanh actor and critic with hand-written backprop.

Shapes (H hidden units, Ds state dims, Da action dims):

    actor   w_in  (H, Ds+1)   w_out (Da, H+1)
    critic  w_s_in (H, Ds+1)  w_a_in (H, Da)   w_out (1, H+1)

The state is augmented with a trailing 1 before the input layer and the
hidden layer is augmented with a trailing 1 before the linear output layer,
so the last column of every ``w_out`` is a bias.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonFiniteLoss, ShapeMismatch
from .numerics import Rng, clip_box


def _augment(x: np.ndarray) -> np.ndarray:
    ones = np.ones(x.shape[:-1] + (1,))
    return np.concatenate([x, ones], axis=-1)


class _Params:
    """Shared behaviour of the parameter containers (dataclass subclasses)."""

    def tensors(self) -> list[np.ndarray]:
        return [getattr(self, f.name) for f in dataclasses.fields(self)]

    def names(self) -> list[str]:
        return [f.name for f in dataclasses.fields(self)]

    def copy(self):
        return type(self)(*(t.copy() for t in self.tensors()))

    def squared_norm(self) -> float:
        return float(sum(np.sum(t * t) for t in self.tensors()))

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(t)) for t in self.tensors())

    def allclose(self, other, **kw) -> bool:
        return all(np.allclose(a, b, **kw) for a, b in zip(self.tensors(), other.tensors()))

    def equal(self, other) -> bool:
        return all(np.array_equal(a, b) for a, b in zip(self.tensors(), other.tensors()))


@dataclass
class ActorParams(_Params):
    w_in: np.ndarray
    w_out: np.ndarray

    @property
    def hidden(self) -> int:
        return self.w_in.shape[0]

    @property
    def state_dim(self) -> int:
        return self.w_in.shape[1] - 1

    @property
    def action_dim(self) -> int:
        return self.w_out.shape[0]


@dataclass
class CriticParams(_Params):
    w_s_in: np.ndarray
    w_a_in: np.ndarray
    w_out: np.ndarray

    @property
    def hidden(self) -> int:
        return self.w_s_in.shape[0]

    @property
    def state_dim(self) -> int:
        return self.w_s_in.shape[1] - 1

    @property
    def action_dim(self) -> int:
        return self.w_a_in.shape[1]


@dataclass
class AdamState:
    """Adam moment accumulators mirroring one parameter set."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def like(cls, params: _Params, lr: float = 1e-3) -> "AdamState":
        return cls(
            m=[np.zeros_like(t) for t in params.tensors()],
            v=[np.zeros_like(t) for t in params.tensors()],
            lr=lr,
        )

    def copy(self) -> "AdamState":
        return dataclasses.replace(
            self, m=[a.copy() for a in self.m], v=[a.copy() for a in self.v]
        )

    def apply(self, params: _Params, grads: list[np.ndarray]) -> None:
        """In-place Adam step on ``params``."""
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params.tensors(), grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class Minibatch:
    s: np.ndarray  # (N, Ds)
    a: np.ndarray  # (N, Da)
    r: np.ndarray  # (N,)
    s_next: np.ndarray  # (N, Ds)
    d: np.ndarray  # (N,) of 0.0/1.0

    def __len__(self) -> int:
        return self.r.shape[0]


@dataclass(frozen=True)
class BoxBounds:
    low: np.ndarray
    high: np.ndarray

    def __post_init__(self) -> None:
        low = np.atleast_1d(np.asarray(self.low, dtype=np.float64))
        high = np.atleast_1d(np.asarray(self.high, dtype=np.float64))
        if low.shape != high.shape:
            raise DimensionMismatch("low/high shapes differ")
        if not (np.all(np.isfinite(low)) and np.all(np.isfinite(high))):
            raise ValueError("bounds must be finite")
        if np.any(low > high):
            raise ValueError("low must not exceed high")
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)

    @property
    def dim(self) -> int:
        return self.low.shape[0]

    def clip(self, v: np.ndarray) -> np.ndarray:
        return clip_box(v, self.low, self.high)


# ---------------------------------------------------------------- forward
# Inputs are small (Ds + 1 + Da columns), so the bias is folded in by
# augmenting the input; on the output side ``h @ W[:, :-1].T + W[:, -1]``
# avoids materializing the augmented hidden layer.


def _check_state(params, s: np.ndarray) -> None:
    if s.shape[-1] != params.state_dim:
        raise DimensionMismatch(f"state has {s.shape[-1]} dims, network expects {params.state_dim}")


def _affine(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    return x @ w[:, :-1].T + w[:, -1]


def _tanh_inplace(z: np.ndarray) -> np.ndarray:
    return np.tanh(z, out=z)


def _dtanh(h: np.ndarray) -> np.ndarray:
    """1 - h^2 with a single temporary."""
    d = h * h
    np.subtract(1.0, d, out=d)
    return d


def _actor_tanh(params: ActorParams, s: np.ndarray) -> np.ndarray:
    return _tanh_inplace(_augment(s) @ params.w_in.T)


def _critic_input(s: np.ndarray, a: np.ndarray) -> np.ndarray:
    ones = np.ones(s.shape[:-1] + (1,))
    return np.concatenate([s, ones, a], axis=-1)


def _critic_tanh(params: CriticParams, s: np.ndarray, a: np.ndarray) -> np.ndarray:
    _check_state(params, s)
    if a.shape[-1] != params.action_dim:
        raise DimensionMismatch(f"action has {a.shape[-1]} dims, critic expects {params.action_dim}")
    w = np.concatenate([params.w_s_in, params.w_a_in], axis=1)
    return _tanh_inplace(_critic_input(s, a) @ w.T)


def _critic_q(params: CriticParams, h: np.ndarray) -> np.ndarray:
    return h @ params.w_out[0, :-1] + params.w_out[0, -1]


def _critic_dq_da(params: CriticParams, h: np.ndarray) -> np.ndarray:
    d = _dtanh(h)
    d *= params.w_out[0, :-1]
    return d @ params.w_a_in


def actor_forward(params: ActorParams, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Raw (unclipped) action and augmented hidden layer.

    Accepts a single state ``(Ds,)`` or a batch ``(N, Ds)``.
    """
    s = np.asarray(s, dtype=np.float64)
    _check_state(params, s)
    hidden = _augment(_actor_tanh(params, s))
    return hidden @ params.w_out.T, hidden


def actor_raw(params: ActorParams, s: np.ndarray) -> np.ndarray:
    """Raw actor output only (skips building the augmented hidden layer)."""
    s = np.asarray(s, dtype=np.float64)
    _check_state(params, s)
    return _affine(_actor_tanh(params, s), params.w_out)


def actor_action(params: ActorParams, s: np.ndarray, bounds: BoxBounds) -> np.ndarray:
    """Clipped actor output, i.e. the deterministic policy."""
    return bounds.clip(actor_raw(params, s))


def critic_forward(params: CriticParams, s: np.ndarray, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Q value and augmented hidden layer; scalar q for a single (s, a)."""
    s = np.asarray(s, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    hidden = _augment(_critic_tanh(params, s, a))
    q = hidden @ params.w_out[0]
    return (float(q) if q.ndim == 0 else q), hidden


def critic_value(params: CriticParams, s: np.ndarray, a: np.ndarray) -> np.ndarray:
    return _critic_q(params, _critic_tanh(params, np.asarray(s, dtype=np.float64), np.asarray(a, dtype=np.float64)))


def grad_a_q(params: CriticParams, s: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Analytic dQ/da: sum_i w_out_i * w_a_in[i, j] * (1 - tanh(z_i)^2)."""
    h = _critic_tanh(params, np.asarray(s, dtype=np.float64), np.asarray(a, dtype=np.float64))
    return _critic_dq_da(params, h)


class QSurface:
    """Q(s, .) and its action gradient for one fixed state.

    The state half of the pre-activation is computed once so repeated
    evaluations inside the quasi-Newton search are cheap.
    """

    def __init__(self, params: CriticParams, s: np.ndarray) -> None:
        s = np.asarray(s, dtype=np.float64)
        _check_state(params, s)
        self._zs = params.w_s_in @ _augment(s)
        self._wa = params.w_a_in
        self._wo = params.w_out[0, :-1]
        self._bias = params.w_out[0, -1]

    def value(self, a: np.ndarray) -> float:
        return float(self._wo @ np.tanh(self._zs + self._wa @ a) + self._bias)

    def value_and_grad(self, a: np.ndarray) -> tuple[float, np.ndarray]:
        h = np.tanh(self._zs + self._wa @ a)
        q = float(self._wo @ h + self._bias)
        return q, (self._wo * (1.0 - h * h)) @ self._wa

    def neg(self, a: np.ndarray) -> tuple[float, np.ndarray]:
        """Objective for a minimizer: (-Q, -dQ/da)."""
        q, g = self.value_and_grad(a)
        return -q, -g


# ---------------------------------------------------------------- losses


def critic_targets(
    actor_targ: ActorParams,
    critic_targ: CriticParams,
    batch: Minibatch,
    gamma: float,
    bounds: BoxBounds,
) -> np.ndarray:
    """y = r + gamma (1 - d) Q_targ(s', clip(mu0_targ(s')))."""
    a_next = actor_action(actor_targ, batch.s_next, bounds)
    q_next = critic_value(critic_targ, batch.s_next, a_next)
    return batch.r + gamma * (1.0 - batch.d) * q_next


def _backprop_input(dz: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Gradient of an input tensor acting on the augmented input ``(x; 1)``."""
    return np.concatenate([dz.T @ x, dz.sum(axis=0)[:, None]], axis=1)


def _backprop_output(dout: np.ndarray, h: np.ndarray) -> np.ndarray:
    return np.concatenate([dout.T @ h, dout.sum(axis=0)[:, None]], axis=1)


def critic_loss_and_grads(
    params: CriticParams, batch: Minibatch, y: np.ndarray, beta_prime: float
) -> tuple[float, list[np.ndarray]]:
    """Mean squared TD error plus ``beta_prime * ||phi||^2`` over all tensors."""
    n = len(batch)
    h = _critic_tanh(params, batch.s, batch.a)
    err = _critic_q(params, h) - y
    loss = float(err @ err) / n + beta_prime * params.squared_norm()

    dq = (2.0 / n) * err
    g_out = _backprop_output(dq[:, None], h)
    dz = _dtanh(h)
    dz *= dq[:, None]
    dz *= params.w_out[0, :-1]
    grads = [_backprop_input(dz, batch.s), dz.T @ batch.a, g_out]
    if beta_prime:
        grads = [g + 2.0 * beta_prime * p for g, p in zip(grads, params.tensors())]
    return loss, grads


def actor_loss_and_grads(
    params: ActorParams,
    critic: CriticParams,
    states: np.ndarray,
    c: float,
    beta_prime: float,
    bounds: BoxBounds,
) -> tuple[float, list[np.ndarray]]:
    """Actor objective: mean[-Q(s, C(mu0)) + c/Da ||mu0 - C(mu0)||^2] + beta' ||theta||^2.

    C is differentiated with slope 1 on the closed box and 0 outside it.
    """
    n, da = states.shape[0], params.action_dim
    h = _actor_tanh(params, states)
    mu0 = _affine(h, params.w_out)
    mu = bounds.clip(mu0)
    excess = mu0 - mu

    hc = _critic_tanh(critic, states, mu)
    q = _critic_q(critic, hc)
    loss = -float(np.mean(q)) + (c / da) * float(np.sum(excess * excess)) / n
    loss += beta_prime * params.squared_norm()

    inside = (mu0 >= bounds.low) & (mu0 <= bounds.high)
    dmu0 = (-_critic_dq_da(critic, hc) * inside + (2.0 * c / da) * excess) / n
    g_out = _backprop_output(dmu0, h)
    dz = dmu0 @ params.w_out[:, :-1]
    dz *= _dtanh(h)
    grads = [_backprop_input(dz, states), g_out]
    if beta_prime:
        grads = [g + 2.0 * beta_prime * p for g, p in zip(grads, params.tensors())]
    return loss, grads


def ddpg_critic_step(
    params: CriticParams,
    targets: tuple[ActorParams, CriticParams],
    batch: Minibatch,
    gamma: float,
    beta_c_prime: float,
    adam: AdamState,
    bounds: BoxBounds,
) -> float:
    """One Adam step on the regularized critic loss (in place). Returns the loss."""
    y = critic_targets(targets[0], targets[1], batch, gamma, bounds)
    loss, grads = critic_loss_and_grads(params, batch, y, beta_c_prime)
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"critic loss is {loss}")
    adam.apply(params, grads)
    return loss


def ddpg_actor_step(
    params: ActorParams,
    critic: CriticParams,
    batch: Minibatch,
    c: float,
    beta_a_prime: float,
    bounds: BoxBounds,
    adam: AdamState,
) -> float:
    """One Adam step on the penalized actor loss (in place). Returns the loss."""
    loss, grads = actor_loss_and_grads(params, critic, batch.s, c, beta_a_prime, bounds)
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"actor loss is {loss}")
    adam.apply(params, grads)
    return loss


def soft_update(target: _Params, main: _Params, tau: float) -> None:
    """target <- (1 - tau) target + tau main, in place on every tensor."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    for t, m in zip(target.tensors(), main.tensors()):
        if t.shape != m.shape:
            raise ShapeMismatch(f"target {t.shape} vs main {m.shape}")
        t *= 1.0 - tau
        t += tau * m


# ---------------------------------------------------------------- init


def _uniform(rng: Rng, rows: int, cols: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(cols)
    return rng.uniform(-bound, bound, size=(rows, cols))


def init_actor(rng: Rng, state_dim: int, action_dim: int, hidden: int) -> ActorParams:
    return ActorParams(
        w_in=_uniform(rng, hidden, state_dim + 1),
        w_out=_uniform(rng, action_dim, hidden + 1),
    )


def init_critic(rng: Rng, state_dim: int, action_dim: int, hidden: int) -> CriticParams:
    return CriticParams(
        w_s_in=_uniform(rng, hidden, state_dim + 1),
        w_a_in=_uniform(rng, hidden, action_dim),
        w_out=_uniform(rng, 1, hidden + 1),
    )
