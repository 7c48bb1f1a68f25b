"""Small deterministic continuous-control tasks.

``Pendulum`` is the classic swing-up (never terminates, 200-step limit).
``BalanceBot`` is a cart-pole balancing task with a failure condition, so
that terminal (d = 1) transitions show up in the replay data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ActionOutOfBounds
from .network import BoxBounds
from .numerics import Rng


@dataclass(frozen=True)
class EnvSpec:
    name: str
    obs_dim: int
    action_dim: int
    a_low: tuple[float, ...]
    a_high: tuple[float, ...]
    max_episode_steps: int

    @property
    def bounds(self) -> BoxBounds:
        return BoxBounds(np.array(self.a_low), np.array(self.a_high))


@dataclass(frozen=True)
class StepResult:
    obs: np.ndarray
    reward: float
    terminated: bool
    truncated: bool


def wrap_angle(x: float) -> float:
    """Map an angle into (-pi, pi]."""
    y = math.fmod(x + math.pi, 2.0 * math.pi)
    if y <= 0.0:
        y += 2.0 * math.pi
    return y - math.pi


class _Env:
    spec: EnvSpec
    state: np.ndarray
    elapsed: int = 0

    def _check_action(self, a) -> np.ndarray:
        a = np.atleast_1d(np.asarray(a, dtype=np.float64))
        lo, hi = np.array(self.spec.a_low), np.array(self.spec.a_high)
        if a.shape != lo.shape or np.any(a < lo) or np.any(a > hi) or not np.all(np.isfinite(a)):
            raise ActionOutOfBounds(f"action {a} outside [{lo}, {hi}]")
        return a

    def get_state(self) -> tuple[np.ndarray, int]:
        return self.state.copy(), self.elapsed

    def set_state(self, state: np.ndarray, elapsed: int = 0) -> None:
        self.state = np.array(state, dtype=np.float64)
        self.elapsed = int(elapsed)


class Pendulum(_Env):
    """Torque-limited pendulum; angle 0 is upright.

    State (theta, theta_dot); observation (cos theta, sin theta, theta_dot).
    """

    spec = EnvSpec("pendulum", 3, 1, (-2.0,), (2.0,), 200)
    g = 10.0
    m = 1.0
    l = 1.0
    dt = 0.05
    max_speed = 8.0

    def __init__(self) -> None:
        self.state = np.zeros(2)
        self.elapsed = 0

    def observe(self) -> np.ndarray:
        th, thdot = self.state
        return np.array([math.cos(th), math.sin(th), thdot])

    def reset(self, rng: Rng) -> np.ndarray:
        self.state = np.array([rng.uniform(-math.pi, math.pi), rng.uniform(-1.0, 1.0)])
        self.elapsed = 0
        return self.observe()

    def step(self, a) -> StepResult:
        u = float(self._check_action(a)[0])
        th, thdot = self.state
        reward = -(wrap_angle(th) ** 2 + 0.1 * thdot**2 + 0.001 * u**2)
        thdot = thdot + (3.0 * self.g / (2.0 * self.l) * math.sin(th) + 3.0 / (self.m * self.l**2) * u) * self.dt
        thdot = min(max(thdot, -self.max_speed), self.max_speed)
        th = th + thdot * self.dt
        self.state = np.array([th, thdot])
        self.elapsed += 1
        return StepResult(self.observe(), reward, False, self.elapsed >= self.spec.max_episode_steps)

    def energy(self) -> float:
        """Kinetic plus potential energy of the uniform rod (upright is the maximum)."""
        th, thdot = self.state
        inertia = self.m * self.l**2 / 3.0
        return 0.5 * inertia * thdot**2 + self.m * self.g * (self.l / 2.0) * math.cos(th)


class BalanceBot(_Env):
    """Cart-pole with a continuous force; fails when the pole tips or the cart leaves the track.

    State and observation (x, x_dot, theta, theta_dot), theta = 0 upright.
    Dynamics are the cart-pole equations linearized about upright, with
    explicit Euler.
    """

    spec = EnvSpec("balancebot", 4, 1, (-3.0,), (3.0,), 1000)
    gravity = 9.8
    cart_mass = 1.0
    pole_mass = 0.1
    half_length = 0.5
    dt = 0.02
    theta_limit = 0.2
    x_limit = 2.4

    def __init__(self) -> None:
        self.state = np.zeros(4)
        self.elapsed = 0

    def observe(self) -> np.ndarray:
        return self.state.copy()

    def reset(self, rng: Rng) -> np.ndarray:
        self.state = rng.uniform(-0.01, 0.01, size=4)
        self.elapsed = 0
        return self.observe()

    def failed(self, state: np.ndarray | None = None) -> bool:
        x, _, th, _ = self.state if state is None else state
        return abs(th) > self.theta_limit or abs(x) > self.x_limit

    def step(self, a) -> StepResult:
        force = float(self._check_action(a)[0])
        x, x_dot, th, th_dot = self.state
        total = self.cart_mass + self.pole_mass
        # small-angle model: sin(th) ~ th, cos(th) ~ 1, centripetal term dropped
        temp = force / total
        th_acc = (self.gravity * th - temp) / (
            self.half_length * (4.0 / 3.0 - self.pole_mass / total)
        )
        x_acc = temp - self.pole_mass * self.half_length * th_acc / total
        x = x + self.dt * x_dot
        x_dot = x_dot + self.dt * x_acc
        th = th + self.dt * th_dot
        th_dot = th_dot + self.dt * th_acc
        self.state = np.array([x, x_dot, th, th_dot])
        self.elapsed += 1
        terminated = self.failed()
        truncated = (not terminated) and self.elapsed >= self.spec.max_episode_steps
        return StepResult(self.observe(), 1.0, terminated, truncated)


ENVIRONMENTS = {"pendulum": Pendulum, "balancebot": BalanceBot}


def make_env(name: str) -> _Env:
    try:
        return ENVIRONMENTS[name]()
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}") from None
