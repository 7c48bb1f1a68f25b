"""The DLS-DDPG training loop, evaluation protocol and learning curves."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..agent import (
    AgentState,
    compute_optimal_for_storage,
    policy_action,
    random_action,
    select_action_aac,
    select_action_oac,
)
from ..envs import make_env
from ..errors import DivergenceAbort, NonFiniteLoss, NotPositiveDefinite
from ..ls_update import actor_lr_update, critic_lr_update, normalized_norm, update_coeffs
from ..network import ddpg_actor_step, ddpg_critic_step, soft_update
from ..numerics import Rng, make_rng
from ..replay import LrBuffer, TransitionBuffer
from .config import TrainConfig

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "step", "eval_mean", "eval_std", "eval_ma10", "n_theta", "n_phi",
    "beta_a", "beta_a_prime", "beta_c", "beta_c_prime",
)


@dataclass
class EvalRecord:
    step: int
    eval_mean: float
    eval_std: float
    eval_ma10: float
    n_theta: float
    n_phi: float
    beta_a: float
    beta_a_prime: float
    beta_c: float
    beta_c_prime: float

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, c) for c in CSV_COLUMNS)


@dataclass
class LrEvent:
    """What happened at one least-squares update (for audit of the beta schedule)."""

    step: int
    n_theta: float
    n_phi: float
    betas_before: tuple[float, float, float, float]
    betas_after: tuple[float, float, float, float]
    actor_reset: bool
    critic_reset: bool
    actor_solved: bool
    critic_solved: bool


@dataclass
class LearningCurve:
    records: list[EvalRecord] = field(default_factory=list)
    lr_events: list[LrEvent] = field(default_factory=list)
    diverged: str | None = None

    @property
    def steps(self) -> list[int]:
        return [r.step for r in self.records]

    @property
    def raw(self) -> list[float]:
        return [r.eval_mean for r in self.records]

    @property
    def smoothed(self) -> list[float]:
        return [r.eval_ma10 for r in self.records]

    def final_ma(self) -> float:
        return self.records[-1].eval_ma10 if self.records else math.nan

    def to_csv(self) -> str:
        lines = [",".join(CSV_COLUMNS)]
        for r in self.records:
            lines.append(",".join(_fmt(v) for v in r.as_tuple()))
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".17g")


def moving_average(values: Sequence[float], window: int = 10) -> list[float]:
    """Trailing mean; the first window-1 entries average what is available."""
    if window < 1:
        raise ValueError("window must be >= 1")
    out = []
    for k in range(len(values)):
        chunk = values[max(0, k - window + 1): k + 1]
        out.append(float(np.mean(chunk)))
    return out


Policy = Callable[[np.ndarray], np.ndarray]


def evaluate(
    policy: Policy | None,
    env_name: str,
    episodes: int,
    rng: Rng,
) -> tuple[float, float, list[float]]:
    """Run full noise-free episodes; ``policy=None`` means uniform random actions.

    Returns mean, (population) standard deviation and the per-episode returns.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    env = make_env(env_name)
    bounds = env.spec.bounds
    returns = []
    for _ in range(episodes):
        obs = env.reset(rng)
        total = 0.0
        while True:
            a = random_action(rng, bounds) if policy is None else policy(obs)
            res = env.step(a)
            total += res.reward
            obs = res.obs
            if res.terminated or res.truncated:
                break
        returns.append(total)
    arr = np.array(returns)
    return float(arr.mean()), float(arr.std()), returns


def eval_rng(seed: int, step: int) -> Rng:
    # stateless per evaluation, so evaluations never perturb the training stream
    return make_rng(np.random.SeedSequence([seed, 0x5EED, step]))


class Trainer:
    """Owns every piece of mutable run state; ``run`` advances environment steps."""

    def __init__(self, cfg: TrainConfig) -> None:
        self.cfg = cfg.validate()
        self.env = make_env(cfg.env)
        self.spec = self.env.spec
        self.bounds = self.spec.bounds
        self.qn = cfg.qn_config()
        self.rng = make_rng(cfg.seed)
        self.agent = AgentState.create(
            self.rng, self.spec.obs_dim, self.spec.action_dim, cfg.hidden,
            lr=cfg.learning_rate, coeffs=cfg.reg_coeffs(),
        )
        self.buffer = TransitionBuffer(cfg.buffer_capacity, self.spec.obs_dim, self.spec.action_dim)
        self.lr_buffer = LrBuffer()
        self.t = 0
        self.obs = self.env.reset(self.rng)
        self.curve = LearningCurve()

    # ------------------------------------------------------------ pieces

    @property
    def needs_optimal_action(self) -> bool:
        return self.cfg.action_mode == "oac" or self.cfg.use_lr_actor

    def _choose(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
        cfg, agent = self.cfg, self.agent
        if self.t <= cfg.t_rand:
            return random_action(self.rng, self.bounds), None
        if cfg.action_mode == "oac":
            ch = select_action_oac(agent, s, self.bounds, cfg.b, self.qn, self.rng, True, cfg.noise_sigma)
            return ch.a, ch.o
        ch = select_action_aac(agent, s, self.bounds, self.rng, True, cfg.noise_sigma)
        o = None
        if cfg.use_lr_actor:
            o = compute_optimal_for_storage(agent, s, self.bounds, cfg.b, self.qn, mu=ch.mu)
        return ch.a, o

    def _ddpg_update(self, critic_on: bool, actor_on: bool) -> None:
        if not (critic_on or actor_on):
            return
        cfg, ag = self.cfg, self.agent
        batch = self.buffer.sample(self.rng, cfg.n_mb)
        try:
            if critic_on:
                ddpg_critic_step(
                    ag.critic, (ag.actor_target, ag.critic_target), batch, cfg.gamma,
                    ag.coeffs.beta_c_prime, ag.critic_adam, self.bounds,
                )
            if actor_on:
                ddpg_actor_step(
                    ag.actor, ag.critic, batch, cfg.c, ag.coeffs.beta_a_prime,
                    self.bounds, ag.actor_adam,
                )
        except NonFiniteLoss as exc:
            raise DivergenceAbort(str(exc), self.t) from exc
        if critic_on:
            soft_update(ag.critic_target, ag.critic, cfg.tau_ddpg)
        if actor_on:
            soft_update(ag.actor_target, ag.actor, cfg.tau_ddpg)

    def _lr_event(self) -> None:
        cfg, ag = self.cfg, self.agent
        n_theta = normalized_norm(ag.actor.w_out)
        n_phi = normalized_norm(ag.critic.w_out)
        if not (np.isfinite(n_theta) and np.isfinite(n_phi)):
            raise DivergenceAbort("output weights are non-finite", self.t)
        before = ag.coeffs.values()
        ag.coeffs = update_coeffs(ag.coeffs, n_theta, n_phi)
        pairs = self.lr_buffer.arrays() if len(self.lr_buffer) else None
        run_critic = cfg.use_lr_critic
        run_actor = cfg.use_lr_actor and pairs is not None
        if run_critic or run_actor:
            mb = self.buffer.sample(self.rng, cfg.n_lrmb)
            try:
                if run_critic:
                    ag.critic = critic_lr_update(
                        ag.critic, ag.actor_target, ag.critic_target, mb,
                        cfg.gamma, ag.coeffs.beta_c, self.bounds,
                    )
                if run_actor:
                    ag.actor = actor_lr_update(ag.actor, pairs, mb, cfg.w_a, ag.coeffs.beta_a)
            except NotPositiveDefinite as exc:
                raise DivergenceAbort(str(exc), self.t) from exc
            if run_critic:
                soft_update(ag.critic_target, ag.critic, cfg.tau_lr)
            if run_actor:
                soft_update(ag.actor_target, ag.actor, cfg.tau_lr)
        self.lr_buffer.drain()
        self.curve.lr_events.append(
            LrEvent(
                step=self.t, n_theta=n_theta, n_phi=n_phi,
                betas_before=before, betas_after=ag.coeffs.values(),
                actor_reset=n_theta > ag.coeffs.c_a, critic_reset=n_phi > ag.coeffs.c_c,
                actor_solved=run_actor, critic_solved=run_critic,
            )
        )
        log.debug("LR event t=%d n_theta=%.4g n_phi=%.4g betas=%s", self.t, n_theta, n_phi, ag.coeffs.values())

    def policy(self) -> Policy | None:
        """Noise-free policy for evaluation, on a frozen snapshot of the agent."""
        if self.t <= self.cfg.t_rand:
            return None
        snap = self.agent.snapshot()
        bounds, cfg = self.bounds, self.cfg
        if cfg.action_mode == "oac":
            return lambda s: select_action_oac(snap, s, bounds, cfg.b, self.qn, None, False).a
        return lambda s: policy_action(snap, s, bounds)

    def _evaluate(self) -> None:
        cfg, ag = self.cfg, self.agent
        mean, std, _ = evaluate(self.policy(), cfg.env, cfg.eval_episodes, eval_rng(cfg.seed, self.t))
        raw = self.curve.raw + [mean]
        ma = moving_average(raw[-cfg.moving_average_window:], cfg.moving_average_window)[-1]
        ba, bap, bc, bcp = ag.coeffs.values()
        self.curve.records.append(
            EvalRecord(
                self.t, mean, std, ma,
                normalized_norm(ag.actor.w_out), normalized_norm(ag.critic.w_out),
                ba, bap, bc, bcp,
            )
        )
        log.info("t=%d eval=%.2f ma=%.2f", self.t, mean, ma)

    # ------------------------------------------------------------ main loop

    def step(self) -> None:
        cfg = self.cfg
        self.t += 1
        s = self.obs
        a, o = self._choose(s)
        res = self.env.step(a)
        self.buffer.push(s, a, res.reward, res.obs, 1.0 if res.terminated else 0.0)
        if self.t > cfg.t_rand:
            if o is not None and cfg.use_lr_actor:
                self.lr_buffer.push(s, o)
            self._ddpg_update(cfg.use_ddpg_critic, cfg.use_ddpg_actor)
        elif self.t == cfg.t_rand:
            # the initial burst also trains networks whose per-step gradient
            # update is ablated, as long as they are trained at all
            critic_on = cfg.use_ddpg_critic or cfg.use_lr_critic
            actor_on = cfg.use_ddpg_actor or cfg.use_lr_actor
            for _ in range(cfg.t_rand):
                self._ddpg_update(critic_on, actor_on)
        if self.t % cfg.t_lr == 0 and self.t > cfg.t_rand:
            self._lr_event()
        if not self.agent.all_finite():
            raise DivergenceAbort("parameters became non-finite", self.t)
        self.obs = self.env.reset(self.rng) if (res.terminated or res.truncated) else res.obs
        if self.t % cfg.eval_interval == 0:
            self._evaluate()

    def run(self, until: int | None = None) -> LearningCurve:
        """Advance to global step ``until`` (default ``t_max``).

        Divergence ends the run early; the curve up to that point is kept
        and ``curve.diverged`` holds the reason.
        """
        until = self.cfg.t_max if until is None else min(until, self.cfg.t_max)
        try:
            while self.t < until:
                self.step()
        except DivergenceAbort as exc:
            log.error("run diverged at step %d: %s", exc.step, exc)
            self.curve.diverged = f"step {exc.step}: {exc}"
        return self.curve


def run_training(cfg: TrainConfig) -> LearningCurve:
    return Trainer(cfg).run()
