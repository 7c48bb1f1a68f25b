"""Binary, little-endian checkpoints.

Layout::

    b"DLSD"  u32 version  u64 payload_length
    payload:
      env spec      str name, u32 obs_dim, u32 action_dim, f64[Da] low,
                    f64[Da] high, u32 max_episode_steps
      tensors       actor, critic, actor_target, critic_target; each tensor
                    is u32 rows, u32 cols, rows*cols f64 row-major
      adam          per network: u64 t, f64 lr/beta1/beta2/eps, m tensors, v tensors
      coefficients  f64 beta_a, beta_a_prime, beta_c, beta_c_prime
      u64 step
      rng           PCG64: u64 state_hi, state_lo, inc_hi, inc_lo, u32 has_uint32, u32 uinteger
      resume block  u64 qn_calls; replay buffer; LR buffer; environment state;
                    current observation; learning curve; LR event log;
                    str config (key=value text)

Strings are u32 length + UTF-8 bytes.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..agent import AgentState
from ..envs import EnvSpec
from ..errors import CorruptCheckpoint
from ..network import ActorParams, AdamState, CriticParams
from ..replay import LrBuffer, TransitionBuffer
from .config import TrainConfig
from .training import EvalRecord, LearningCurve, LrEvent, Trainer

MAGIC = b"DLSD"
VERSION = 1
_MASK64 = (1 << 64) - 1


@dataclass
class Checkpoint:
    env_spec: EnvSpec
    agent: AgentState
    step: int
    rng_state: dict
    buffer: TransitionBuffer
    lr_buffer: tuple[np.ndarray, np.ndarray]
    env_state: np.ndarray
    env_elapsed: int
    obs: np.ndarray
    curve: LearningCurve
    config_text: str
    version: int = VERSION

    @classmethod
    def from_trainer(cls, tr: Trainer) -> "Checkpoint":
        env_state, elapsed = tr.env.get_state()
        buf = tr.buffer
        buffer = TransitionBuffer.from_arrays(buf.capacity, buf.cursor, *(x.copy() for x in buf.arrays()))
        s, o = tr.lr_buffer.arrays()
        if len(tr.lr_buffer) == 0:
            s = np.zeros((0, tr.spec.obs_dim))
            o = np.zeros((0, tr.spec.action_dim))
        return cls(
            env_spec=tr.spec,
            agent=tr.agent.snapshot(),
            step=tr.t,
            rng_state=tr.rng.bit_generator.state,
            buffer=buffer,
            lr_buffer=(s, o),
            env_state=env_state,
            env_elapsed=elapsed,
            obs=np.array(tr.obs),
            curve=LearningCurve(list(tr.curve.records), list(tr.curve.lr_events), tr.curve.diverged),
            config_text=tr.cfg.to_text(),
        )

    def config(self) -> TrainConfig:
        return TrainConfig.from_text(self.config_text)

    def to_trainer(self, cfg: TrainConfig | None = None) -> Trainer:
        """Rebuild a trainer that continues exactly where this checkpoint stopped.

        ``cfg`` may override e.g. ``t_max``; everything else should match.
        """
        cfg = cfg if cfg is not None else self.config()
        tr = Trainer(cfg)
        tr.agent = self.agent.snapshot()
        tr.t = self.step
        tr.rng.bit_generator.state = self.rng_state
        buf = self.buffer
        tr.buffer = TransitionBuffer.from_arrays(buf.capacity, buf.cursor, *(x.copy() for x in buf.arrays()))
        tr.lr_buffer = LrBuffer()
        for s, o in zip(*self.lr_buffer):
            tr.lr_buffer.push(s, o)
        tr.env.set_state(self.env_state, self.env_elapsed)
        tr.obs = self.obs.copy()
        tr.curve = LearningCurve(list(self.curve.records), list(self.curve.lr_events), self.curve.diverged)
        return tr

    def to_bytes(self) -> bytes:
        w = _Writer()
        spec = self.env_spec
        w.string(spec.name)
        w.u32(spec.obs_dim)
        w.u32(spec.action_dim)
        w.f64s(spec.a_low)
        w.f64s(spec.a_high)
        w.u32(spec.max_episode_steps)
        ag = self.agent
        for p in (ag.actor, ag.critic, ag.actor_target, ag.critic_target):
            for t in p.tensors():
                w.tensor(t)
        for adam in (ag.actor_adam, ag.critic_adam):
            w.u64(adam.t)
            w.f64s((adam.lr, adam.beta1, adam.beta2, adam.eps))
            for t in adam.m + adam.v:
                w.tensor(t)
        w.f64s(ag.coeffs.values())
        w.u64(self.step)
        st = self.rng_state
        if st["bit_generator"] != "PCG64":
            raise ValueError("only PCG64 generator state can be stored")
        for v in (st["state"]["state"], st["state"]["inc"]):
            w.u64(v >> 64)
            w.u64(v & _MASK64)
        w.u32(st["has_uint32"])
        w.u32(st["uinteger"])
        # resume block
        w.u64(ag.qn_calls)
        buf = self.buffer
        w.u64(buf.capacity)
        w.u64(buf.cursor)
        s, a, r, s2, d = buf.arrays()
        for t in (s, a, r[:, None], s2, d[:, None]):
            w.tensor(t)
        w.tensor(self.lr_buffer[0])
        w.tensor(self.lr_buffer[1])
        w.tensor(self.env_state[None, :])
        w.u64(self.env_elapsed)
        w.tensor(self.obs[None, :])
        w.u32(len(self.curve.records))
        for rec in self.curve.records:
            w.u64(rec.step)
            w.f64s(rec.as_tuple()[1:])
        w.u32(len(self.curve.lr_events))
        for ev in self.curve.lr_events:
            w.u64(ev.step)
            w.f64s((ev.n_theta, ev.n_phi, *ev.betas_before, *ev.betas_after))
            w.raw(bytes([ev.actor_reset, ev.critic_reset, ev.actor_solved, ev.critic_solved]))
        w.string(self.curve.diverged or "")
        w.string(self.config_text)
        payload = w.getvalue()
        return MAGIC + struct.pack("<IQ", self.version, len(payload)) + payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        if len(data) < 16 or data[:4] != MAGIC:
            raise CorruptCheckpoint("bad magic")
        version, length = struct.unpack_from("<IQ", data, 4)
        if version != VERSION:
            raise CorruptCheckpoint(f"unsupported version {version}")
        payload = data[16:]
        if len(payload) != length:
            raise CorruptCheckpoint(f"payload is {len(payload)} bytes, header says {length}")
        try:
            return cls._parse(_Reader(payload), version)
        except (struct.error, ValueError, UnicodeDecodeError) as exc:
            raise CorruptCheckpoint(f"malformed payload: {exc}") from exc

    @classmethod
    def _parse(cls, r: "_Reader", version: int) -> "Checkpoint":
        name = r.string()
        obs_dim, action_dim = r.u32(), r.u32()
        low, high = tuple(r.f64s(action_dim)), tuple(r.f64s(action_dim))
        spec = EnvSpec(name, obs_dim, action_dim, low, high, r.u32())
        actor = ActorParams(r.tensor(), r.tensor())
        critic = CriticParams(r.tensor(), r.tensor(), r.tensor())
        actor_t = ActorParams(r.tensor(), r.tensor())
        critic_t = CriticParams(r.tensor(), r.tensor(), r.tensor())
        adams = []
        for n in (2, 3):
            t = r.u64()
            lr, b1, b2, eps = r.f64s(4)
            m = [r.tensor() for _ in range(n)]
            v = [r.tensor() for _ in range(n)]
            adams.append(AdamState(m, v, t, lr, b1, b2, eps))
        betas = r.f64s(4)
        step = r.u64()
        state = (r.u64() << 64) | r.u64()
        inc = (r.u64() << 64) | r.u64()
        rng_state = {
            "bit_generator": "PCG64",
            "state": {"state": state, "inc": inc},
            "has_uint32": r.u32(),
            "uinteger": r.u32(),
        }
        qn_calls = r.u64()
        capacity, cursor = r.u64(), r.u64()
        s, a, rew, s2, d = (r.tensor() for _ in range(5))
        buffer = TransitionBuffer.from_arrays(capacity, cursor, s, a, rew[:, 0], s2, d[:, 0])
        lr_s, lr_o = r.tensor(), r.tensor()
        env_state = r.tensor()[0]
        env_elapsed = r.u64()
        obs = r.tensor()[0]
        records = []
        for _ in range(r.u32()):
            st = r.u64()
            records.append(EvalRecord(st, *r.f64s(9)))
        events = []
        for _ in range(r.u32()):
            st = r.u64()
            vals = r.f64s(10)
            flags = r.raw(4)
            events.append(
                LrEvent(st, vals[0], vals[1], tuple(vals[2:6]), tuple(vals[6:10]), *map(bool, flags))
            )
        diverged = r.string() or None
        config_text = r.string()
        if not r.exhausted():
            raise CorruptCheckpoint("trailing bytes after payload")
        cfg = TrainConfig.from_text(config_text)
        coeffs = cfg.reg_coeffs()
        coeffs.beta_a, coeffs.beta_a_prime, coeffs.beta_c, coeffs.beta_c_prime = betas
        agent = AgentState(actor, critic, actor_t, critic_t, adams[0], adams[1], coeffs, qn_calls)
        return cls(
            env_spec=spec, agent=agent, step=step, rng_state=rng_state, buffer=buffer,
            lr_buffer=(lr_s, lr_o), env_state=env_state, env_elapsed=env_elapsed, obs=obs,
            curve=LearningCurve(records, events, diverged), config_text=config_text,
            version=version,
        )


def save_checkpoint(path: str | Path, cp: Checkpoint) -> None:
    Path(path).write_bytes(cp.to_bytes())


def load_checkpoint(path: str | Path) -> Checkpoint:
    return Checkpoint.from_bytes(Path(path).read_bytes())


class _Writer:
    def __init__(self) -> None:
        self._buf = io.BytesIO()

    def raw(self, b: bytes) -> None:
        self._buf.write(b)

    def u32(self, v: int) -> None:
        self._buf.write(struct.pack("<I", int(v)))

    def u64(self, v: int) -> None:
        self._buf.write(struct.pack("<Q", int(v)))

    def f64s(self, vals) -> None:
        self._buf.write(np.asarray(vals, dtype="<f8").tobytes())

    def string(self, s: str) -> None:
        b = s.encode("utf-8")
        self.u32(len(b))
        self._buf.write(b)

    def tensor(self, t: np.ndarray) -> None:
        t = np.asarray(t, dtype=np.float64)
        if t.ndim != 2:
            raise ValueError(f"tensors must be 2-D, got shape {t.shape}")
        self.u32(t.shape[0])
        self.u32(t.shape[1])
        self._buf.write(np.ascontiguousarray(t, dtype="<f8").tobytes())

    def getvalue(self) -> bytes:
        return self._buf.getvalue()


class _Reader:
    def __init__(self, data: bytes) -> None:
        self._data = data
        self._pos = 0

    def raw(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise CorruptCheckpoint("unexpected end of checkpoint")
        out = self._data[self._pos: self._pos + n]
        self._pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.raw(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.raw(8))[0]

    def f64s(self, n: int) -> list[float]:
        return np.frombuffer(self.raw(8 * n), dtype="<f8").astype(np.float64).tolist()

    def string(self) -> str:
        return self.raw(self.u32()).decode("utf-8")

    def tensor(self) -> np.ndarray:
        rows, cols = self.u32(), self.u32()
        data = self.raw(8 * rows * cols)
        return np.frombuffer(data, dtype="<f8").astype(np.float64).reshape(rows, cols)

    def exhausted(self) -> bool:
        return self._pos == len(self._data)
