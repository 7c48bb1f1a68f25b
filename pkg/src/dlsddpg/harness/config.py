"""Training configuration, profiles, and the flat key=value config file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from ..bounded_qn import QnConfig
from ..ls_update import RegCoeffState

ZERO_REG_CHOICES = ("none", "actor", "critic", "all")


@dataclass
class TrainConfig:
    env: str = "pendulum"
    seed: int = 0
    t_max: int = 1_000_000
    t_rand: int = 25_000
    gamma: float = 0.99
    noise_sigma: float = 0.1
    learning_rate: float = 0.001
    buffer_capacity: int = 1_000_000
    n_mb: int = 256
    n_lrmb: int = 10_000
    t_lr: int = 1000
    w_a: float = 2.0
    tau_ddpg: float = 0.005
    tau_lr: float = 0.1
    qn_max_iter: int = 10
    b: float = 0.4
    beta_a0: float = 0.01
    beta_a_min: float = 0.001
    beta_a_prime0: float = 0.01
    beta_a_prime_min: float = 0.001
    beta_c0: float = 0.01
    beta_c_min: float = 0.001
    beta_c_prime0: float = 0.01
    beta_c_prime_min: float = 0.001
    c: float = 0.001
    delta: float = 0.95
    c_a: float = 1.0
    c_c: float = 10.0
    hidden: int = 1024
    use_ddpg_actor: bool = True
    use_ddpg_critic: bool = True
    use_lr_actor: bool = True
    use_lr_critic: bool = True
    action_mode: str = "oac"
    fix_beta_c: float | None = None
    zero_reg: str = "none"
    eval_interval: int = 2000
    eval_episodes: int = 10
    moving_average_window: int = 10
    final_fraction: float = 0.1

    def validate(self) -> "TrainConfig":
        positive = (
            "t_max", "n_mb", "n_lrmb", "t_lr", "buffer_capacity", "qn_max_iter", "hidden",
            "eval_interval", "eval_episodes", "moving_average_window",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.t_rand < 1:
            raise ValueError("t_rand must be at least 1")
        if not (self.n_lrmb > self.t_lr and self.n_lrmb > self.n_mb):
            raise ValueError("n_lrmb must exceed both t_lr and n_mb")
        if not (0.0 <= self.tau_ddpg <= 1.0 and 0.0 <= self.tau_lr <= 1.0):
            raise ValueError("soft update rates must lie in [0, 1]")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.action_mode not in ("oac", "aac"):
            raise ValueError("action_mode must be 'oac' or 'aac'")
        if self.zero_reg not in ZERO_REG_CHOICES:
            raise ValueError(f"zero_reg must be one of {ZERO_REG_CHOICES}")
        if self.noise_sigma < 0 or self.b < 0 or self.w_a < 0:
            raise ValueError("noise_sigma, b and w_a must be non-negative")
        if not 0.0 < self.final_fraction <= 1.0:
            raise ValueError("final_fraction must lie in (0, 1]")
        return self

    # -------------------------------------------------------------- derived

    def qn_config(self) -> QnConfig:
        return QnConfig(max_iter=self.qn_max_iter)

    def reg_coeffs(self) -> RegCoeffState:
        fixed_actor = 0.0 if self.zero_reg in ("actor", "all") else None
        fixed_critic = 0.0 if self.zero_reg in ("critic", "all") else self.fix_beta_c
        return RegCoeffState(
            beta_a0=self.beta_a0, beta_a_min=self.beta_a_min,
            beta_a_prime0=self.beta_a_prime0, beta_a_prime_min=self.beta_a_prime_min,
            beta_c0=self.beta_c0, beta_c_min=self.beta_c_min,
            beta_c_prime0=self.beta_c_prime0, beta_c_prime_min=self.beta_c_prime_min,
            delta=self.delta, c_a=self.c_a, c_c=self.c_c,
            fixed_actor=fixed_actor, fixed_critic=fixed_critic,
        )

    def replace(self, **changes: Any) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    # -------------------------------------------------------------- text io

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name}={_format(v)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, base: "TrainConfig | None" = None) -> "TrainConfig":
        cfg = base if base is not None else cls()
        return cfg.replace(**parse_overrides(text))


PAPER_PROFILE: dict[str, Any] = {}

DESK_PROFILE: dict[str, Any] = {
    "t_rand": 1000,
    "n_lrmb": 2000,
    "hidden": 256,
    "t_max": 60_000,
}

PROFILES = {"paper": PAPER_PROFILE, "desk": DESK_PROFILE}


def profile_config(name: str, **overrides: Any) -> TrainConfig:
    if name not in PROFILES:
        raise ValueError(f"unknown profile {name!r}")
    return TrainConfig(**{**PROFILES[name], **overrides})


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(TrainConfig)}


def _format(v: Any) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(name: str, raw: str) -> Any:
    kind = _FIELD_TYPES[name]
    raw = raw.strip()
    if "None" in kind and raw.lower() in ("none", ""):
        return None
    if kind.startswith("bool"):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: not a boolean: {raw!r}")
    if kind.startswith("int"):
        return int(float(raw)) if "e" in raw.lower() else int(raw)
    if kind.startswith("float"):
        return float(raw)
    return raw


def parse_overrides(text: str) -> dict[str, Any]:
    """Parse ``key=value`` lines; blank lines and ``#`` comments are skipped."""
    out: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


def load_config_file(path: str | Path, base: TrainConfig | None = None) -> TrainConfig:
    return TrainConfig.from_text(Path(path).read_text(encoding="utf-8"), base)
