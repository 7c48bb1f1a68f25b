from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dlsddpg.network import BoxBounds, Minibatch, init_actor, init_critic  # noqa: E402
from dlsddpg.numerics import make_rng  # noqa: E402


def small_nets(seed: int, ds: int = 3, da: int = 2, hidden: int = 8, scale: float = 1.0):
    rng = make_rng(seed)
    actor = init_actor(rng, ds, da, hidden)
    critic = init_critic(rng, ds, da, hidden)
    for p in actor.tensors() + critic.tensors():
        p *= scale
    return actor, critic, rng


def random_batch(rng, n: int, ds: int, da: int, low=-1.0, high=1.0) -> Minibatch:
    return Minibatch(
        s=rng.normal(size=(n, ds)),
        a=rng.uniform(low, high, size=(n, da)),
        r=rng.normal(size=n),
        s_next=rng.normal(size=(n, ds)),
        d=(rng.uniform(size=n) < 0.2).astype(float),
    )


@pytest.fixture
def unit_box():
    return BoxBounds(-np.ones(2), np.ones(2))


def pytest_terminal_summary(terminalreporter):
    import acceptance_report

    if acceptance_report.LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(acceptance_report.LINES):
            terminalreporter.write_line(acceptance_report.LINES[k])
