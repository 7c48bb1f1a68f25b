"""Multi-seed runs and their aggregation."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import TrainConfig
from .training import LearningCurve, run_training


@dataclass
class SuiteResult:
    seeds: list[int]
    curves: list[LearningCurve]
    steps: list[int]
    ma_mean: np.ndarray
    ma_std: np.ndarray
    raw_mean: np.ndarray
    raw_std: np.ndarray
    final_scores: np.ndarray  # one per seed
    final_mean: float
    final_std: float

    def to_csv(self) -> str:
        lines = ["step,ma_mean,ma_std,raw_mean,raw_std"]
        for i, st in enumerate(self.steps):
            vals = (self.ma_mean[i], self.ma_std[i], self.raw_mean[i], self.raw_std[i])
            lines.append(f"{st}," + ",".join(format(float(v), ".17g") for v in vals))
        return "\n".join(lines) + "\n"


def final_window_score(curve: LearningCurve, t_max: int, fraction: float) -> float:
    """Mean raw evaluation score over steps strictly after (1 - fraction) * t_max."""
    start = (1.0 - fraction) * t_max
    vals = [r.eval_mean for r in curve.records if r.step > start]
    return float(np.mean(vals)) if vals else math.nan


def aggregate(curves: Sequence[LearningCurve], t_max: int, fraction: float, seeds=None) -> SuiteResult:
    """Per-evaluation-index mean and (population) std across runs.

    Curves cut short by divergence are aligned on the common prefix.
    """
    if not curves:
        raise ValueError("need at least one curve")
    n = min(len(c.records) for c in curves)
    ma = np.array([[r.eval_ma10 for r in c.records[:n]] for c in curves]).reshape(len(curves), n)
    raw = np.array([[r.eval_mean for r in c.records[:n]] for c in curves]).reshape(len(curves), n)
    finals = np.array([final_window_score(c, t_max, fraction) for c in curves])
    return SuiteResult(
        seeds=list(seeds) if seeds is not None else list(range(len(curves))),
        curves=list(curves),
        steps=[r.step for r in curves[0].records[:n]],
        ma_mean=ma.mean(axis=0),
        ma_std=ma.std(axis=0),
        raw_mean=raw.mean(axis=0),
        raw_std=raw.std(axis=0),
        final_scores=finals,
        final_mean=float(finals.mean()),
        final_std=float(finals.std()),
    )


def run_suite(base: TrainConfig, seeds: Sequence[int], workers: int = 1) -> SuiteResult:
    if not seeds:
        raise ValueError("need at least one seed")
    cfgs = [base.replace(seed=int(s)) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            curves = list(pool.map(run_training, cfgs))
    else:
        curves = [run_training(c) for c in cfgs]
    return aggregate(curves, base.t_max, base.final_fraction, seeds)
