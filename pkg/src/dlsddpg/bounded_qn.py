"""Projected limited-memory BFGS for box-constrained minimization.

Each iteration fixes the variables that sit on a bound with the gradient
pushing outward, builds an L-BFGS direction on the remaining free
variables, and searches along the part of that direction that stays in
the box; hitting a bound adds the variable to the active set. The line
search only accepts points with Armijo sufficient decrease, so the
returned objective never exceeds the starting one.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .network import BoxBounds

log = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], "tuple[float, np.ndarray]"]

_ARMIJO = 1e-4


@dataclass(frozen=True)
class QnConfig:
    max_iter: int = 10
    memory: int = 10
    projected_gradient_tol: float = 1e-5
    relative_f_tol: float = 1e7 * np.finfo(float).eps  # factr * machine eps
    max_linesearch_steps: int = 20

    def __post_init__(self) -> None:
        if min(self.max_iter, self.memory, self.max_linesearch_steps) < 1:
            raise ValueError("iteration counts must be positive")
        if self.projected_gradient_tol < 0 or self.relative_f_tol < 0:
            raise ValueError("tolerances must be non-negative")


@dataclass
class QnResult:
    x: np.ndarray
    f: float
    n_evals: int
    n_iter: int
    status: str

    def __iter__(self):
        # allows ``x, f, n = minimize(...)``
        return iter((self.x, self.f, self.n_evals))


def _two_loop(g: np.ndarray, pairs, free: np.ndarray) -> np.ndarray:
    """Apply the L-BFGS inverse Hessian, restricted to ``free``, to ``g``."""
    q = np.where(free, g, 0.0)
    used = []
    alphas = []
    for s, y in reversed(pairs):
        sf, yf = s[free], y[free]
        sy = float(sf @ yf)
        if sy <= 1e-10 * np.linalg.norm(sf) * np.linalg.norm(yf) or sy <= 0.0:
            continue
        rho = 1.0 / sy
        a = rho * float(s[free] @ q[free])
        q[free] -= a * yf
        used.append((sf, yf, rho))
        alphas.append(a)
    if used:
        sf, yf, _ = used[0]  # most recent usable pair
        gamma = float(sf @ yf) / float(yf @ yf)
    else:
        gamma = 1.0
    r = gamma * q
    for (sf, yf, rho), a in zip(reversed(used), reversed(alphas)):
        b = rho * float(yf @ r[free])
        r[free] += (a - b) * sf
    return r


def _max_step(x: np.ndarray, d: np.ndarray, low: np.ndarray, high: np.ndarray) -> float:
    """Largest alpha keeping x + alpha d inside the box (inf if unbounded)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        up = np.where(d > 0, (high - x) / d, np.inf)
        dn = np.where(d < 0, (low - x) / d, np.inf)
    return float(min(up.min(initial=np.inf), dn.min(initial=np.inf)))


def minimize(
    obj: Objective,
    x0: np.ndarray,
    bounds: BoxBounds,
    cfg: QnConfig = QnConfig(),
) -> QnResult:
    """Minimize ``obj`` over the box starting from ``x0``.

    ``obj(x)`` returns ``(f, grad)``. Never raises for numerical trouble:
    a non-finite objective at ``x0`` returns ``x0``; a failed line search
    returns the best iterate so far.
    """
    low, high = bounds.low, bounds.high
    x = np.clip(np.asarray(x0, dtype=np.float64), low, high)
    fixed = low == high
    f, g = obj(x)
    g = np.asarray(g, dtype=np.float64)
    n_evals = 1
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        log.warning("non-finite objective at the starting point; returning x0")
        return QnResult(x, float(f), n_evals, 0, "nonfinite")

    pairs: deque = deque(maxlen=cfg.memory)
    status = "max_iter"
    it = 0
    for it in range(1, cfg.max_iter + 1):
        pg = np.clip(x - g, low, high) - x
        if np.max(np.abs(pg), initial=0.0) <= cfg.projected_gradient_tol:
            status = "pgtol"
            it -= 1
            break

        at_low = (x <= low) & (g > 0)
        at_high = (x >= high) & (g < 0)
        free = ~(fixed | at_low | at_high)

        d = -_two_loop(g, pairs, free)
        # a free variable resting on a bound may not move outward
        d[(x <= low) & (d < 0)] = 0.0
        d[(x >= high) & (d > 0)] = 0.0
        slope = float(g @ d)
        if not pairs or slope >= 0.0:
            d = np.where(free, -g, 0.0)
            d[(x <= low) & (d < 0)] = 0.0
            d[(x >= high) & (d > 0)] = 0.0
            slope = float(g @ d)
            if slope >= 0.0:
                status = "stationary"
                it -= 1
                break
            if not pairs:
                # first step: unit length in the infinity norm, as in L-BFGS-B
                d = d / max(1.0, float(np.max(np.abs(d))))
                slope = float(g @ d)

        accepted = _line_search(obj, x, f, g, d, slope, low, high, cfg.max_linesearch_steps)
        n_evals += accepted[3]
        if accepted[0] is None:
            status = "linesearch_failed"
            break
        xn, fn, gn, _ = accepted

        s = xn - x
        y = gn - g
        if float(s @ y) > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            pairs.append((s, y))
        decrease = (f - fn) / max(abs(f), abs(fn), 1.0)
        x, f, g = xn, fn, gn
        if decrease <= cfg.relative_f_tol:
            status = "ftol"
            break

    return QnResult(x, float(f), n_evals, it, status)


def _project(x, low, high):
    xn = np.clip(x, low, high)
    # snap rounding-level misses of a bound onto it so the active set is seen
    tol = 1e-12 * (1.0 + np.abs(low) + np.abs(high))
    xn[np.abs(xn - low) <= tol] = low[np.abs(xn - low) <= tol]
    xn[np.abs(xn - high) <= tol] = high[np.abs(xn - high) <= tol]
    return xn


def _line_search(obj, x, f, g, d, slope, low, high, max_steps):
    """Armijo backtracking on the segment of ``x + alpha d`` inside the box.

    The first trial is ``alpha = min(1, distance to the box edge)``. After an
    acceptable trial, one secant step on the directional derivative is also
    tried and kept if it is better; on quadratics that step is the exact line
    minimizer, which keeps the quasi-Newton directions conjugate.
    Returns ``(x, f, g, n_evals)`` or ``(None, None, None, n_evals)``.
    """
    alpha_edge = _max_step(x, d, low, high)
    alpha = min(1.0, alpha_edge)
    n_evals = 0
    for _ in range(max_steps):
        xn = _project(x + alpha * d, low, high)
        fn, gn = obj(xn)
        gn = np.asarray(gn, dtype=np.float64)
        n_evals += 1
        finite = bool(np.isfinite(fn) and np.all(np.isfinite(gn)))
        decr = float(g @ (xn - x))
        if finite and decr < 0.0 and fn <= f + _ARMIJO * decr:
            best = (xn, float(fn), gn)
            dphi = float(gn @ d)
            if dphi > slope and n_evals < max_steps:
                a_star = min(alpha * slope / (slope - dphi), alpha_edge)
                if a_star > 0.0 and abs(a_star - alpha) > 1e-12 * alpha:
                    xs = _project(x + a_star * d, low, high)
                    fs, gs = obj(xs)
                    gs = np.asarray(gs, dtype=np.float64)
                    n_evals += 1
                    decs = float(g @ (xs - x))
                    if (
                        np.isfinite(fs)
                        and np.all(np.isfinite(gs))
                        and decs < 0.0
                        and fs <= f + _ARMIJO * decs
                        and fs <= fn
                    ):
                        best = (xs, float(fs), gs)
            return best + (n_evals,)
        if finite and decr < 0.0:
            # minimizer of the quadratic through phi(0), phi'(0), phi(alpha)
            denom = 2.0 * (fn - f - slope * alpha)
            a_new = -slope * alpha * alpha / denom if denom > 0 else 0.5 * alpha
            alpha = min(max(a_new, 0.1 * alpha), 0.5 * alpha)
        else:
            alpha *= 0.5
    return None, None, None, n_evals
