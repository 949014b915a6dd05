"""Limited-memory BFGS with simple lower bounds.

Bounds are handled by gradient projection and active-set freezing: variables
sitting on their bound with a gradient pushing outwards are held fixed, the
quasi-Newton direction is computed on the remaining ones, and the step is
capped at the first bound it would cross.  Enough for non-negativity boxes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .errors import LineSearchFailure, NonFiniteObjective

logger = logging.getLogger(__name__)

Objective = Callable[[NDArray], tuple[float, NDArray]]


@dataclass
class OptimizerConfig:
    memory: int = 10
    max_iters: int = 500
    grad_tol: float = 1e-6
    c1: float = 1e-4
    c2: float = 0.9
    lower: NDArray | None = None
    max_linesearch: int = 40
    ftol: float = 0.0  # optional relative-decrease stop, off by default

    def __post_init__(self) -> None:
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("need 0 < c1 < c2 < 1")
        if self.memory < 1:
            raise ValueError("memory must be >= 1")


@dataclass
class OptimizeResult:
    x: NDArray
    fun: float
    grad: NDArray
    iterations: int
    n_evals: int
    reason: str
    grad_norm: float
    history: list[float] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.reason == "gradient tolerance reached"


class _Counted:
    def __init__(self, fun: Objective):
        self.fun = fun
        self.n = 0

    def __call__(self, x: NDArray) -> tuple[float, NDArray]:
        self.n += 1
        f, g = self.fun(x)
        f = float(f)
        g = np.asarray(g, dtype=float)
        if not np.isfinite(f) or not np.all(np.isfinite(g)):
            raise NonFiniteObjective(f"objective returned non-finite values (f = {f})")
        return f, g


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimiser of the cubic interpolant on [a, b] (safeguarded by the caller)."""
    with np.errstate(all="ignore"):  # garbage here falls back to bisection
        d1 = ga + gb - 3.0 * (fa - fb) / (a - b)
        rad = d1 * d1 - ga * gb
        if not rad >= 0:
            return None
        d2 = np.sign(b - a) * np.sqrt(rad)
        return b - (b - a) * (gb + d2 - d1) / (gb - ga + 2.0 * d2)


def _strong_wolfe(phi, f0, g0, step, step_max, c1, c2, max_iter):
    """Strong Wolfe line search; returns (step, f, g, dphi) or None."""
    prev_step, f_prev, d_prev = 0.0, f0, g0
    for i in range(max_iter):
        f, g, dphi = phi(step)
        if f > f0 + c1 * step * g0 or (i > 0 and f >= f_prev):
            return _zoom(phi, f0, g0, prev_step, f_prev, d_prev, step, f, dphi, c1, c2, max_iter)
        if abs(dphi) <= -c2 * g0:
            return step, f, g, dphi
        if dphi >= 0:
            return _zoom(phi, f0, g0, step, f, dphi, prev_step, f_prev, d_prev, c1, c2, max_iter)
        if step >= step_max:
            # descending at the bound: Armijo already holds, accept the capped step
            return step, f, g, dphi
        prev_step, f_prev, d_prev = step, f, dphi
        step = min(2.0 * step, step_max)
    return None


def _zoom(phi, f0, g0, lo, f_lo, d_lo, hi, f_hi, d_hi, c1, c2, max_iter):
    for _ in range(max_iter):
        trial = _cubic_min(lo, f_lo, d_lo, hi, f_hi, d_hi)
        left, right = min(lo, hi), max(lo, hi)
        margin = 0.1 * (right - left)
        if trial is None or not np.isfinite(trial) or not left + margin <= trial <= right - margin:
            trial = 0.5 * (lo + hi)
        f, g, dphi = phi(trial)
        if f > f0 + c1 * trial * g0 or f >= f_lo:
            hi, f_hi, d_hi = trial, f, dphi
        else:
            if abs(dphi) <= -c2 * g0:
                return trial, f, g, dphi
            if dphi * (hi - lo) >= 0:
                hi, f_hi, d_hi = lo, f_lo, d_lo
            lo, f_lo, d_lo = trial, f, dphi
        if abs(hi - lo) < 1e-16 * max(1.0, abs(lo)):
            break
    if f_lo < f0 + c1 * lo * g0 and lo > 0:
        # Armijo holds at the best point found; accept it rather than fail
        f, g, dphi = phi(lo)
        return lo, f, g, dphi
    return None


def _two_loop(g: NDArray, pairs: list[tuple[NDArray, NDArray, float]]) -> NDArray:
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def minimize(fun: Objective, x0: NDArray, config: OptimizerConfig | None = None,
             callback: Callable[[int, NDArray, float], None] | None = None) -> OptimizeResult:
    """Minimise ``fun`` (returning value and gradient) from ``x0``."""
    config = config or OptimizerConfig()
    f_eval = _Counted(fun)
    x = np.asarray(x0, dtype=float).copy()
    lower = None if config.lower is None else np.broadcast_to(np.asarray(config.lower, dtype=float), x.shape)
    if lower is not None and np.any(x < lower):
        raise ValueError("x0 violates the lower bounds")
    f, g = f_eval(x)
    history = [f]
    pairs: list[tuple[NDArray, NDArray, float]] = []
    reason = "iteration budget exhausted"
    restarted = False
    k = 0

    def projected(x, g):
        if lower is None:
            return g
        pg = g.copy()
        pg[(x <= lower) & (g > 0)] = 0.0
        return pg

    for k in range(config.max_iters):
        pg = projected(x, g)
        if np.max(np.abs(pg), initial=0.0) <= config.grad_tol:
            reason = "gradient tolerance reached"
            break
        free = pg != 0.0 if lower is not None else np.ones_like(x, dtype=bool)
        direction = _two_loop(np.where(free, g, 0.0), pairs)
        direction[~free] = 0.0
        if lower is not None:
            # never push a variable sitting on its bound further out
            direction[(x <= lower) & (direction < 0)] = 0.0
        slope = g @ direction
        if slope >= 0 or not np.all(np.isfinite(direction)):
            pairs.clear()
            direction = -pg
            slope = g @ direction
        step_max = np.inf
        if lower is not None:
            neg = direction < 0
            if np.any(neg):
                step_max = float(np.min((lower[neg] - x[neg]) / direction[neg]))
                step_max = max(step_max, 0.0)
        step0 = 1.0 if pairs else min(1.0, 1.0 / np.max(np.abs(direction)))
        step0 = min(step0, step_max)
        if step0 <= 0:
            pairs.clear()
            reason = "no feasible descent step"
            break

        def phi(step, x=x, direction=direction):
            xt = x + step * direction
            if lower is not None:
                xt = np.maximum(xt, lower)
            ft, gt = f_eval(xt)
            return ft, gt, gt @ direction

        found = _strong_wolfe(phi, f, slope, step0, step_max, config.c1, config.c2, config.max_linesearch)
        if found is None:
            if pairs and not restarted:
                logger.debug("line search failed at iteration %d; restarting from steepest descent", k)
                pairs.clear()
                restarted = True
                continue
            reason = "line search failure"
            logger.warning("%s at iteration %d (f = %.6g)", reason, k, f)
            break
        restarted = False
        step, f_new, g_new, _ = found
        x_new = x + step * direction
        if lower is not None:
            x_new = np.maximum(x_new, lower)
            if step >= step_max:
                hit = (direction < 0) & np.isfinite(lower)
                snap = hit & (np.abs(x + step_max * direction - lower) <= 1e-12 * np.maximum(1.0, np.abs(lower)))
                x_new[snap] = lower[snap]
        s = x_new - x
        y = g_new - g
        sy = s @ y
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            pairs.append((s, y, 1.0 / sy))
            if len(pairs) > config.memory:
                pairs.pop(0)
        f_old = f
        x, f, g = x_new, f_new, g_new
        history.append(f)
        if callback is not None:
            callback(k, x, f)
        if config.ftol > 0 and f_old - f <= config.ftol * max(1.0, abs(f_old)):
            reason = "relative decrease below ftol"
            k += 1
            break
    else:
        k = config.max_iters
    pg = projected(x, g)
    return OptimizeResult(x, f, g, k, f_eval.n, reason, float(np.max(np.abs(pg), initial=0.0)), history)


def minimize_or_raise(fun: Objective, x0: NDArray, config: OptimizerConfig | None = None) -> OptimizeResult:
    """Like :func:`minimize` but raises on line-search failure."""
    res = minimize(fun, x0, config)
    if res.reason == "line search failure":
        raise LineSearchFailure(f"line search failed after {res.iterations} iterations (f = {res.fun:.6g})")
    return res
