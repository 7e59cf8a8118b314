"""Bounded Nelder-Mead simplex search and a least-squares fitter built on it.

Bounds are enforced by projection: every trial vertex is clamped into the
box before the objective sees it, so the search can slide along faces
where design optima often sit.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .core import Model, as_theta
from .errors import EvaluationError, NldoeError

__all__ = ["NmOptions", "NmResult", "nm_minimize", "nm_descent", "FitResult", "nls_fit", "sse"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NmOptions:
    """Nelder-Mead coefficients and stopping rules.

    ``initial_step`` and ``x_tol`` are fractions of each coordinate's box
    width (or of max(|x0_j|, 1) for an unbounded coordinate).
    """

    reflection: float = 1.0
    expansion: float = 2.0
    contraction: float = 0.5
    shrink: float = 0.5
    initial_step: float = 0.05
    x_tol: float = 1e-8
    f_tol: float = 1e-10
    max_evals: int = 2000

    def __post_init__(self):
        if not self.reflection > 0:
            raise ValueError("reflection must be > 0")
        if not self.expansion > 1:
            raise ValueError("expansion must be > 1")
        if not 0 < self.contraction < 1:
            raise ValueError("contraction must be in (0, 1)")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must be in (0, 1)")
        if not (self.initial_step > 0 and self.x_tol > 0 and self.f_tol > 0):
            raise ValueError("step and tolerances must be positive")
        if self.max_evals < 1:
            raise ValueError("max_evals must be >= 1")


@dataclass(frozen=True)
class NmResult:
    x: np.ndarray
    fun: float
    evals: int
    converged: bool


def _scales(bounds, x0):
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    width = hi - lo
    finite = np.isfinite(width)
    scale = np.where(finite, width, np.maximum(np.abs(x0), 1.0))
    return lo, hi, scale


def nm_descent(objective: Callable, x0, bounds, opts: NmOptions = NmOptions()) -> NmResult:
    """One Nelder-Mead descent from ``x0``; failed evaluations count as +inf."""
    x0 = np.asarray(x0, dtype=float)
    d = x0.size
    lo_a, hi_a, scale = _scales(bounds, x0)
    lo = lo_a.tolist()
    hi = hi_a.tolist()
    rho, chi, gamma, sigma = opts.reflection, opts.expansion, opts.contraction, opts.shrink
    xtol = (opts.x_tol * scale).tolist()
    ftol = opts.f_tol
    rng_d = range(d)
    evals = 0

    # vertices are plain lists: d is tiny and numpy overhead dominates otherwise
    def clamp(x):
        return [lo[j] if x[j] < lo[j] else hi[j] if x[j] > hi[j] else x[j] for j in rng_d]

    def f(x):
        nonlocal evals
        evals += 1
        try:
            val = objective(np.array(x))
        except (EvaluationError, ArithmeticError, ValueError):
            return math.inf
        return val if val == val else math.inf

    first = clamp(x0.tolist())
    sim = [first]
    step = (opts.initial_step * scale).tolist()
    for j in rng_d:
        y = list(first)
        y[j] = first[j] + step[j]
        if y[j] > hi[j]:
            y[j] = first[j] - step[j]
        sim.append(clamp(y))
    fs = [f(x) for x in sim]
    converged = False

    while True:
        order = sorted(range(d + 1), key=fs.__getitem__)
        sim = [sim[i] for i in order]
        fs = [fs[i] for i in order]
        best = sim[0]
        if all(abs(x[j] - best[j]) <= xtol[j] for x in sim[1:] for j in rng_d) or (
            fs[-1] - fs[0] <= ftol
        ):
            converged = True
            break
        if evals >= opts.max_evals:
            break
        worst = sim[-1]
        c = [sum(x[j] for x in sim[:-1]) / d for j in rng_d]
        xr = clamp([c[j] + rho * (c[j] - worst[j]) for j in rng_d])
        fr = f(xr)
        if fr < fs[0]:
            xe = clamp([c[j] + rho * chi * (c[j] - worst[j]) for j in rng_d])
            fe = f(xe)
            if fe < fr:
                sim[-1], fs[-1] = xe, fe
            else:
                sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[-2]:
            sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[-1]:
            xc = clamp([c[j] + gamma * (xr[j] - c[j]) for j in rng_d])
            fc = f(xc)
            if fc <= fr:
                sim[-1], fs[-1] = xc, fc
                continue
        else:
            xc = clamp([c[j] + gamma * (worst[j] - c[j]) for j in rng_d])
            fc = f(xc)
            if fc < fs[-1]:
                sim[-1], fs[-1] = xc, fc
                continue
        for i in range(1, d + 1):
            sim[i] = clamp([best[j] + sigma * (sim[i][j] - best[j]) for j in rng_d])
            fs[i] = f(sim[i])

    return NmResult(np.array(sim[0]), float(fs[0]), evals, converged)


def nm_minimize(objective: Callable, x0, bounds, opts: NmOptions = NmOptions(),
                extra_starts: Sequence = ()) -> tuple[np.ndarray, float]:
    """Best of one descent from ``x0`` and one from each extra start.

    The objective must evaluate at ``x0``; anywhere else a failure is
    treated as +inf.
    """
    x0 = np.asarray(x0, dtype=float)
    lo, hi, _ = _scales(bounds, x0)
    if x0.ndim != 1 or x0.size != len(bounds) or x0.size < 1:
        raise ValueError("x0 must be a vector with one entry per bound")
    if np.any(x0 < lo) or np.any(x0 > hi):
        raise ValueError(f"x0 {x0} outside the bounds")
    objective(x0)  # evaluation errors at the start point propagate
    best = nm_descent(objective, x0, bounds, opts)
    for s in extra_starts:
        s = np.asarray(s, dtype=float)
        if np.any(s < lo) or np.any(s > hi):
            raise ValueError(f"extra start {s} outside the bounds")
        res = nm_descent(objective, s, bounds, opts)
        if res.fun < best.fun:
            best = res
    return best.x, best.fun


# ---------------------------------------------------------------------------
# Least squares
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    theta_hat: np.ndarray
    sse: float
    evals: int
    converged: bool


FIT_OPTIONS = NmOptions(initial_step=0.1, x_tol=1e-12, f_tol=1e-15, max_evals=20000)


def sse(model: Model, points, responses, theta) -> float:
    resid = np.asarray(responses, dtype=float) - model.means(points, theta)
    return float(resid @ resid)


def nls_fit(model: Model, points, responses, theta_init, transform: Callable | None = None,
            restarts: int = 8, seed: int = 0, opts: NmOptions = FIT_OPTIONS,
            max_polish: int = 50) -> FitResult:
    """Least-squares estimate of the model parameters by multistart Nelder-Mead.

    Restarts are drawn uniformly from theta_init +/- 0.5*max(|theta_init|, 1).
    The best descent is then restarted from its own end point until a
    fresh simplex no longer improves the fit.  Rows with a missing
    (NaN) response are dropped.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    y = np.asarray(responses, dtype=float)
    if transform is not None:
        y = np.asarray(transform(y), dtype=float)
    keep = np.isfinite(y)
    pts, y = pts[keep], y[keep]
    theta0 = as_theta(theta_init, model).copy()
    if pts.shape[0] < model.p:
        raise ValueError(f"{pts.shape[0]} data rows cannot identify {model.p} parameters")

    def objective(theta):
        return sse(model, pts, y, theta)

    bounds = [(-math.inf, math.inf)] * model.p
    half = 0.5 * np.maximum(np.abs(theta0), 1.0)
    rng = np.random.default_rng(seed)
    starts = [theta0] + [theta0 + rng.uniform(-half, half) for _ in range(restarts)]

    evals = 0
    best = None
    for s in starts:
        try:
            objective(s)
        except EvaluationError:
            continue
        res = nm_descent(objective, s, bounds, opts)
        evals += res.evals
        if best is None or res.fun < best.fun:
            best = res
    if best is None or not math.isfinite(best.fun):
        raise NldoeError("every fitting start failed to evaluate")

    converged = best.converged
    for _ in range(max_polish):
        res = nm_descent(objective, best.x, bounds, replace(opts, initial_step=opts.initial_step * 0.1))
        evals += res.evals
        improved = res.fun < best.fun - 1e-14 * (1.0 + best.fun)
        if res.fun <= best.fun:
            best = res
        if not improved:
            converged = res.converged
            break
    else:
        converged = False
    return FitResult(best.x, objective(best.x), evals, converged)
