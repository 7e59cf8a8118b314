"""Exchange algorithms for locally D-optimal exact designs.

Four variants share one loop: discrete or continuous candidates, crossed
with point exchange (replace a whole run) or coordinate exchange (replace
one factor level of one run).  A pass visits every run in order; passes
repeat while at least one exchange was accepted, up to
``max_iterations``.  An exchange is accepted when the determinant ratio
d exceeds ``critical_value``, so phi rises by more than log(critical_value)
at every accepted step.

Each try owns its random stream, derived from ``(seed, try_index)``, so
the set of try outcomes does not depend on how tries are scheduled.
"""
from __future__ import annotations

import functools
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .core import CandidateSet, Design, DesignRegion, Factor, Model, as_theta
from .criterion import InfoMatrix, RatioFunction, apply_exchange, exchange_ratios, log_det
from .errors import EvaluationError, SearchError, SingularDesignError
from .optim import NmOptions, nm_minimize

__all__ = [
    "SearchConfig",
    "TryTrace",
    "SearchResult",
    "random_initial_design",
    "discrete_pea",
    "discrete_cea",
    "continuous_pea",
    "continuous_cea",
    "ALGORITHMS",
]

log = logging.getLogger(__name__)

MAX_REDRAWS = 1000
TIE_TOL = 1e-12


@dataclass(frozen=True)
class SearchConfig:
    tries: int = 100
    critical_value: float = 1.0001
    seed: int = 0
    max_iterations: int = 30
    extra_starts: tuple = ()
    threads: int = 1
    nm: NmOptions = field(default_factory=NmOptions)

    def __post_init__(self):
        if self.tries < 1:
            raise ValueError("tries must be >= 1")
        if not self.critical_value > 1:
            raise ValueError("critical_value must exceed 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        starts = tuple(tuple(float(u) for u in s) for s in self.extra_starts)
        object.__setattr__(self, "extra_starts", starts)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["extra_starts"] = [list(s) for s in self.extra_starts]
        return d


@dataclass
class TryTrace:
    try_index: int
    iterations: int
    phi_trajectory: list
    final_phi: float
    rows: np.ndarray | None = None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    def to_dict(self) -> dict:
        return {
            "try_index": self.try_index,
            "iterations": self.iterations,
            "phi_trajectory": [float(x) for x in self.phi_trajectory],
            "final_phi": float(self.final_phi),
            "error": self.error,
        }


@dataclass
class SearchResult:
    algorithm: str
    design: Design
    phi: float
    traces: list
    config: SearchConfig
    wall_time: float = 0.0

    @property
    def successful(self) -> list:
        return [t for t in self.traces if not t.failed]

    @property
    def mean_iterations(self) -> float:
        ok = self.successful
        return float(np.mean([t.iterations for t in ok])) if ok else math.nan

    @property
    def mean_phi(self) -> float:
        ok = self.successful
        return float(np.mean([t.final_phi for t in ok])) if ok else math.nan

    def best_phis(self, k: int = 3) -> list:
        return sorted((t.final_phi for t in self.successful), reverse=True)[:k]

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "factors": list(self.design.region.names),
            "design": self.design.rows.tolist(),
            "phi": self.phi,
            "mean_iterations": self.mean_iterations,
            "best_phis": self.best_phis(3),
            "failed_tries": sum(t.failed for t in self.traces),
            "traces": [t.to_dict() for t in self.traces],
            "config": self.config.to_dict(),
            "wall_time": self.wall_time,
        }


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def try_rng(seed: int, try_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(try_index,)))


def _bounding_region(model: Model, points: np.ndarray) -> DesignRegion:
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    pad = np.where(hi > lo, 0.0, 0.5 * np.maximum(np.abs(lo), 1.0))
    names = model.factors if len(model.factors) == points.shape[1] else [f"x{k + 1}" for k in range(points.shape[1])]
    return DesignRegion(tuple(Factor(nm, float(a - e), float(b + e)) for nm, a, b, e in zip(names, lo, hi, pad)))


def _safe_gradients(model: Model, points: np.ndarray, theta) -> tuple[np.ndarray, np.ndarray]:
    try:
        G = model.gradients(points, theta)
        valid = np.all(np.isfinite(G), axis=1)
    except EvaluationError:
        G = np.zeros((points.shape[0], model.p))
        valid = np.zeros(points.shape[0], dtype=bool)
        for i, x in enumerate(points):
            try:
                G[i] = model.gradient(x, theta)
                valid[i] = np.all(np.isfinite(G[i]))
            except EvaluationError:
                pass
    G[~valid] = 0.0
    return G, valid


def _pick(d: np.ndarray) -> int:
    """Index of the maximal ratio, lowest index among near-ties."""
    dmax = d.max()
    return int(np.flatnonzero(d >= dmax - TIE_TOL)[0])


def _draw_indices(rng, N: int, n: int, G: np.ndarray, valid: np.ndarray) -> np.ndarray:
    p = G.shape[1]
    for _ in range(MAX_REDRAWS):
        idx = rng.integers(0, N, size=n)
        if n >= p and valid[idx].all() and math.isfinite(log_det(G[idx])):
            return idx
    raise SearchError(f"no nonsingular {n}-run design found in {MAX_REDRAWS} random draws")


def _draw_rows(rng, region: DesignRegion, n: int, model: Model, theta) -> np.ndarray:
    p = model.p
    for _ in range(MAX_REDRAWS):
        rows = rng.uniform(region.lower, region.upper, size=(n, region.v))
        if n < p:
            continue
        try:
            F = model.gradients(rows, theta)
        except EvaluationError:
            continue
        if math.isfinite(log_det(F)):
            return rows
    raise SearchError(f"no nonsingular {n}-run design found in {MAX_REDRAWS} random draws")


def random_initial_design(source, n: int, model: Model, theta0, rng: np.random.Generator,
                          region: DesignRegion | None = None) -> Design:
    """n runs drawn uniformly (with replacement) from a candidate set or a region.

    Whole designs with a singular information matrix are redrawn, at most
    1000 times.
    """
    theta = as_theta(theta0, model)
    if n < model.p:
        log.warning("%d runs for %d parameters: every design is singular", n, model.p)
    if isinstance(source, DesignRegion):
        return Design(_draw_rows(rng, source, n, model, theta), source)
    grid = source.grid()
    G, valid = _safe_gradients(model, grid, theta)
    idx = _draw_indices(rng, grid.shape[0], n, G, valid)
    return Design(grid[idx], region or _bounding_region(model, grid))


def _run_tries(fn, indices: Sequence[int], threads: int) -> list:
    if threads > 1 and len(indices) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, indices))
    return [fn(i) for i in indices]


def _guarded(try_fn, try_index: int, *args) -> TryTrace:
    try:
        return try_fn(try_index, *args)
    except (SingularDesignError, EvaluationError, SearchError) as exc:
        log.warning("try %d failed: %s", try_index, exc)
        return TryTrace(try_index, 0, [], -math.inf, None, str(exc))


def _collect(algorithm, traces, region, config, started) -> SearchResult:
    ok = [t for t in traces if not t.failed]
    if not ok:
        raise SearchError(f"all {len(traces)} tries failed; first error: {traces[0].error}")
    best = max(ok, key=lambda t: (t.final_phi, -t.try_index))
    return SearchResult(algorithm, Design(best.rows, region), best.final_phi, traces, config,
                        time.perf_counter() - started)


# ---------------------------------------------------------------------------
# discrete point exchange
# ---------------------------------------------------------------------------


def _pea_try(try_index, model, theta, grid, G, valid, n, config, start_idx):
    if start_idx is None:
        idx = _draw_indices(try_rng(config.seed, try_index), grid.shape[0], n, G, valid)
    else:
        idx = np.array(start_idx)
    info = InfoMatrix.from_model_matrix(G[idx])
    traj = [info.logdet]
    crit = config.critical_value
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        changed = False
        for i in range(n):
            d = exchange_ratios(info, G[idx[i]], G)
            d[~valid] = -math.inf
            j = _pick(d)
            if d[j] > crit:
                info = apply_exchange(info, G[idx[i]], G[j], float(d[j]))
                idx[i] = j
                traj.append(info.logdet)
                changed = True
        if not changed:
            break
    return TryTrace(try_index, iterations, traj, info.logdet, grid[idx].copy())


def _match_rows(rows: np.ndarray, grid: np.ndarray) -> np.ndarray:
    idx = np.empty(rows.shape[0], dtype=int)
    for i, r in enumerate(rows):
        hit = np.flatnonzero(np.all(grid == r, axis=1))
        if hit.size == 0:
            raise ValueError(f"start design run {i + 1} {r.tolist()} is not a candidate point")
        idx[i] = hit[0]
    return idx


def discrete_pea(model: Model, theta0, omega: CandidateSet, n: int, config: SearchConfig,
                 region: DesignRegion | None = None, start=None) -> SearchResult:
    """Point exchange over a finite candidate set.

    With ``start`` (a design whose runs are all candidates) a single try
    is run from that design instead of random starts.
    """
    started = time.perf_counter()
    theta = as_theta(theta0, model)
    grid = omega.grid()
    if grid.shape[1] != model.v:
        raise ValueError(f"candidates have {grid.shape[1]} factors, model expects {model.v}")
    region = region or _bounding_region(model, grid)
    G, valid = _safe_gradients(model, grid, theta)
    start_idx = None
    if start is not None:
        rows = start.rows if isinstance(start, Design) else np.asarray(start, dtype=float)
        start_idx = _match_rows(rows, grid)
        n = rows.shape[0]
    fn = functools.partial(_guarded_pea, model=model, theta=theta, grid=grid, G=G, valid=valid, n=n,
                           config=config, start_idx=start_idx)
    indices = [0] if start_idx is not None else list(range(config.tries))
    return _collect("discrete-pea", _run_tries(fn, indices, config.threads), region, config, started)


def _guarded_pea(try_index, **kw):
    return _guarded(lambda t: _pea_try(t, **kw), try_index)


# ---------------------------------------------------------------------------
# discrete coordinate exchange
# ---------------------------------------------------------------------------


def _cea_try(try_index, model, theta, levels, grid, G, valid, n, config):
    sizes = [lv.size for lv in levels]
    v = len(levels)
    flat = _draw_indices(try_rng(config.seed, try_index), grid.shape[0], n, G, valid)
    L = np.array(np.unravel_index(flat, sizes)).T  # n x v level indices
    strides = np.array([int(np.prod(sizes[k + 1:])) for k in range(v)])
    cur = L @ strides
    info = InfoMatrix.from_model_matrix(G[cur])
    traj = [info.logdet]
    crit = config.critical_value
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        changed = False
        for i in range(n):
            for k in range(v):
                base = cur[i] - L[i, k] * strides[k]
                cand = base + np.arange(sizes[k]) * strides[k]
                d = exchange_ratios(info, G[cur[i]], G[cand])
                d[~valid[cand]] = -math.inf
                j = _pick(d)
                if d[j] > crit:
                    info = apply_exchange(info, G[cur[i]], G[cand[j]], float(d[j]))
                    L[i, k] = j
                    cur[i] = cand[j]
                    traj.append(info.logdet)
                    changed = True
        if not changed:
            break
    return TryTrace(try_index, iterations, traj, info.logdet, grid[cur].copy())


def _guarded_cea(try_index, **kw):
    return _guarded(lambda t: _cea_try(t, **kw), try_index)


def discrete_cea(model: Model, theta0, omega_k: CandidateSet, n: int, config: SearchConfig,
                 region: DesignRegion | None = None) -> SearchResult:
    """Coordinate exchange over per-factor candidate levels.

    Designs always lie on the product grid of the levels, so gradients are
    computed once for the whole grid.
    """
    started = time.perf_counter()
    if omega_k.levels is None:
        raise ValueError("coordinate exchange needs per-factor candidate levels")
    theta = as_theta(theta0, model)
    levels = omega_k.levels
    if len(levels) != model.v:
        raise ValueError(f"levels given for {len(levels)} factors, model expects {model.v}")
    grid = omega_k.grid()
    region = region or _bounding_region(model, grid)
    G, valid = _safe_gradients(model, grid, theta)
    fn = functools.partial(_guarded_cea, model=model, theta=theta, levels=levels, grid=grid, G=G,
                           valid=valid, n=n, config=config)
    return _collect("discrete-cea", _run_tries(fn, list(range(config.tries)), config.threads),
                    region, config, started)


# ---------------------------------------------------------------------------
# continuous exchange
# ---------------------------------------------------------------------------


def _start_rows(try_index, model, theta, region, n, config, starts):
    if starts is not None:
        return np.array(starts[try_index], dtype=float)
    return _draw_rows(try_rng(config.seed, try_index), region, n, model, theta)


def _continuous_pea_try(try_index, model, theta, region, n, config, starts):
    X = _start_rows(try_index, model, theta, region, n, config, starts)
    n = X.shape[0]
    F = model.gradients(X, theta)
    info = InfoMatrix.from_model_matrix(F)
    traj = [info.logdet]
    bounds = region.bounds
    extra = [np.array(s) for s in config.extra_starts]
    crit = config.critical_value
    gradient = model.gradient
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        changed = False
        for i in range(n):
            ratio = RatioFunction(info, F[i])

            def objective(x):
                return -ratio(gradient(x, theta))

            x_new, f_new = nm_minimize(objective, X[i], bounds, config.nm, extra)
            d = -f_new
            if d > crit:
                fn = gradient(x_new, theta)
                info = apply_exchange(info, F[i], fn, d)
                X[i] = x_new
                F[i] = fn
                traj.append(info.logdet)
                changed = True
        if not changed:
            break
    return TryTrace(try_index, iterations, traj, info.logdet, X.copy())


def _continuous_cea_try(try_index, model, theta, region, n, config, starts):
    X = _start_rows(try_index, model, theta, region, n, config, starts)
    n, v = X.shape
    F = model.gradients(X, theta)
    info = InfoMatrix.from_model_matrix(F)
    traj = [info.logdet]
    extra = np.array(config.extra_starts, dtype=float).reshape(-1, v)
    extra_k = [np.unique(extra[:, k]) for k in range(v)]
    crit = config.critical_value
    gradient = model.gradient
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        changed = False
        for i in range(n):
            for k in range(v):
                ratio = RatioFunction(info, F[i])
                row = X[i].copy()

                def objective(t, row=row, k=k):
                    row[k] = t[0]
                    return -ratio(gradient(row, theta))

                f = region.factors[k]
                t_new, f_new = nm_minimize(objective, X[i, k:k + 1], [(f.lo, f.hi)], config.nm,
                                           [[s] for s in extra_k[k]])
                d = -f_new
                if d > crit:
                    x_new = X[i].copy()
                    x_new[k] = t_new[0]
                    fn = gradient(x_new, theta)
                    info = apply_exchange(info, F[i], fn, d)
                    X[i] = x_new
                    F[i] = fn
                    traj.append(info.logdet)
                    changed = True
        if not changed:
            break
    return TryTrace(try_index, iterations, traj, info.logdet, X.copy())


def _guarded_cont(try_index, try_fn, **kw):
    return _guarded(lambda t: try_fn(t, **kw), try_index)


def _continuous(algorithm, try_fn, model, theta0, region, n, config, starts):
    started = time.perf_counter()
    theta = as_theta(theta0, model)
    if region.v != model.v:
        raise ValueError(f"region has {region.v} factors, model expects {model.v}")
    for s in config.extra_starts:
        if not region.contains(s):
            raise ValueError(f"extra start {list(s)} lies outside the region")
    if starts is not None:
        starts = [s.rows if isinstance(s, Design) else np.asarray(s, dtype=float) for s in starts]
        for s in starts:
            if not region.contains(s):
                raise ValueError("a start design lies outside the region")
        indices = list(range(len(starts)))
    else:
        indices = list(range(config.tries))
    fn = functools.partial(_guarded_cont, try_fn=try_fn, model=model, theta=theta, region=region, n=n,
                           config=config, starts=starts)
    return _collect(algorithm, _run_tries(fn, indices, config.threads), region, config, started)


def continuous_pea(model: Model, theta0, region: DesignRegion, n: int, config: SearchConfig,
                   starts: Sequence | None = None) -> SearchResult:
    """Point exchange where each replacement run is found by Nelder-Mead over the region.

    The ratio d is maximised from the current run and from every point of
    ``config.extra_starts``.  With ``starts`` one try is run from each
    given design instead of from random designs.
    """
    return _continuous("continuous-pea", _continuous_pea_try, model, theta0, region, n, config, starts)


def continuous_cea(model: Model, theta0, region: DesignRegion, n: int, config: SearchConfig,
                   starts: Sequence | None = None) -> SearchResult:
    """Coordinate exchange with a one-dimensional Nelder-Mead per factor level."""
    return _continuous("continuous-cea", _continuous_cea_try, model, theta0, region, n, config, starts)


ALGORITHMS = {
    "discrete-pea": discrete_pea,
    "discrete-cea": discrete_cea,
    "continuous-pea": continuous_pea,
    "continuous-cea": continuous_cea,
}
