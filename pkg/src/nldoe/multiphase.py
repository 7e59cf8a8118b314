"""Multiphase search: coarse discrete start, continuous refinement, snapping.

Phase 1 turns random designs into cheap intermediate solutions by point
exchange over a coarse candidate set with a high critical value.  Phase 2
refines each distinct intermediate design by continuous exchange.  Phase 3
groups quasi-replicate runs of the best refined design, snaps every
cluster onto a grid of distinguishable levels, and finally reallocates
runs among the resulting distinct points by discrete point exchange.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, replace
from decimal import Decimal
from typing import Sequence

import numpy as np

from .core import CandidateSet, Design, DesignRegion, Model, as_theta
from .criterion import log_det
from .errors import EvaluationError, SearchError
from .search import SearchConfig, SearchResult, continuous_cea, continuous_pea, discrete_pea

__all__ = [
    "ClosestDistances",
    "Cluster",
    "MultiphaseResult",
    "cluster_quasi_replicates",
    "level_grid",
    "snap_design",
    "multiphase",
]

log = logging.getLogger(__name__)

# slack on |delta| <= closest so that values printed at the grid resolution still chain
LINK_RTOL = 1e-9
TIE_TOL = 1e-12


@dataclass(frozen=True)
class ClosestDistances:
    """Per-factor resolution of levels an experimenter can tell apart."""

    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(c) for c in self.values)
        if not vals:
            raise ValueError("closest distances are empty")
        for c in vals:
            if not (math.isfinite(c) and c > 0):
                raise ValueError(f"closest distance {c} must be a positive real")
        object.__setattr__(self, "values", vals)

    @classmethod
    def of(cls, closest, region: DesignRegion | None = None) -> "ClosestDistances":
        cd = closest if isinstance(closest, ClosestDistances) else cls(tuple(closest))
        if region is not None:
            cd.check(region)
        return cd

    def check(self, region: DesignRegion) -> None:
        if len(self.values) != region.v:
            raise ValueError(f"{len(self.values)} closest distances for {region.v} factors")
        for c, f in zip(self.values, region.factors):
            if not c < f.width:
                raise ValueError(f"closest distance {c} for {f.name} is not below the width {f.width}")

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)


@dataclass(frozen=True)
class Cluster:
    """Runs treated as replicates of one support point."""

    members: tuple[int, ...]
    level: tuple[float, ...] | None = None

    @property
    def size(self) -> int:
        return len(self.members)


def cluster_quasi_replicates(design, closest) -> list[Cluster]:
    """Single-linkage clusters of runs whose factors all differ by at most ``closest``.

    Clusters are ordered by their per-factor minimum coordinates and
    members by run index.
    """
    rows = design.rows if isinstance(design, Design) else np.atleast_2d(np.asarray(design, dtype=float))
    c = np.asarray(tuple(closest), dtype=float)
    if c.size != rows.shape[1]:
        raise ValueError(f"{c.size} closest distances for {rows.shape[1]} factors")
    n = rows.shape[0]
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    lim = c * (1.0 + LINK_RTOL)
    for i in range(n):
        near = np.flatnonzero(np.all(np.abs(rows[i + 1:] - rows[i]) <= lim, axis=1)) + i + 1
        for j in near:
            a, b = find(i), find(int(j))
            if a != b:
                parent[max(a, b)] = min(a, b)

    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    clusters = [tuple(m) for m in groups.values()]
    clusters.sort(key=lambda m: (tuple(rows[list(m)].min(axis=0)), m))
    return [Cluster(m) for m in clusters]


def _decimals(c: float) -> int:
    return max(0, -Decimal(repr(c)).normalize().as_tuple().exponent)


def level_grid(lo: float, hi: float, closest: float, bounds: tuple[float, float]) -> np.ndarray:
    """Multiples of ``closest`` from just below ``lo`` to just above ``hi``, kept inside ``bounds``.

    When no multiple lies inside ``bounds`` the clipped end points are used.
    """
    m_lo = math.floor(lo / closest + 1e-9)
    m_hi = math.ceil(hi / closest - 1e-9)
    nd = _decimals(closest)
    vals = [round(m * closest, nd) for m in range(m_lo, m_hi + 1)]
    inside = [t for t in vals if bounds[0] <= t <= bounds[1]]
    if not inside:
        inside = sorted({min(max(t, bounds[0]), bounds[1]) for t in (vals[0], vals[-1])})
    return np.array(inside)


def _phi_rows(model: Model, rows: np.ndarray, theta) -> float:
    try:
        return log_det(model.gradients(rows, theta))
    except EvaluationError:
        return -math.inf


def snap_design(model: Model, theta0, design: Design, closest) -> tuple[Design, list[Cluster]]:
    """Replace quasi-replicates by exact replicates on the closest-distance grid.

    Factors are processed in order and clusters in sorted order; each
    choice is made against the progressively snapped design.
    """
    theta = as_theta(theta0, model)
    region = design.region
    cd = ClosestDistances.of(closest, region)
    clusters = cluster_quasi_replicates(design, cd)
    X = design.rows.copy()
    for k, (ck, f) in enumerate(zip(cd, region.factors)):
        for cl in clusters:
            idx = list(cl.members)
            vals = X[idx, k]
            cands = level_grid(float(vals.min()), float(vals.max()), ck, (f.lo, f.hi))
            scores = np.empty(cands.size)
            for j, t in enumerate(cands):
                X[idx, k] = t
                scores[j] = _phi_rows(model, X, theta)
            best = int(np.flatnonzero(scores >= scores.max() - TIE_TOL)[0]) if np.isfinite(scores.max()) else 0
            X[idx, k] = cands[best]
    snapped = [Cluster(cl.members, tuple(float(u) for u in X[cl.members[0]])) for cl in clusters]
    return Design(X, region), snapped


@dataclass
class MultiphaseResult:
    design: Design
    phi: float
    phase1: SearchResult
    phase1_distinct: int
    phase2: SearchResult
    snapped: Design
    snapped_phi: float
    clusters: list
    phase3: SearchResult
    wall_time: float = 0.0

    @property
    def phase2_phis(self) -> list:
        return [t.final_phi for t in self.phase2.successful]

    @property
    def support(self) -> tuple[np.ndarray, np.ndarray]:
        return self.design.support()

    @property
    def n_star(self) -> int:
        return self.support[0].shape[0]

    def to_dict(self) -> dict:
        pts, counts = self.support
        return {
            "algorithm": "multiphase",
            "factors": list(self.design.region.names),
            "design": self.design.rows.tolist(),
            "phi": self.phi,
            "phase1_distinct": self.phase1_distinct,
            "phase1_mean_iterations": self.phase1.mean_iterations,
            "phase2_algorithm": self.phase2.algorithm,
            "phase2_phis": [float(x) for x in self.phase2_phis],
            "phase2_best_phi": self.phase2.phi,
            "phase2_mean_phi": self.phase2.mean_phi,
            "phase2_mean_iterations": self.phase2.mean_iterations,
            "snapped_phi": self.snapped_phi,
            "n_star": self.n_star,
            "support": [{"point": p.tolist(), "replicates": int(c)} for p, c in zip(pts, counts)],
            "phase1_config": self.phase1.config.to_dict(),
            "phase2_config": self.phase2.config.to_dict(),
            "wall_time": self.wall_time,
        }


def _distinct_designs(result: SearchResult) -> list[np.ndarray]:
    seen = set()
    out = []
    for t in sorted(result.successful, key=lambda t: t.try_index):
        rows = Design(t.rows, result.design.region).sorted().rows
        key = rows.tobytes()
        if key not in seen:
            seen.add(key)
            out.append(np.array(t.rows))
    return out


def multiphase(model: Model, theta0, omega: CandidateSet, region: DesignRegion, n: int, closest,
               phase1_config: SearchConfig = SearchConfig(tries=30, critical_value=1.1),
               phase2_config: SearchConfig = SearchConfig(critical_value=1.0001),
               phase2_mode: str = "pea") -> MultiphaseResult:
    """Three-phase search for an exact design with few, exactly replicated support points."""
    started = time.perf_counter()
    theta = as_theta(theta0, model)
    cd = ClosestDistances.of(closest, region)
    if phase2_mode not in ("pea", "cea"):
        raise ValueError(f"phase2_mode must be 'pea' or 'cea', got {phase2_mode!r}")
    if not region.contains(omega.grid()):
        raise ValueError("candidate set reaches outside the region")

    p1 = discrete_pea(model, theta, omega, n, phase1_config, region=region)
    starts = _distinct_designs(p1)
    if not starts:
        raise SearchError("phase 1 produced no design")
    log.info("phase 1: %d distinct designs from %d tries", len(starts), len(p1.traces))

    cont = continuous_pea if phase2_mode == "pea" else continuous_cea
    p2 = cont(model, theta, region, n, phase2_config, starts=starts)
    log.info("phase 2: best phi %.4f", p2.phi)

    snapped, clusters = snap_design(model, theta, p2.design, cd)
    snapped_phi = _phi_rows(model, snapped.rows, theta)
    pts, _ = snapped.support()
    p3_config = replace(phase2_config, tries=1, extra_starts=())
    p3 = discrete_pea(model, theta, CandidateSet.from_points(pts), n, p3_config, region=region,
                      start=snapped)
    final = p3.design.sorted()
    return MultiphaseResult(final, p3.phi, p1, len(starts), p2, snapped, snapped_phi, clusters, p3,
                            time.perf_counter() - started)
