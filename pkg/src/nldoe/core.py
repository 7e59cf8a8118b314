"""Domain types and built-in nonlinear regression models.

Factor levels are always held in natural units (flow rate, temperature,
enzyme concentration, ...).  Any coding of the factors, such as the log
scalings used by the response-surface models, happens inside the model.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, EvaluationError

__all__ = [
    "Factor",
    "DesignRegion",
    "Design",
    "PriorTheta",
    "CandidateSet",
    "Model",
    "CallableModel",
    "MechanisticModel",
    "HybridModel",
    "SaturationModel",
    "ExpQuadraticModel",
    "SecondOrderPolynomial",
    "AffineScale",
    "LogScale",
    "mechanistic_model",
    "hybrid_model",
    "second_order_polynomial",
    "component_models",
    "central_difference_gradient",
]


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype)
    arr.flags.writeable = False
    return arr


# ---------------------------------------------------------------------------
# Regions, designs, candidates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Factor:
    """One treatment factor with its admissible interval."""

    name: str
    lo: float
    hi: float
    closest: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError(f"factor {self.name!r}: bounds must be finite")
        if not self.lo < self.hi:
            raise ValueError(f"factor {self.name!r}: need lo < hi, got [{self.lo}, {self.hi}]")
        if self.closest is not None and not 0 < self.closest < self.hi - self.lo:
            raise ValueError(
                f"factor {self.name!r}: closest distance {self.closest} outside (0, {self.hi - self.lo})"
            )

    @property
    def width(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class DesignRegion:
    """The cuboid of admissible factor settings."""

    factors: tuple[Factor, ...]

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if not self.factors:
            raise ValueError("a region needs at least one factor")
        names = [f.name for f in self.factors]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate factor names in {names}")

    @classmethod
    def from_bounds(cls, names, bounds, closest=None) -> "DesignRegion":
        closest = [None] * len(names) if closest is None else list(closest)
        if not len(names) == len(bounds) == len(closest):
            raise ValueError("names, bounds and closest distances differ in length")
        return cls(tuple(Factor(n, float(lo), float(hi), None if c is None else float(c))
                         for n, (lo, hi), c in zip(names, bounds, closest)))

    @property
    def v(self) -> int:
        return len(self.factors)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.factors)

    @property
    def lower(self) -> np.ndarray:
        return np.array([f.lo for f in self.factors])

    @property
    def upper(self) -> np.ndarray:
        return np.array([f.hi for f in self.factors])

    @property
    def bounds(self) -> list[tuple[float, float]]:
        return [(f.lo, f.hi) for f in self.factors]

    @property
    def closest(self) -> tuple[float | None, ...]:
        return tuple(f.closest for f in self.factors)

    def with_closest(self, closest: Sequence[float]) -> "DesignRegion":
        if len(closest) != self.v:
            raise ValueError(f"expected {self.v} closest distances, got {len(closest)}")
        return DesignRegion(tuple(Factor(f.name, f.lo, f.hi, float(c))
                                  for f, c in zip(self.factors, closest)))

    def contains(self, points) -> bool:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.v:
            return False
        return bool(np.all((pts >= self.lower) & (pts <= self.upper)))

    def clip(self, points) -> np.ndarray:
        return np.clip(np.asarray(points, dtype=float), self.lower, self.upper)


@dataclass(frozen=True, eq=False)
class Design:
    """An exact n-run design; replicates are repeated rows."""

    rows: np.ndarray
    region: DesignRegion

    def __post_init__(self):
        rows = np.array(self.rows, dtype=float)
        if rows.ndim == 1:
            rows = rows.reshape(1, -1) if self.region.v > 1 else rows.reshape(-1, 1)
        if rows.ndim != 2 or rows.shape[0] < 1:
            raise ValueError("a design needs at least one run")
        if rows.shape[1] != self.region.v:
            raise ValueError(f"design has {rows.shape[1]} columns, region has {self.region.v} factors")
        if not np.all(np.isfinite(rows)):
            raise ValueError("design contains non-finite levels")
        bad = np.argwhere((rows < self.region.lower) | (rows > self.region.upper))
        if bad.size:
            i, k = bad[0]
            f = self.region.factors[k]
            raise ValueError(f"run {i + 1}: {f.name}={rows[i, k]} outside [{f.lo}, {f.hi}]")
        rows.flags.writeable = False
        object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def v(self) -> int:
        return self.rows.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Design):
            return NotImplemented
        return self.region == other.region and np.array_equal(self.rows, other.rows)

    def __hash__(self):
        return hash((self.region, self.rows.tobytes()))

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct points (lexicographically sorted) and their replicate counts."""
        pts, counts = np.unique(self.rows, axis=0, return_counts=True)
        return pts, counts

    def sorted(self) -> "Design":
        order = np.lexsort(self.rows.T[::-1])
        return Design(self.rows[order], self.region)


@dataclass(frozen=True, eq=False)
class PriorTheta:
    """Parameter values at which the model is linearised."""

    values: np.ndarray

    def __post_init__(self):
        vals = _frozen(np.ravel(self.values))
        if not np.all(np.isfinite(vals)):
            raise ValueError("prior parameter values must be finite")
        object.__setattr__(self, "values", vals)

    def check(self, model: "Model") -> np.ndarray:
        if self.values.size != model.p:
            raise ValueError(f"prior has {self.values.size} values, model {model.name} has {model.p} parameters")
        return self.values


def as_theta(theta, model: "Model") -> np.ndarray:
    if isinstance(theta, PriorTheta):
        return theta.check(model)
    return PriorTheta(theta).check(model)


@dataclass(frozen=True, eq=False)
class CandidateSet:
    """Either a list of candidate points or per-factor candidate levels."""

    points: np.ndarray | None = None
    levels: tuple[np.ndarray, ...] | None = None

    def __post_init__(self):
        if (self.points is None) == (self.levels is None):
            raise ValueError("give exactly one of points or levels")

    @classmethod
    def from_points(cls, points, region: DesignRegion | None = None) -> "CandidateSet":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.size == 0:
            raise ValueError("empty candidate set")
        _, first = np.unique(pts, axis=0, return_index=True)
        pts = pts[np.sort(first)]
        if region is not None and not region.contains(pts):
            raise ValueError("candidate points lie outside the region")
        return cls(points=_frozen(pts))

    @classmethod
    def from_levels(cls, levels, region: DesignRegion | None = None) -> "CandidateSet":
        levs = []
        for k, lv in enumerate(levels):
            arr = np.unique(np.asarray(lv, dtype=float))
            if arr.size == 0:
                raise ValueError(f"no candidate levels for factor {k + 1}")
            if region is not None:
                f = region.factors[k]
                if arr[0] < f.lo or arr[-1] > f.hi:
                    raise ValueError(f"candidate levels of {f.name} outside [{f.lo}, {f.hi}]")
            levs.append(_frozen(arr))
        if region is not None and len(levs) != region.v:
            raise ValueError(f"expected levels for {region.v} factors, got {len(levs)}")
        return cls(levels=tuple(levs))

    @property
    def v(self) -> int:
        return self.points.shape[1] if self.points is not None else len(self.levels)

    def grid(self) -> np.ndarray:
        """All candidate points; per-factor levels expand to their full product."""
        if self.points is not None:
            return np.array(self.points)
        return np.array(list(itertools.product(*self.levels)), dtype=float)

    def __len__(self):
        if self.points is not None:
            return self.points.shape[0]
        return int(np.prod([lv.size for lv in self.levels]))


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------


def central_difference_gradient(mean: Callable, point, theta, rel_step: float = 1e-6) -> np.ndarray:
    """Central finite differences of ``mean`` in theta, step 1e-6*(1+|theta_j|)."""
    theta = np.asarray(theta, dtype=float)
    g = np.empty(theta.size)
    for j in range(theta.size):
        h = rel_step * (1.0 + abs(theta[j]))
        up = theta.copy()
        dn = theta.copy()
        up[j] += h
        dn[j] -= h
        g[j] = (mean(point, up) - mean(point, dn)) / (2.0 * h)
    return g


class Model:
    """A mean function f(x, theta) together with its parameter gradient.

    Subclasses implement :meth:`mean` and usually :meth:`gradient`; the
    base gradient falls back to central differences.  ``gradients``
    evaluates many points at once and names the failing run on error.
    """

    def __init__(self, params: Sequence[str], factors: Sequence[str], name: str = "model"):
        self.params = tuple(params)
        self.factors = tuple(factors)
        self.name = name

    @property
    def p(self) -> int:
        return len(self.params)

    @property
    def v(self) -> int:
        return len(self.factors)

    def mean(self, point, theta) -> float:
        raise NotImplementedError

    def gradient(self, point, theta) -> np.ndarray:
        return central_difference_gradient(self.mean, point, theta)

    def fd_gradient(self, point, theta, rel_step: float = 1e-6) -> np.ndarray:
        return central_difference_gradient(self.mean, point, theta, rel_step)

    def means(self, points, theta) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty(pts.shape[0])
        for i, x in enumerate(pts):
            try:
                out[i] = self.mean(x, theta)
            except EvaluationError as exc:
                raise type(exc)(f"run {i + 1}: {exc}") from exc
        return out

    def gradients(self, points, theta) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty((pts.shape[0], self.p))
        for i, x in enumerate(pts):
            try:
                out[i] = self.gradient(x, theta)
            except EvaluationError as exc:
                raise type(exc)(f"run {i + 1}: {exc}") from exc
        return out

    def __repr__(self):
        return f"<{type(self).__name__} {self.name} p={self.p} v={self.v}>"


class CallableModel(Model):
    """Wrap a plain Python mean function; the gradient is taken numerically."""

    def __init__(self, mean: Callable, params, factors, name="callable"):
        super().__init__(params, factors, name)
        self._mean = mean

    def mean(self, point, theta) -> float:
        try:
            val = float(self._mean(np.asarray(point, dtype=float), np.asarray(theta, dtype=float)))
        except (ZeroDivisionError, OverflowError, ValueError) as exc:
            raise EvaluationError(str(exc)) from exc
        if math.isnan(val):
            raise EvaluationError(f"{self.name}: mean is NaN at {list(point)}")
        return val


def _exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        raise EvaluationError(f"exp overflow at argument {x}") from None


# Arrhenius-type temperature coding used by the reactor model
ARRHENIUS_REF = 0.0028344


class MechanisticModel(Model):
    """Two-step consecutive reaction yield in flow rate R, catalyst C, temperature T.

    eta = C^t1 t0 R e^(t2 X) / ((R + C^t1' t0' e^(t2' X)) (R + C^t1 t0 e^(t2 X)))
    with X = 0.0028344 - 1/(T + 273).  Parameter order is
    (t0, t0', t1, t1', t2, t2').
    """

    def __init__(self, analytic: bool = True):
        super().__init__(("theta0", "theta0p", "theta1", "theta1p", "theta2", "theta2p"),
                         ("R", "C", "T"), "mechanistic")
        self.analytic = analytic

    @staticmethod
    def _parts(point, theta):
        R, C, T = point
        if T <= -273.0:
            raise DomainError(f"temperature {T} <= -273", "1/(T+273)", T)
        if C <= 0.0:
            raise DomainError(f"catalyst concentration {C} <= 0", "C^theta", C)
        X = ARRHENIUS_REF - 1.0 / (T + 273.0)
        t0, t0p, t1, t1p, t2, t2p = theta
        lnC = math.log(C)
        cA = _exp(t1 * lnC + t2 * X)
        cB = _exp(t1p * lnC + t2p * X)
        A = t0 * cA
        B = t0p * cB
        dA = R + A
        dB = R + B
        if dA == 0.0 or dB == 0.0:
            raise DomainError(f"zero denominator at R={R}, C={C}, T={T}", "divide", 0.0)
        return float(R), float(X), float(lnC), float(cA), float(cB), float(A), float(B), float(dA), float(dB)

    def mean(self, point, theta) -> float:
        R, X, lnC, cA, cB, A, B, dA, dB = self._parts(point, theta)
        return A * R / (dA * dB)

    def gradient(self, point, theta) -> np.ndarray:
        if not self.analytic:
            return self.fd_gradient(point, theta)
        R, X, lnC, cA, cB, A, B, dA, dB = self._parts(point, theta)
        eta = A * R / (dA * dB)
        d_A = R * R / (dB * dA * dA)
        d_B = -eta / dB
        return np.array([d_A * cA, d_B * cB, d_A * A * lnC, d_B * B * lnC, d_A * A * X, d_B * B * X])

    def gradients(self, points, theta) -> np.ndarray:
        if not self.analytic:
            return super().gradients(points, theta)
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        R, C, T = pts[:, 0], pts[:, 1], pts[:, 2]
        for col, bad, what in ((T, T <= -273.0, "temperature <= -273"), (C, C <= 0.0, "catalyst concentration <= 0")):
            if bad.any():
                i = int(np.argmax(bad))
                raise DomainError(f"run {i + 1}: {what}", None, float(col[i]))
        t0, t0p, t1, t1p, t2, t2p = (float(t) for t in theta)
        X = ARRHENIUS_REF - 1.0 / (T + 273.0)
        lnC = np.log(C)
        with np.errstate(over="raise"):
            try:
                cA = np.exp(t1 * lnC + t2 * X)
                cB = np.exp(t1p * lnC + t2p * X)
            except FloatingPointError:
                raise EvaluationError("exp overflow in mechanistic model") from None
        A = t0 * cA
        B = t0p * cB
        dA = R + A
        dB = R + B
        zero = (dA == 0.0) | (dB == 0.0)
        if zero.any():
            i = int(np.argmax(zero))
            raise DomainError(f"run {i + 1}: zero denominator", "divide", 0.0)
        eta = A * R / (dA * dB)
        d_A = R * R / (dB * dA * dA)
        d_B = -eta / dB
        return np.column_stack([d_A * cA, d_B * cB, d_A * A * lnC, d_B * B * lnC, d_A * A * X, d_B * B * X])


class AffineScale:
    """x = (u - centre) / half_range."""

    def __init__(self, centre: float, half_range: float):
        self.centre = float(centre)
        self.half_range = float(half_range)

    def __call__(self, u):
        return (u - self.centre) / self.half_range

    def __repr__(self):
        return f"AffineScale({self.centre}, {self.half_range})"


class LogScale:
    """x = (log u - log centre) / log ratio; requires u > 0."""

    def __init__(self, centre: float, ratio: float):
        self.centre = float(centre)
        self.ratio = float(ratio)
        self._log_c = math.log(self.centre)
        self._log_r = math.log(self.ratio)

    def __call__(self, u):
        if np.ndim(u) == 0:
            if u <= 0:
                raise DomainError(f"log scaling of non-positive level {u}", "log", float(u))
            return (math.log(u) - self._log_c) / self._log_r
        u = np.asarray(u, dtype=float)
        if np.any(u <= 0):
            raise DomainError(f"log scaling of non-positive level {u[u <= 0][0]}", "log", float(u[u <= 0][0]))
        return (np.log(u) - self._log_c) / self._log_r

    def __repr__(self):
        return f"LogScale({self.centre}, {self.ratio})"


# Codings of the two reference experiments
EXAMPLE1_SCALINGS = (LogScale(3.0, 2.0), LogScale(2.0, 2.0), AffineScale(80.0, 10.0))
EXAMPLE2_SCALINGS = (AffineScale(5.0, 2.5), LogScale(6.25, 10.0), AffineScale(300.0, 100.0))


class _ExpQuadratic:
    # exp(a0 + a1 xE + a2 xP + a3 xE^2 + a4 xP^2) and its regressors
    xE = EXAMPLE2_SCALINGS[1]
    xP = EXAMPLE2_SCALINGS[2]

    @classmethod
    def terms(cls, E, P):
        e = cls.xE(E)
        q = cls.xP(P)
        return e, q

    @staticmethod
    def exponent(a, e, q):
        return a[0] + a[1] * e + a[2] * q + a[3] * e * e + a[4] * q * q


class HybridModel(Model):
    """Transformed conversion xi/(100-xi) in substrate S, enzyme E, pressure P.

    mean = exp(a0 + a1 xE + a2 xP + a3 xE^2 + a4 xP^2) S / (a5 + S),
    xE = log10(E/6.25), xP = (P-300)/100.
    """

    def __init__(self):
        super().__init__(tuple(f"a{j}" for j in range(6)), ("S", "E", "P"), "hybrid")

    def _parts(self, point, theta):
        S, E, P = point
        if E <= 0.0:
            raise DomainError(f"enzyme concentration {E} <= 0", "log10", float(E))
        a0, a1, a2, a3, a4, a5 = theta
        den = a5 + S
        if den == 0.0:
            raise DomainError(f"a5 + S = 0 at S={S}", "divide", 0.0)
        e, q = _ExpQuadratic.terms(E, P)
        g = _exp(a0 + a1 * e + a2 * q + a3 * e * e + a4 * q * q)
        return float(S), e, q, g, float(den)

    def mean(self, point, theta) -> float:
        S, e, q, g, den = self._parts(point, theta)
        return g * S / den

    def gradient(self, point, theta) -> np.ndarray:
        S, e, q, g, den = self._parts(point, theta)
        eta = g * S / den
        return np.array([eta, eta * e, eta * q, eta * e * e, eta * q * q, -eta / den])

    def gradients(self, points, theta) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        S, E, P = pts[:, 0], pts[:, 1], pts[:, 2]
        if np.any(E <= 0):
            i = int(np.argmax(E <= 0))
            raise DomainError(f"run {i + 1}: enzyme concentration {E[i]} <= 0", "log10", float(E[i]))
        a = np.asarray(theta, dtype=float)
        den = a[5] + S
        if np.any(den == 0):
            i = int(np.argmax(den == 0))
            raise DomainError(f"run {i + 1}: a5 + S = 0", "divide", 0.0)
        e, q = _ExpQuadratic.terms(E, P)
        with np.errstate(over="raise"):
            try:
                g = np.exp(_ExpQuadratic.exponent(a, e, q))
            except FloatingPointError:
                raise EvaluationError("exp overflow in hybrid model") from None
        eta = g * S / den
        return np.column_stack([eta, eta * e, eta * q, eta * e * e, eta * q * q, -eta / den])


class SaturationModel(Model):
    """g1 S / (g2 + S), the single-factor substrate model."""

    def __init__(self):
        super().__init__(("g1", "g2"), ("S",), "saturation")

    def mean(self, point, theta) -> float:
        S = float(np.ravel(point)[0])
        g1, g2 = (float(t) for t in theta)
        if g2 + S == 0.0:
            raise DomainError(f"g2 + S = 0 at S={S}", "divide", 0.0)
        return g1 * S / (g2 + S)

    def gradient(self, point, theta) -> np.ndarray:
        S = float(np.ravel(point)[0])
        g1, g2 = (float(t) for t in theta)
        den = g2 + S
        if den == 0.0:
            raise DomainError(f"g2 + S = 0 at S={S}", "divide", 0.0)
        return np.array([S / den, -g1 * S / (den * den)])


class ExpQuadraticModel(Model):
    """exp(a0 + a1 xE + a2 xP + a3 xE^2 + a4 xP^2) at fixed substrate level."""

    def __init__(self):
        super().__init__(tuple(f"a{j}" for j in range(5)), ("E", "P"), "exp-quadratic")

    def mean(self, point, theta) -> float:
        E, P = (float(u) for u in point)
        e, q = _ExpQuadratic.terms(E, P)
        return _exp(_ExpQuadratic.exponent([float(t) for t in theta], e, q))

    def gradient(self, point, theta) -> np.ndarray:
        E, P = (float(u) for u in point)
        e, q = _ExpQuadratic.terms(E, P)
        g = _exp(_ExpQuadratic.exponent([float(t) for t in theta], e, q))
        return np.array([g, g * e, g * q, g * e * e, g * q * q])


class SecondOrderPolynomial(Model):
    """Full quadratic response surface in coded factors.

    Regressors are ordered: intercept, linear terms, two-factor
    interactions (j < k, declaration order), pure squares.
    """

    def __init__(self, scalings: Sequence[Callable], factors: Sequence[str], name="poly2"):
        v = len(scalings)
        if v < 1:
            raise ValueError("need at least one factor")
        if len(factors) != v:
            raise ValueError("one scaling per factor is required")
        params = ["b0"] + [f"b{k + 1}" for k in range(v)]
        params += [f"b{j + 1}{k + 1}" for j, k in itertools.combinations(range(v), 2)]
        params += [f"b{k + 1}{k + 1}" for k in range(v)]
        super().__init__(params, factors, name)
        self.scalings = tuple(scalings)

    def regressors(self, point) -> np.ndarray:
        x = [s(float(u)) for s, u in zip(self.scalings, np.ravel(point))]
        row = [1.0] + x
        row += [x[j] * x[k] for j, k in itertools.combinations(range(len(x)), 2)]
        row += [xk * xk for xk in x]
        return np.array(row)

    def mean(self, point, theta) -> float:
        return float(self.regressors(point) @ np.asarray(theta, dtype=float))

    def gradient(self, point, theta) -> np.ndarray:
        return self.regressors(point)


def mechanistic_model(analytic: bool = True) -> MechanisticModel:
    return MechanisticModel(analytic)


def hybrid_model() -> HybridModel:
    return HybridModel()


def second_order_polynomial(v: int, scaling: Sequence[Callable] | None = None,
                            factors: Sequence[str] | None = None) -> SecondOrderPolynomial:
    """Quadratic model in ``v`` factors; identity coding when ``scaling`` is None."""
    if v < 1:
        raise ValueError("v must be >= 1")
    if scaling is None:
        scaling = [AffineScale(0.0, 1.0)] * v
    if factors is None:
        factors = [f"x{k + 1}" for k in range(v)]
    return SecondOrderPolynomial(scaling, factors)


def component_models() -> tuple[SaturationModel, ExpQuadraticModel]:
    return SaturationModel(), ExpQuadraticModel()
