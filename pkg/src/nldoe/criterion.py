"""Local D-criterion: model matrix, information matrix and exchange updates.

The error variance is fixed at 1, so the information matrix is F'F where
row i of F is the parameter gradient of the mean at design run i,
evaluated at the prior.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Design, Model, as_theta
from .errors import EvaluationError, SingularDesignError

__all__ = [
    "model_matrix",
    "information_matrix",
    "log_det",
    "InfoMatrix",
    "exchange_ratio",
    "exchange_ratios",
    "apply_exchange",
    "relative_efficiency",
    "phi",
    "RECOMPUTE_EVERY",
]

# |M| at or below this is treated as singular
DET_FLOOR = 1e-300
LOG_DET_FLOOR = math.log(DET_FLOOR)
# smallest admissible Cholesky pivot of the unit-diagonal scaled matrix
PIVOT_TOL = 1e-13
# rebuild the cached inverse and log-determinant after this many updates
RECOMPUTE_EVERY = 50


def model_matrix(model: Model, design, theta0) -> np.ndarray:
    """n x p matrix of parameter gradients at each run."""
    theta = as_theta(theta0, model)
    rows = design.rows if isinstance(design, Design) else np.atleast_2d(np.asarray(design, dtype=float))
    if rows.shape[1] != model.v:
        raise ValueError(f"design has {rows.shape[1]} factors, model {model.name} expects {model.v}")
    F = model.gradients(rows, theta)
    if not np.all(np.isfinite(F)):
        i = int(np.argwhere(~np.isfinite(F))[0, 0])
        raise EvaluationError(f"run {i + 1}: non-finite gradient")
    return F


def information_matrix(F) -> np.ndarray:
    """F'F, summed in a canonical row order so it is exactly permutation invariant."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    F = F[np.lexsort(F.T[::-1])]
    M = F.T @ F
    return 0.5 * (M + M.T)


def _scaled_cholesky(M: np.ndarray):
    """Cholesky factor of D M D with D = diag(M)^-1/2, or None if singular."""
    d = np.diag(M)
    if np.any(~np.isfinite(d)) or np.any(d <= 0):
        return None, None
    s = 1.0 / np.sqrt(d)
    scaled = (M * s[:, None]) * s[None, :]
    if not np.all(np.isfinite(scaled)):
        return None, None
    try:
        L = np.linalg.cholesky(scaled)
    except np.linalg.LinAlgError:
        return None, None
    if np.min(np.diag(L)) ** 2 <= PIVOT_TOL:
        return None, None
    return L, s


def _log_det_matrix(M: np.ndarray) -> float:
    L, s = _scaled_cholesky(M)
    if L is None:
        return -math.inf
    val = 2.0 * float(np.sum(np.log(np.diag(L)))) + float(np.sum(np.log(np.diag(M))))
    return val if val > LOG_DET_FLOOR else -math.inf


def log_det(F) -> float:
    """phi = log|F'F|; -inf when the information matrix is singular."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    if F.shape[0] < F.shape[1]:
        return -math.inf
    return _log_det_matrix(information_matrix(F))


def phi(model: Model, design, theta0) -> float:
    """Local D-criterion value of ``design``."""
    return log_det(model_matrix(model, design, theta0))


def _inverse(M: np.ndarray):
    L, s = _scaled_cholesky(M)
    if L is None:
        return None
    Linv = np.linalg.inv(L)
    inv = ((Linv.T @ Linv) * s[:, None]) * s[None, :]
    return 0.5 * (inv + inv.T)


@dataclass(frozen=True, eq=False)
class InfoMatrix:
    """F'F with its cached inverse and log-determinant.

    ``updates`` counts rank-two updates since the last full recomputation.
    """

    M: np.ndarray
    Minv: np.ndarray
    logdet: float
    updates: int = 0

    @classmethod
    def from_matrix(cls, M) -> "InfoMatrix":
        M = np.array(M, dtype=float)
        M = 0.5 * (M + M.T)
        logdet = _log_det_matrix(M)
        inv = _inverse(M) if math.isfinite(logdet) else None
        if inv is None:
            raise SingularDesignError("information matrix is singular")
        for a in (M, inv):
            a.flags.writeable = False
        return cls(M, inv, logdet, 0)

    @classmethod
    def from_model_matrix(cls, F) -> "InfoMatrix":
        F = np.atleast_2d(np.asarray(F, dtype=float))
        if F.shape[0] < F.shape[1]:
            raise SingularDesignError(f"{F.shape[0]} runs cannot support {F.shape[1]} parameters")
        return cls.from_matrix(information_matrix(F))

    @property
    def p(self) -> int:
        return self.M.shape[0]

    def recomputed(self) -> "InfoMatrix":
        return InfoMatrix.from_matrix(self.M)


def exchange_ratio(info: InfoMatrix, f_old, f_new) -> float:
    """|M - f_old f_old' + f_new f_new'| / |M| without forming the new matrix."""
    fo = np.asarray(f_old, dtype=float)
    fn = np.asarray(f_new, dtype=float)
    a = info.Minv @ fn
    v_nn = fn @ a
    v_oo = fo @ info.Minv @ fo
    v_no = fo @ a
    return float((1.0 + v_nn) * (1.0 - v_oo) + v_no * v_no)


def exchange_ratios(info: InfoMatrix, f_old, F_new) -> np.ndarray:
    """Vectorised :func:`exchange_ratio` over the rows of ``F_new``."""
    fo = np.asarray(f_old, dtype=float)
    F_new = np.atleast_2d(np.asarray(F_new, dtype=float))
    u = info.Minv @ fo
    v_oo = fo @ u
    A = F_new @ info.Minv
    v_nn = np.einsum("ij,ij->i", A, F_new)
    v_no = F_new @ u
    return (1.0 + v_nn) * (1.0 - v_oo) + v_no * v_no


class RatioFunction:
    """d(f_new) for a fixed row being replaced; the hot path of continuous search."""

    __slots__ = ("Minv", "u", "one_minus_voo")

    def __init__(self, info: InfoMatrix, f_old):
        fo = np.asarray(f_old, dtype=float)
        self.Minv = info.Minv
        self.u = info.Minv @ fo
        self.one_minus_voo = 1.0 - float(fo @ self.u)

    def __call__(self, fn: np.ndarray) -> float:
        a = self.Minv @ fn
        v_no = self.u @ fn
        return float((1.0 + fn @ a) * self.one_minus_voo + v_no * v_no)


def _rank_one_inverse(Minv: np.ndarray, f: np.ndarray, sign: float):
    # (M + sign f f')^-1 by Sherman-Morrison
    a = Minv @ f
    den = 1.0 + sign * (f @ a)
    if den <= 0.0 or not math.isfinite(den):
        return None
    return Minv - sign * np.outer(a, a) / den


def apply_exchange(info: InfoMatrix, f_old, f_new, d: float | None = None) -> InfoMatrix:
    """Replace the contribution of ``f_old`` by ``f_new``.

    The new row is added before the old one is removed so the
    intermediate matrix stays nonsingular.
    """
    fo = np.asarray(f_old, dtype=float)
    fn = np.asarray(f_new, dtype=float)
    if np.array_equal(fo, fn):
        return info
    if d is None:
        d = exchange_ratio(info, fo, fn)
    if not d > 0.0 or not math.isfinite(d):
        raise SingularDesignError(f"exchange gives a singular information matrix (ratio {d})")
    M = info.M - np.outer(fo, fo) + np.outer(fn, fn)
    M = 0.5 * (M + M.T)
    updates = info.updates + 1
    inv = _rank_one_inverse(info.Minv, fn, 1.0)
    if inv is not None:
        inv = _rank_one_inverse(inv, fo, -1.0)
    if inv is None or updates >= RECOMPUTE_EVERY:
        return InfoMatrix.from_matrix(M)
    logdet = info.logdet + math.log(d)
    if logdet <= LOG_DET_FLOOR:
        raise SingularDesignError("exchange drives the determinant below the singularity floor")
    inv = 0.5 * (inv + inv.T)
    M.flags.writeable = False
    inv.flags.writeable = False
    return InfoMatrix(M, inv, logdet, updates)


def relative_efficiency(phi_a: float, phi_b: float, p: int) -> float:
    """Efficiency of design A relative to design B, in percent."""
    if p < 1:
        raise ValueError("p must be a positive integer")
    return 100.0 * math.exp((phi_a - phi_b) / p)
