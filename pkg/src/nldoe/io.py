"""File formats: design and data CSV, model and prior JSON, run specifications.

Floats are written with ``repr``, the shortest string that reads back to
the same double, so a design survives a write/read cycle bit for bit.
"""
from __future__ import annotations

import csv
import io as _io
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

import numpy as np

from .core import (
    EXAMPLE1_SCALINGS,
    EXAMPLE2_SCALINGS,
    Design,
    DesignRegion,
    Factor,
    Model,
    component_models,
    central_difference_gradient,
    hybrid_model,
    mechanistic_model,
    second_order_polynomial,
)
from .expr import ExprModel

__all__ = [
    "FormatError",
    "FiniteDifferenceModel",
    "BUILTIN_MODELS",
    "load_model",
    "parse_prior",
    "parse_region",
    "parse_levels",
    "parse_vector",
    "write_design_csv",
    "read_design_csv",
    "design_to_csv",
    "read_data_csv",
    "RunSpec",
    "load_runspec",
]


class FormatError(ValueError):
    """Malformed input file or argument; the message names the source."""


class FiniteDifferenceModel(Model):
    """Use central differences of ``base.mean`` in place of its own gradient."""

    def __init__(self, base: Model, rel_step: float = 1e-6):
        super().__init__(base.params, base.factors, f"{base.name}-fd")
        self.base = base
        self.rel_step = rel_step

    def mean(self, point, theta) -> float:
        return self.base.mean(point, theta)

    def gradient(self, point, theta) -> np.ndarray:
        return central_difference_gradient(self.base.mean, point, theta, self.rel_step)


def _builtin(name: str) -> Model:
    if name == "poly2-example1":
        return second_order_polynomial(3, EXAMPLE1_SCALINGS, ("R", "C", "T"))
    if name == "poly2-example2":
        return second_order_polynomial(3, EXAMPLE2_SCALINGS, ("S", "E", "P"))
    if name == "saturation":
        return component_models()[0]
    if name == "exp-quadratic":
        return component_models()[1]
    return {"mechanistic": mechanistic_model, "hybrid": hybrid_model}[name]()


BUILTIN_MODELS = ("mechanistic", "hybrid", "poly2-example1", "poly2-example2", "saturation", "exp-quadratic")


def load_model(spec) -> Model:
    """Model from a builtin name, a JSON file path, or a parsed model-spec dict.

    A spec is ``{"builtin": name}`` or ``{"expr": text, "params": [...],
    "factors": [...]}``; ``"gradient": "fd"`` swaps in finite differences.
    """
    if isinstance(spec, str):
        if spec in BUILTIN_MODELS:
            return _builtin(spec)
        if spec.endswith("-fd") and spec[:-3] in BUILTIN_MODELS:
            return FiniteDifferenceModel(_builtin(spec[:-3]))
        path = Path(spec)
        if not path.is_file():
            raise FormatError(f"unknown model {spec!r}; builtins are {', '.join(BUILTIN_MODELS)} "
                              "or give a model JSON file")
        spec = _read_json(path)
    if not isinstance(spec, dict):
        raise FormatError("model spec must be a JSON object")
    if "builtin" in spec:
        name = spec["builtin"]
        if name not in BUILTIN_MODELS:
            raise FormatError(f"unknown builtin model {name!r}; choose from {', '.join(BUILTIN_MODELS)}")
        model = _builtin(name)
    elif "expr" in spec:
        for key in ("params", "factors"):
            if not isinstance(spec.get(key), list) or not spec[key]:
                raise FormatError(f"expression model needs a non-empty {key!r} list")
        model = ExprModel(spec["expr"], spec["params"], spec["factors"], spec.get("name", "expr"))
    else:
        raise FormatError("model spec needs a 'builtin' or an 'expr' key")
    gradient = spec.get("gradient", "analytic")
    if gradient == "fd":
        return FiniteDifferenceModel(model)
    if gradient != "analytic":
        raise FormatError(f"gradient must be 'analytic' or 'fd', got {gradient!r}")
    return model


def _read_json(path: Path):
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    except OSError as exc:
        raise FormatError(f"{path}: {exc.strerror}") from None


def _floats(values, what: str) -> list[float]:
    try:
        out = [float(v) for v in values]
    except (TypeError, ValueError):
        raise FormatError(f"{what}: expected numbers, got {values!r}") from None
    if not all(math.isfinite(v) for v in out):
        raise FormatError(f"{what}: values must be finite")
    return out


def parse_vector(arg, what: str = "vector") -> list[float]:
    """Numbers from a list, a comma-separated string, or a JSON file.

    A JSON file holds a list or an object with a ``theta``, ``values`` or
    ``prior`` list.
    """
    if isinstance(arg, (list, tuple, np.ndarray)):
        return _floats(arg, what)
    if isinstance(arg, str) and Path(arg).is_file():
        data = _read_json(Path(arg))
        if isinstance(data, dict):
            key = next((k for k in ("theta", "values", "prior") if k in data), None)
            if key is None:
                raise FormatError(f"{arg}: expected a list or an object with a 'theta' list")
            data = data[key]
        return _floats(data if isinstance(data, list) else [data], what)
    if isinstance(arg, str):
        return _floats([t for t in arg.split(",") if t.strip()], what)
    raise FormatError(f"{what}: cannot read {arg!r}")


def parse_prior(arg, model: Model | None = None) -> np.ndarray:
    theta = np.array(parse_vector(arg, "prior"))
    if model is not None and theta.size != model.p:
        raise FormatError(f"prior has {theta.size} values, model {model.name} has {model.p} parameters")
    return theta


def parse_levels(arg, what: str = "levels") -> list[list[float]]:
    """Per-factor level lists from nested lists or ``"a,b,c;d,e;..."``."""
    if isinstance(arg, str):
        groups = [g for g in arg.split(";") if g.strip()]
        return [parse_vector(g, what) for g in groups]
    if isinstance(arg, (list, tuple)) and all(isinstance(g, (list, tuple)) for g in arg):
        return [_floats(g, what) for g in arg]
    raise FormatError(f"{what}: expected one list of levels per factor")


def parse_region(arg, closest=None) -> DesignRegion:
    """Region from ``"R=1.5:6,C=1:4"``, a JSON file, or a dict with a ``factors`` list."""
    if isinstance(arg, str) and Path(arg).is_file():
        arg = _read_json(Path(arg))
    try:
        if isinstance(arg, str):
            factors = []
            for item in (t for t in arg.split(",") if t.strip()):
                name, rng = item.split("=")
                lo, hi = rng.split(":")
                factors.append(Factor(name.strip(), float(lo), float(hi)))
            region = DesignRegion(tuple(factors))
        elif isinstance(arg, dict) and isinstance(arg.get("factors"), list):
            region = DesignRegion(tuple(
                Factor(str(f["name"]), float(f["lo"]), float(f["hi"]),
                       None if f.get("closest") is None else float(f["closest"]))
                for f in arg["factors"]))
        else:
            raise FormatError(f"region: cannot read {arg!r}")
    except (KeyError, ValueError, TypeError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"region: {exc}") from None
    if closest is not None:
        region = region.with_closest(parse_vector(closest, "closest"))
    return region


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def design_to_csv(design: Design) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(design.region.names)
    for row in design.rows:
        w.writerow([repr(float(u)) for u in row])
    return buf.getvalue()


def write_design_csv(path, design: Design) -> None:
    Path(path).write_text(design_to_csv(design))


def _read_rows(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FormatError(f"{path}: {exc.strerror}") from None
    rows = [r for r in csv.reader(_io.StringIO(text))]
    rows = [r for r in rows if any(c.strip() for c in r)]
    if not rows:
        raise FormatError(f"{path}: empty file")
    return [c.strip() for c in rows[0]], rows[1:]


def read_design_csv(path, region: DesignRegion | None = None, model: Model | None = None) -> Design:
    """Read a design; columns are matched to the region (or model) factors by name."""
    header, body = _read_rows(path)
    names = region.names if region is not None else (model.factors if model is not None else tuple(header))
    missing = [n for n in names if n not in header]
    if missing:
        raise FormatError(f"{path}: line 1: missing factor column(s) {', '.join(missing)}")
    cols = [header.index(n) for n in names]
    data = []
    for lineno, r in enumerate(body, start=2):
        try:
            data.append([float(r[c]) for c in cols])
        except (ValueError, IndexError):
            raise FormatError(f"{path}: line {lineno}: cannot read a number in {r!r}") from None
    if not data:
        raise FormatError(f"{path}: no design runs")
    arr = np.array(data)
    if not np.all(np.isfinite(arr)):
        raise FormatError(f"{path}: non-finite level")
    if region is None:
        lo, hi = arr.min(axis=0), arr.max(axis=0)
        pad = np.where(hi > lo, 0.0, 0.5 * np.maximum(np.abs(lo), 1.0))
        region = DesignRegion(tuple(Factor(n, float(a - e), float(b + e)) for n, a, b, e in zip(names, lo, hi, pad)))
    try:
        return Design(arr, region)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def read_data_csv(path, factors, response: str | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Factor columns plus one response column; an empty response is NaN."""
    header, body = _read_rows(path)
    missing = [n for n in factors if n not in header]
    if missing:
        raise FormatError(f"{path}: line 1: missing factor column(s) {', '.join(missing)}")
    if response is None:
        others = [h for h in header if h not in factors]
        if len(others) != 1:
            raise FormatError(f"{path}: line 1: expected exactly one response column, found {others}")
        response = others[0]
    if response not in header:
        raise FormatError(f"{path}: line 1: no response column {response!r}")
    cols = [header.index(n) for n in factors]
    rc = header.index(response)
    X, y = [], []
    for lineno, r in enumerate(body, start=2):
        try:
            X.append([float(r[c]) for c in cols])
            cell = r[rc].strip() if rc < len(r) else ""
            y.append(float(cell) if cell else math.nan)
        except (ValueError, IndexError):
            raise FormatError(f"{path}: line {lineno}: cannot read a number in {r!r}") from None
    if not X:
        raise FormatError(f"{path}: no data rows")
    return np.array(X), np.array(y)


# ---------------------------------------------------------------------------
# run specifications
# ---------------------------------------------------------------------------


@dataclass
class RunSpec:
    """Everything a search or multiphase run needs, as read from JSON.

    ``extra_starts`` is a list of points; ``extra_start_levels`` is an
    alternative given as per-factor levels whose product is used.
    """

    model: Any = None
    prior: Any = None
    region: Any = None
    n: int | None = None
    algorithm: str = "discrete-pea"
    levels: Any = None
    candidates: Any = None
    closest: Any = None
    extra_starts: Any = None
    extra_start_levels: Any = None
    tries: int = 100
    critical: float = 1.0001
    seed: int = 0
    max_iterations: int = 30
    threads: int = 1
    phase1_tries: int = 30
    phase1_critical: float = 1.1
    phase2: str = "pea"
    command: str | None = None
    description: str | None = None

    def update(self, **overrides) -> "RunSpec":
        for k, v in overrides.items():
            if v is not None:
                setattr(self, k, v)
        return self


def load_runspec(path) -> RunSpec:
    data = _read_json(Path(path))
    if not isinstance(data, dict):
        raise FormatError(f"{path}: a run spec must be a JSON object")
    known = {f.name for f in fields(RunSpec)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise FormatError(f"{path}: unknown run-spec key(s) {', '.join(unknown)}")
    return RunSpec(**data)
