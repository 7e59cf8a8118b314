"""Reference settings for the two worked experiments.

Example 1 is a continuous stirred reactor (factors R, C, T) described by
the mechanistic yield model; Example 2 is an enzymatic depolymerisation
(factors S, E, P) described by the hybrid model.  Standard designs are
stored exactly as printed, row order reading down each printed column
block.
"""
from __future__ import annotations

import itertools

import numpy as np

from .core import CandidateSet, Design, DesignRegion, PriorTheta

EXAMPLE1_REGION = DesignRegion.from_bounds(("R", "C", "T"), [(1.5, 6.0), (1.0, 4.0), (70.0, 90.0)])
EXAMPLE2_REGION = DesignRegion.from_bounds(("S", "E", "P"), [(2.5, 7.5), (0.625, 62.5), (200.0, 400.0)])

EXAMPLE1_PRIOR = PriorTheta([5.90, 1.15, 0.53, -0.01, 15475.0, 7489.0])
EXAMPLE2_PRIOR = PriorTheta([0.4340, 1.3140, -0.1059, -0.8224, 0.4105, -2.0633])

EXAMPLE1_LEVELS = ((1.5, 3.0, 6.0), (1.0, 2.0, 4.0), (70.0, 80.0, 90.0))
EXAMPLE2_LEVELS = ((2.5, 5.0, 7.5), (0.625, 6.25, 62.5), (200.0, 300.0, 400.0))

EXAMPLE1_CLOSEST = (0.1, 0.1, 1.0)
EXAMPLE2_CLOSEST = (0.01, 0.005, 0.1)

# multistart cube halfway between centre and edges of the Example 2 region
EXAMPLE2_EXTRA_START_LEVELS = ((3.75, 6.25), (1.9764, 19.764), (250.0, 350.0))


def example_candidates(example: int) -> CandidateSet:
    levels, region = {1: (EXAMPLE1_LEVELS, EXAMPLE1_REGION), 2: (EXAMPLE2_LEVELS, EXAMPLE2_REGION)}[example]
    return CandidateSet.from_levels(levels, region)


def example2_extra_starts() -> np.ndarray:
    return np.array(list(itertools.product(*EXAMPLE2_EXTRA_START_LEVELS)))


def _table(text: str, width: int = 3) -> np.ndarray:
    vals = [np.nan if tok == "_" else float(tok) for tok in text.split()]
    return np.array(vals).reshape(-1, width)


_FACE_CENTRED_1 = """
1.5 1 70   1.5 1 90   1.5 2 80   1.5 2 80   1.5 4 70   1.5 4 90
3 1 80     3 1 80     3 2 70     3 2 70     3 2 80     3 2 80
3 2 80     3 2 80     3 2 90     3 2 90     3 4 80     3 4 80
6 1 70     6 1 90     6 2 80     6 2 80     6 4 70     6 4 90
"""

_SPHERICAL_1 = """
1.5 2 80   1.5 2 80
1.8376 1.2251 72.9289   1.8376 1.2251 87.0711   1.8376 3.2651 72.9289   1.8376 3.2651 87.0711
3 1 80     3 1 80     3 2 70     3 2 70     3 2 80     3 2 80
3 2 80     3 2 80     3 2 90     3 2 90     3 4 80     3 4 80
4.8976 1.2251 72.9289   4.8976 1.2251 87.0711   4.8976 3.2651 72.9289   4.8976 3.2651 87.0711
6 2 80     6 2 80
"""

_BOX_BEHNKEN_1 = """
1.5 1 80   1.5 1 80   1.5 2 70   1.5 2 90   1.5 4 80   1.5 4 80
3 1 70     3 1 70     3 1 90     3 1 90     3 2 80     3 2 80
3 2 80     3 2 80     3 4 70     3 4 70     3 4 90     3 4 90
6 1 80     6 1 80     6 2 70     6 2 90     6 4 80     6 4 80
"""

# S E P and conversion xi (%); run 16 gave no valid response
_FACE_CENTRED_2 = """
5 6.25 300 73.6     5 6.25 200 81.6     5 62.5 300 76.0
5 6.25 300 69.4     5 6.25 300 73.6     5 0.625 300 50.5
2.5 62.5 400 95.2   7.5 6.25 300 77.3   5 6.25 400 69.0
7.5 0.625 200 43.3  2.5 0.625 200 62.8  5 6.25 300 74.0
7.5 62.5 400 82.7   2.5 6.25 300 90.0   2.5 0.625 400 55.2
7.5 0.625 400 _     7.5 62.5 200 87.0   2.5 62.5 200 96.0
"""

STANDARD_KINDS = ("face_centred_ccd", "spherical_ccd", "box_behnken")


def standard_design(kind: str, example: int) -> Design:
    """The printed benchmark designs: three 24-run designs for Example 1, the 18-run CCD for Example 2."""
    table = {
        ("face_centred_ccd", 1): _FACE_CENTRED_1,
        ("spherical_ccd", 1): _SPHERICAL_1,
        ("box_behnken", 1): _BOX_BEHNKEN_1,
    }
    if (kind, example) in table:
        return Design(_table(table[kind, example]), EXAMPLE1_REGION)
    if (kind, example) == ("face_centred_ccd", 2):
        return Design(_table(_FACE_CENTRED_2, 4)[:, :3], EXAMPLE2_REGION)
    raise ValueError(
        f"no standard design {kind!r} for example {example}; "
        f"example 1 supports {', '.join(STANDARD_KINDS)}, example 2 supports face_centred_ccd"
    )


def example2_reference_data() -> tuple[np.ndarray, np.ndarray]:
    """Factor settings and conversion responses of the 18-run CCD (NaN = missing)."""
    t = _table(_FACE_CENTRED_2, 4)
    return t[:, :3], t[:, 3]


def conversion_transform(xi):
    """xi -> xi / (100 - xi), the response scale of the hybrid model."""
    xi = np.asarray(xi, dtype=float)
    return xi / (100.0 - xi)
