"""Built-in reference systems, grids, and defaults.

The 2 x 4 five-cell system below is the desk-scale workhorse: its depth-1
probability weights admit closed forms for every quantity the package
computes, so it anchors the verification suite and serves as the default
experiment when no configuration file is given.
"""

from __future__ import annotations

import numpy as np

from .symbolic import CellSystem
from .weights import ConstantCellWeight, make_constant_cell

__all__ = [
    "DEFAULT_DEPTH_SCHEDULE",
    "DEFAULT_MASTER_SEED",
    "default_config",
    "default_q_grid",
    "random_depth2_weight",
    "reference_cell_masses",
    "reference_system",
    "reference_weight",
    "zero_potential_weight",
]

#: Depth schedule used for extrapolation when nothing else is requested.
DEFAULT_DEPTH_SCHEDULE: tuple[int, ...] = (4, 6, 8, 10, 12)

#: Master seed for sampling defaults (any fixed value works; this one is
#: the release date of the first frozen verification run).
DEFAULT_MASTER_SEED = 20260814

#: Allowed cells of the reference system: two occupied column letters with
#: fibers of size 2 and 3.
_REFERENCE_CELLS = ((0, 0), (0, 1), (1, 0), (1, 1), (1, 2))

#: Probability masses on the reference cells (sum to 1, so the depth-1
#: weight is exactly normalized).
_REFERENCE_MASSES = (0.2, 0.3, 0.1, 0.15, 0.25)


def reference_system() -> CellSystem:
    """The 2 x 4 system with fibers {0,1} over 0 and {0,1,2} over 1."""
    return CellSystem(r1=2, r2=4, allowed=_REFERENCE_CELLS)


def reference_cell_masses() -> dict[tuple[int, int], float]:
    """Cell -> probability mass for the reference weight."""
    return dict(zip(_REFERENCE_CELLS, _REFERENCE_MASSES))


def reference_weight() -> ConstantCellWeight:
    """Depth-1 probability weight on the reference system."""
    return make_constant_cell(reference_system(), 1, np.log(np.array(_REFERENCE_MASSES)))


def zero_potential_weight(system: CellSystem | None = None) -> ConstantCellWeight:
    """Counting weight (potential identically zero) on a cell system."""
    system = reference_system() if system is None else system
    return make_constant_cell(system, 1, np.zeros(system.n_cells))


def random_depth2_weight(
    seed: int = 7, spread: float = 0.5, system: CellSystem | None = None
) -> ConstantCellWeight:
    """Seeded random depth-2 window potential on a cell system.

    Window values are uniform on ``[-spread, spread]`` over all cell pairs;
    the depth-1 truncation table stays at zero.  Used wherever a genuinely
    non-factorizing weight is needed.
    """
    system = reference_system() if system is None else system
    rng = np.random.default_rng(seed)
    nc = system.n_cells
    window = rng.uniform(-spread, spread, size=(nc, nc))
    return make_constant_cell(system, 2, window)


def default_q_grid() -> np.ndarray:
    """81 points on [-10, 10] plus dyadic refinements near 0 and 1.

    The base step is 1/4 and the refinement offsets are dyadic, so every
    grid point is an exact binary float and unions deduplicate cleanly.
    """
    base = np.linspace(-10.0, 10.0, 81)
    offsets = np.array([0.03125, 0.0625, 0.125])
    refined = np.concatenate([c + sign * offsets for c in (0.0, 1.0) for sign in (-1, 1)])
    return np.unique(np.concatenate([base, refined]))


def default_config() -> dict:
    """Reference experiment as a plain config dictionary."""
    return {
        "cellSystem": {
            "r1": 2,
            "r2": 4,
            "allowed": [list(cell) for cell in _REFERENCE_CELLS],
        },
        "weight": {
            "kind": "constantCell",
            "depth": 1,
            "values": list(_REFERENCE_MASSES),
        },
        "grids": {
            "qGrid": {"start": -10.0, "stop": 10.0, "count": 81, "refine": [0.0, 1.0]},
            "depthSchedule": list(DEFAULT_DEPTH_SCHEDULE),
        },
        "sampling": {
            "nSamples": 400,
            "depth": 16,
            "masterSeed": DEFAULT_MASTER_SEED,
            "q": 1.0,
            "variant": "psiTildeQ",
        },
        "output": {"directory": "out", "formats": ["csv", "json"]},
    }
