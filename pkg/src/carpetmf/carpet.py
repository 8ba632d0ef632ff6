"""Geometric realization on the torus.

Cell paths project to points of the unit square through the base-``r1`` /
base-``r2`` digit expansions; depth-``n`` balls project onto an anisotropic
grid of ``r1**g(n) x r2**n`` almost-square cells.  This module renders the
measure on that grid, box-counts its moments, and evaluates the separation
predicates (P1, P2, P3) that gate the carpet upper bound.

Boundary convention: each symbolic ball's mass is assigned wholly to its
half-open grid cell; cell boundaries on the torus carry no mass here.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .numerics import NEG_INF, chunk_ranges, lse, scaled_powers
from .pressure import log_total_mass, row_sum
from .symbolic import (
    DEFAULT_ENUMERATION_CAP,
    CapExceededError,
    CellSystem,
    admissible_word_count,
    admissible_words_range,
    depth_map,
    digits_of_indices,
)
from .weights import CylinderWeight, row_sum_log_any

__all__ = [
    "CarpetRender",
    "P3Report",
    "birkhoff_average_on_carpet",
    "box_count_tau",
    "carpet_digits",
    "check_P1",
    "check_P2",
    "check_P3",
    "p3_scan",
    "project_numerators",
    "project_point",
    "render_measure",
    "write_grid_csv",
    "write_pgm16",
]


# ---------------------------------------------------------------------------
# Projection and exact digit readback
# ---------------------------------------------------------------------------


def _cells_of(path_or_cells) -> np.ndarray:
    cells = getattr(path_or_cells, "cells", path_or_cells)
    arr = np.asarray(cells, dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("expected a path or an (n, 2) sequence of cells")
    return arr


def project_numerators(
    system: CellSystem, path_or_cells, precision: int | None = None
) -> tuple[int, int, int]:
    """Exact truncated expansions as integer numerators.

    Returns ``(x_num, y_num, p)`` with ``x = x_num / r1**p`` and
    ``y = y_num / r2**p`` where ``p`` is the truncation depth.  Kept in
    arbitrary-precision integers so digits can be read back without loss.
    """
    cells = _cells_of(path_or_cells)
    p = cells.shape[0] if precision is None else int(precision)
    if p < 0 or p > cells.shape[0]:
        raise ValueError(f"precision must lie in [0, {cells.shape[0]}]")
    x_num = 0
    y_num = 0
    for a1, a2 in cells[:p]:
        x_num = x_num * system.r1 + int(a1)
        y_num = y_num * system.r2 + int(a2)
    return x_num, y_num, p


def project_point(
    system: CellSystem, path_or_cells, precision: int | None = None
) -> tuple[float, float]:
    """Point of ``[0, 1)^2`` under the digit-expansion projection.

    ``x = sum a1_k r1**-k``, ``y = sum a2_k r2**-k`` truncated at
    ``precision`` digits (default: the full path), so the truncation error
    is below ``r1**-precision`` and ``r2**-precision`` componentwise.
    """
    x_num, y_num, p = project_numerators(system, path_or_cells, precision)
    if p == 0:
        return 0.0, 0.0
    return x_num / system.r1**p, y_num / system.r2**p


def carpet_digits(
    system: CellSystem, x_num: int, y_num: int, precision: int, depth: int
) -> np.ndarray:
    """Read back the first ``depth`` digit pairs from exact numerators.

    Inverse of :func:`project_numerators`: digit ``k`` of ``x`` is
    ``floor(x * r1**k) mod r1``, evaluated in integer arithmetic so the
    round trip path -> point -> digits is lossless.
    """
    if depth > precision:
        raise ValueError("cannot read more digits than the stored precision")
    out = np.empty((depth, 2), dtype=np.int64)
    for k in range(1, depth + 1):
        out[k - 1, 0] = (x_num // system.r1 ** (precision - k)) % system.r1
        out[k - 1, 1] = (y_num // system.r2 ** (precision - k)) % system.r2
    return out


def birkhoff_average_on_carpet(
    psi: CylinderWeight, path_or_cells, steps: int | None = None
) -> float:
    """Birkhoff average of the weight's potential read off the projected point.

    The path is projected to the torus and its digits are recovered exactly
    from the numerators before evaluating the ergodic average, exercising the
    symbolic <-> geometric dictionary rather than reusing the input digits.
    For a depth-``k`` window potential the sum over ``steps`` shift steps is
    the log-weight of the first ``steps + k - 1`` recovered cells.
    """
    system = psi.system
    cells = _cells_of(path_or_cells)
    k = psi.dependence_depth or 1
    if steps is None:
        steps = cells.shape[0] - (k - 1)
    if steps < 1:
        raise ValueError("need at least one shift step")
    length = steps + k - 1
    if length > cells.shape[0]:
        raise ValueError(f"path too short: need {length} cells for {steps} steps")
    x_num, y_num, p = project_numerators(system, cells)
    recovered = carpet_digits(system, x_num, y_num, p, length)
    total = float(psi.log_weight_arrays(recovered[None, :, 0], recovered[None, :, 1])[0])
    return total / steps


# ---------------------------------------------------------------------------
# Measure rendering on the almost-square grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CarpetRender:
    """Log masses of the depth-``n`` balls on the projected grid.

    ``log_masses[column, row]`` is the log mass of the ball whose column
    cylinder projects to ``[column / r1**g, (column+1) / r1**g)`` and whose
    row cylinder projects to ``[row / r2**n, (row+1) / r2**n)``; empty cells
    hold ``-inf``.
    """

    system: CellSystem
    depth: int
    log_masses: np.ndarray

    @property
    def column_depth(self) -> int:
        return depth_map(self.system, self.depth)

    @property
    def column_count(self) -> int:
        return self.log_masses.shape[0]

    @property
    def row_count(self) -> int:
        return self.log_masses.shape[1]

    def total_log_mass(self) -> float:
        return lse(self.log_masses.ravel())


def _word_values(digits: np.ndarray, base: int) -> np.ndarray:
    """Integer value of each digit row (most significant digit first)."""
    n = digits.shape[1]
    weights = base ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return digits @ weights


def render_measure(
    psi: CylinderWeight,
    n: int,
    workers: int = 1,
    cap: int = DEFAULT_ENUMERATION_CAP,
    output_dir: str | Path | None = None,
    header_comments: Sequence[str] = (),
) -> CarpetRender:
    """Fill the depth-``n`` grid with ball masses of a normalized weight.

    Each grid cell receives ``log psi([w1] x [w2]) + log I_1(suffix) - log Z``
    -- exactly the per-ball mass surrogate used by the sampler, so grids and
    sampled masses agree cell for cell.  With ``output_dir`` set, a 16-bit
    graymap and a CSV of the charged cells are written alongside.
    """
    system = psi.system
    if n < 1:
        raise ValueError("depth must be >= 1")
    g = depth_map(system, n)
    m = g - n
    n_cols = system.r1**g
    n_rows = system.r2**n
    if n_cols * n_rows > cap:
        raise CapExceededError(
            f"grid r1**{g} x r2**{n} = {n_cols * n_rows} exceeds cap {cap}"
        )
    # Normalized log marginal of every column suffix (all r1**m digit words).
    if m == 0:
        suffix_marginals = np.zeros(1)
    else:
        suffix_words = digits_of_indices(
            np.arange(system.r1**m, dtype=np.int64), system.r1, m
        )
        suffix_marginals = psi.row_sum_log_batch(suffix_words, 1.0)
        if suffix_marginals is None:
            suffix_marginals = np.array(
                [row_sum_log_any(psi, word[None, :], 1.0, cap=cap)[0] for word in suffix_words]
            )
        suffix_marginals = suffix_marginals - log_total_mass(psi, m, cap=cap)

    total_words = admissible_word_count(system, n)
    grid = np.full((n_cols, n_rows), NEG_INF)
    n_suffix = suffix_marginals.size

    def fill_chunk(start: int, stop: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        a1s, a2s = admissible_words_range(system, n, start, stop)
        lw = psi.log_weight_arrays(a1s, a2s)
        base_cols = _word_values(a1s, system.r1) * n_suffix
        rows = _word_values(a2s, system.r2)
        block = lw[:, None] + suffix_marginals[None, :]
        return base_cols, rows, block

    ranges = chunk_ranges(total_words)
    if workers > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda r: fill_chunk(*r), ranges))
    else:
        results = [fill_chunk(start, stop) for start, stop in ranges]
    offsets = np.arange(n_suffix, dtype=np.int64)
    for base_cols, rows, block in results:
        grid[base_cols[:, None] + offsets[None, :], rows[:, None]] = block

    render = CarpetRender(system=system, depth=n, log_masses=grid)
    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_pgm16(render, out / f"render_n{n}.pgm", header_comments)
        write_grid_csv(render, out / f"render_n{n}.csv", header_comments)
    return render


def write_pgm16(
    render: CarpetRender, path: str | Path, comments: Sequence[str] = ()
) -> Path:
    """Write the grid as a binary 16-bit portable graymap.

    Empty cells map to gray 0; charged cells map affinely from
    ``[min finite, max finite]`` log mass onto ``[1, 65535]``.  The image
    origin is bottom-left (row index increases upward).
    """
    path = Path(path)
    grid = render.log_masses
    finite = np.isfinite(grid)
    gray = np.zeros(grid.shape, dtype=np.uint16)
    if finite.any():
        lo = float(grid[finite].min())
        hi = float(grid[finite].max())
        span = hi - lo
        if span > 0.0:
            scaled = 1.0 + (grid[finite] - lo) * (65534.0 / span)
        else:
            scaled = np.full(int(finite.sum()), 65535.0)
        gray[finite] = np.round(scaled).astype(np.uint16)
    # Image rows run top to bottom; grid rows index y upward.
    image = gray.T[::-1, :]
    height, width = image.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n")
        for line in comments:
            fh.write(f"# {line}\n".encode())
        fh.write(b"# origin: bottom-left; gray 0 = empty cell\n")
        fh.write(f"{width} {height}\n65535\n".encode())
        fh.write(image.astype(">u2").tobytes())
    return path


def write_grid_csv(
    render: CarpetRender, path: str | Path, comments: Sequence[str] = ()
) -> Path:
    """Write the charged grid cells as ``columnIndex,rowIndex,logMass``."""
    path = Path(path)
    cols, rows = np.nonzero(np.isfinite(render.log_masses))
    with open(path, "w", encoding="utf-8") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        fh.write(f"# grid {render.column_count} x {render.row_count}, depth {render.depth}\n")
        fh.write("columnIndex,rowIndex,logMass\n")
        for c, r in zip(cols, rows):
            fh.write(f"{c},{r},{float(render.log_masses[c, r])!r}\n")
    return path


def box_count_tau(render: CarpetRender, q_grid: Iterable[float]) -> np.ndarray:
    """Coarse moment scaling of the rendered grid.

    Returns ``-(1/n) log_{r2} sum mass**q`` over the charged cells for each
    ``q``, with the empty cells contributing nothing at every ``q`` (so
    ``q = 0`` counts charged cells).
    """
    grid = render.log_masses.ravel()
    charged = grid[np.isfinite(grid)]
    n = render.depth
    scale = n * np.log(render.system.r2)
    qs = np.asarray(tuple(q_grid), dtype=float)
    out = np.empty(qs.size)
    for i, q in enumerate(qs):
        if charged.size == 0:
            out[i] = np.inf
            continue
        out[i] = -lse(scaled_powers(float(q), charged)) / scale
    return out


# ---------------------------------------------------------------------------
# Separation predicates
# ---------------------------------------------------------------------------


def check_P1(system: CellSystem) -> bool:
    """Distinct occupied column letters differ by at least 2."""
    occupied = system.row_alphabet
    return all(b - a >= 2 for a, b in zip(occupied, occupied[1:]))


def check_P2(system: CellSystem) -> bool:
    """At least one of the boundary column letters 0, r1-1 is unoccupied."""
    occupied = set(system.row_alphabet)
    return 0 not in occupied or (system.r1 - 1) not in occupied


@dataclass(frozen=True)
class P3Report:
    """Finite-depth evidence for the boundary-row balance condition.

    ``holds`` is an indication, not a proof: it requires both boundary
    letters to be occupied, the per-depth defects (max over the probed
    ``q``) to be non-increasing along the schedule, and the terminal defect
    to sit below the tolerance.
    """

    holds: bool
    terminal_defect: float
    subset_holds: bool
    depths: tuple[int, ...]
    defects: tuple[float, ...]


def p3_scan(
    system: CellSystem,
    psi: CylinderWeight,
    q_set: Sequence[float] = (0.5, 1.0, 2.0),
    depth_schedule: Sequence[int] = (2, 4, 6, 8),
    tolerance: float = 1e-9,
    monotone_slack: float = 1e-12,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> P3Report:
    """Probe the P3 limit condition on constant boundary words.

    For each ``q > 0`` in ``q_set`` and depth ``n`` in the schedule, the
    defect is ``|log I_q(0^n) - log I_q((r1-1)^n)| / n``; the limit condition
    demands it to vanish.  Any empty boundary fiber leaves the defect
    infinite and the verdict negative.
    """
    if any(q <= 0 for q in q_set):
        raise ValueError("the P3 condition concerns q > 0 only")
    depths = tuple(int(n) for n in depth_schedule)
    if not depths or list(depths) != sorted(set(depths)):
        raise ValueError("depth schedule must be strictly increasing and nonempty")
    subset = 0 in system.row_alphabet and (system.r1 - 1) in system.row_alphabet
    per_q = np.empty((len(q_set), len(depths)))
    for j, n in enumerate(depths):
        zeros = np.zeros((1, n), dtype=np.int64)
        tops = np.full((1, n), system.r1 - 1, dtype=np.int64)
        for i, q in enumerate(q_set):
            left = row_sum(psi, zeros[0], float(q), cap=cap)
            right = row_sum(psi, tops[0], float(q), cap=cap)
            if left == NEG_INF or right == NEG_INF:
                per_q[i, j] = np.inf
            else:
                per_q[i, j] = abs(left - right) / n
    monotone = bool(np.all(per_q[:, 1:] <= per_q[:, :-1] + monotone_slack))
    terminal = float(per_q[:, -1].max())
    defects = tuple(float(v) for v in per_q.max(axis=0))
    holds = subset and monotone and terminal <= tolerance
    return P3Report(
        holds=holds,
        terminal_defect=terminal,
        subset_holds=subset,
        depths=depths,
        defects=defects,
    )


def check_P3(
    system: CellSystem,
    psi: CylinderWeight,
    q_set: Sequence[float] = (0.5, 1.0, 2.0),
    depth_schedule: Sequence[int] = (2, 4, 6, 8),
    tolerance: float = 1e-9,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> tuple[bool, float]:
    """Boolean indication plus terminal defect; see :func:`p3_scan`."""
    report = p3_scan(
        system, psi, q_set=q_set, depth_schedule=depth_schedule,
        tolerance=tolerance, cap=cap,
    )
    return report.holds, report.terminal_defect
