"""Finite-depth pressure functionals over column words.

Two concave pressure functions are computed from row-fiber power sums
``I_q(w1) = sum_{w2} psi(w1 x w2)^q`` (with the convention ``0^q = 0`` — rows
without weight drop out for every real q):

* ``T_n(q)  = -(1/n) log_{r1} sum_{w1} I_q(w1)^s``
* ``beta_n(q) = -(1/n) log_{r1} sum_{w1} I_1(w1)^{q(1-s)} I_q(w1)^s``

where ``s = log r1 / log r2``.  Depth-1 weights admit exact closed forms.
Finite depths converge at rate O(1/n); :func:`extrapolate_pressure` removes
the leading term with a two-point fit and reports a superadditivity-defect
error proxy.  All outer sums run through the deterministic chunked reduction
in :mod:`carpetmf.numerics`, so worker counts never change results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .numerics import (
    NEG_INF,
    chunked_logsumexp,
    concavity_defect,
    grid_derivative,
    lse,
    part_from_array,
    scaled_powers,
)
from .symbolic import (
    DEFAULT_ENUMERATION_CAP,
    CapExceededError,
    CellSystem,
    admissible_word_count,
    admissible_words_range,
    row_word_count,
    row_words_range,
)
from .weights import CylinderWeight, row_sum_log_any

#: Relative tolerance for the concavity sanity check on pressure slices.
CONCAVITY_RTOL = 1e-9


def row_sum(
    psi: CylinderWeight,
    w1: Sequence[int],
    q: float,
    method: str = "auto",
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> float:
    """``log I_q(w1)`` for a single column word."""
    a1s = np.asarray(w1, dtype=np.int64).reshape(1, -1)
    return float(row_sum_log_any(psi, a1s, q, method=method, cap=cap)[0])


def row_sum_batch(
    psi: CylinderWeight,
    a1s: np.ndarray,
    q: float,
    method: str = "auto",
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> np.ndarray:
    """``log I_q`` for a ``(W, n)`` batch of column words."""
    return row_sum_log_any(psi, np.asarray(a1s, dtype=np.int64), q, method=method, cap=cap)


# ---------------------------------------------------------------------------
# Finite-depth functionals
# ---------------------------------------------------------------------------


def _column_reduction(psi, n, term_fn, workers, cap) -> float:
    """log-sum over all depth-n column words of exp(term_fn(words))."""
    total = row_word_count(psi.system, n)
    if total > cap:
        raise CapExceededError(f"{total} column words at depth {n} exceed cap {cap}")

    def partial(start: int, stop: int):
        words = row_words_range(psi.system, n, start, stop)
        return part_from_array(term_fn(words))

    return chunked_logsumexp(partial, total, workers=workers)


def log_total_mass(
    psi: CylinderWeight,
    m: int,
    workers: int = 1,
    method: str = "auto",
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> float:
    """``log sum_{|w| = m} psi(w)`` over all admissible product words."""
    if m < 0:
        raise ValueError("depth must be >= 0")
    if m == 0:
        return 0.0
    if method == "enumerate":
        total = admissible_word_count(psi.system, m)
        if total > cap:
            raise CapExceededError(f"{total} product words at depth {m} exceed cap {cap}")

        def partial(start: int, stop: int):
            a1s, a2s = admissible_words_range(psi.system, m, start, stop)
            return part_from_array(psi.log_weight_arrays(a1s, a2s))

        return chunked_logsumexp(partial, total, workers=workers)
    fast = psi.log_total_mass(m)
    if fast is not None:
        return fast
    return _column_reduction(
        psi, m, lambda w: row_sum_log_any(psi, w, 1.0, method=method, cap=cap), workers, cap
    )


def finite_pressure(
    psi: CylinderWeight,
    n: int,
    workers: int = 1,
    method: str = "auto",
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> float:
    """``(1/n) log sum_{|w| = n} psi(w)`` — the depth-n pressure estimate."""
    if n < 1:
        raise ValueError("pressure needs depth >= 1")
    value = log_total_mass(psi, n, workers=workers, method=method, cap=cap)
    if value == NEG_INF:
        raise ValueError("weight has empty support at this depth")
    return value / n


def finite_T(
    psi: CylinderWeight,
    q: float,
    n: int,
    workers: int = 1,
    method: str = "auto",
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> float:
    """Depth-n row-sum pressure ``T_n(q)``."""
    if n < 1:
        raise ValueError("finite_T needs depth >= 1")
    s = psi.system.s

    def terms(words: np.ndarray) -> np.ndarray:
        liq = row_sum_log_any(psi, words, q, method=method, cap=cap)
        return scaled_powers(s, liq)

    total = _column_reduction(psi, n, terms, workers, cap)
    if total == NEG_INF:
        raise ValueError("weight has empty support at this depth")
    return -total / (n * math.log(psi.system.r1))


def finite_beta(
    psi: CylinderWeight,
    q: float,
    n: int,
    workers: int = 1,
    method: str = "auto",
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> float:
    """Depth-n mixed-moment pressure ``beta_n(q)``."""
    if n < 1:
        raise ValueError("finite_beta needs depth >= 1")
    s = psi.system.s

    def terms(words: np.ndarray) -> np.ndarray:
        li1 = row_sum_log_any(psi, words, 1.0, method=method, cap=cap)
        liq = row_sum_log_any(psi, words, q, method=method, cap=cap)
        return scaled_powers(q * (1.0 - s), li1) + scaled_powers(s, liq)

    total = _column_reduction(psi, n, terms, workers, cap)
    if total == NEG_INF:
        raise ValueError("weight has empty support at this depth")
    return -total / (n * math.log(psi.system.r1))


# ---------------------------------------------------------------------------
# Depth-1 closed forms
# ---------------------------------------------------------------------------


def _require_depth1(psi: CylinderWeight) -> np.ndarray:
    table = psi.depth1_log_table()
    if table is None or psi.dependence_depth != 1:
        raise ValueError("closed forms require a depth-1 cell weight")
    return table


def closed_form_T(psi: CylinderWeight, q: float) -> float:
    """Exact ``T(q) = -log_{r1} sum_{a1} (sum_{a2} e^{q phi})^s`` (depth 1)."""
    table = _require_depth1(psi)
    s = psi.system.s
    fiber = lse(scaled_powers(q, table), axis=1)  # (r1,)
    total = lse(scaled_powers(s, fiber))
    return -float(total) / math.log(psi.system.r1)


def closed_form_beta(psi: CylinderWeight, q: float) -> float:
    """Exact ``beta(q) = -log_{r1} sum_{a1} (sum e^phi)^{q(1-s)} (sum e^{q phi})^s``."""
    table = _require_depth1(psi)
    s = psi.system.s
    fiber1 = lse(table, axis=1)
    fiberq = lse(scaled_powers(q, table), axis=1)
    total = lse(scaled_powers(q * (1.0 - s), fiber1) + scaled_powers(s, fiberq))
    return -float(total) / math.log(psi.system.r1)


# ---------------------------------------------------------------------------
# Extrapolation in depth
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Extrapolation:
    """Two-point depth extrapolation with a defect-based error proxy."""

    value: float
    error: float
    depths: tuple[int, int]


def extrapolate_pressure(values: Mapping[int, float]) -> Extrapolation:
    """Remove the O(1/n) term from depth-indexed pressure-like values.

    Writes ``v_n = v + c/n``; the two deepest entries give
    ``v = (n2 v_{n2} - n1 v_{n1}) / (n2 - n1)``.  The error proxy is the worst
    linear defect of ``S_n = n v_n`` over consecutive depth triples, divided
    by the deepest depth and floored at machine epsilon (so exactly linear
    data reports epsilon, never zero).
    """
    if len(values) < 2:
        raise ValueError("extrapolation needs at least two depths")
    depths = sorted(int(n) for n in values)
    n1, n2 = depths[-2], depths[-1]
    v1, v2 = float(values[n1]), float(values[n2])
    value = (n2 * v2 - n1 * v1) / (n2 - n1)
    worst = 0.0
    S = {n: n * float(values[n]) for n in depths}
    for a, b, c in zip(depths, depths[1:], depths[2:]):
        predicted = S[b] + (S[b] - S[a]) / (b - a) * (c - b)
        worst = max(worst, abs(S[c] - predicted))
    error = max(worst / n2, float(np.finfo(float).eps))
    return Extrapolation(value=value, error=error, depths=(n1, n2))


# ---------------------------------------------------------------------------
# Pressure curves over a q-grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PressureCurve:
    """A pressure function sampled on a q-grid at several depths.

    ``kind`` is one of ``"T"``, ``"beta"``; ``finite_values[n]`` aligns with
    ``q_grid``; ``extrapolated``/``error_estimate`` come from
    :func:`extrapolate_pressure` applied per grid point.
    """

    kind: str
    q_grid: np.ndarray
    finite_values: dict[int, np.ndarray]
    extrapolated: np.ndarray
    error_estimate: np.ndarray
    monotone_within_error: bool

    @property
    def depths(self) -> tuple[int, ...]:
        return tuple(sorted(self.finite_values))

    def _locate(self, q: float) -> int:
        idx = int(np.argmin(np.abs(self.q_grid - q)))
        if abs(self.q_grid[idx] - q) > 1e-12 * max(1.0, abs(q)):
            raise KeyError(f"q = {q} is not a grid point of this curve")
        return idx

    def value_at(self, q: float) -> float:
        return float(self.extrapolated[self._locate(q)])

    def finite_value_at(self, n: int, q: float) -> float:
        return float(self.finite_values[n][self._locate(q)])

    def derivative_at(self, q: float) -> float:
        derivs = grid_derivative(self.q_grid, self.extrapolated)
        return float(derivs[self._locate(q)])


def pressure_curve(
    psi: CylinderWeight,
    q_grid: np.ndarray,
    depth_schedule: Sequence[int],
    kind: str = "beta",
    workers: int = 1,
    method: str = "auto",
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> PressureCurve:
    """Evaluate ``T_n`` or ``beta_n`` over a grid, extrapolate, sanity-check.

    Depths beyond the enumeration cap are dropped; every retained slice must
    be concave up to ``CONCAVITY_RTOL`` (relative to its sup-norm), otherwise
    a ValueError flags the weight/grid combination.  The resulting curve also
    records whether the extrapolated values are nondecreasing within the
    summed error bands (expected for genuine pressure data at q >= 0 kinds;
    informational otherwise).
    """
    if kind not in ("T", "beta"):
        raise ValueError("curve kind must be 'T' or 'beta'")
    q_grid = np.unique(np.asarray(q_grid, dtype=float))
    if q_grid.size < 1:
        raise ValueError("q grid needs at least one point")
    fn = finite_T if kind == "T" else finite_beta
    feasible = [
        n
        for n in sorted(set(int(n) for n in depth_schedule))
        if n >= 1 and row_word_count(psi.system, n) <= cap
    ]
    if len(feasible) < 2:
        raise CapExceededError("need at least two feasible depths for extrapolation")
    finite_values: dict[int, np.ndarray] = {}
    for n in feasible:
        vals = np.array(
            [fn(psi, float(q), n, workers=workers, method=method, cap=cap) for q in q_grid]
        )
        if q_grid.size >= 3:
            scale = max(1.0, float(np.max(np.abs(vals))))
            dq = float(np.min(np.diff(q_grid)))
            defect = concavity_defect(q_grid, vals)
            if defect > CONCAVITY_RTOL * scale / dq:
                raise ValueError(
                    f"{kind}_{n} violates concavity (slope defect {defect:.3e})"
                )
        finite_values[n] = vals
    extrapolated = np.empty_like(q_grid)
    errors = np.empty_like(q_grid)
    for i in range(q_grid.size):
        ext = extrapolate_pressure({n: finite_values[n][i] for n in feasible})
        extrapolated[i] = ext.value
        errors[i] = ext.error
    band = errors[:-1] + errors[1:]
    scale = max(1.0, float(np.max(np.abs(extrapolated))))
    monotone = bool(
        np.all(np.diff(extrapolated) >= -(band + CONCAVITY_RTOL * scale))
    )
    return PressureCurve(
        kind=kind,
        q_grid=q_grid,
        finite_values=finite_values,
        extrapolated=extrapolated,
        error_estimate=errors,
        monotone_within_error=monotone,
    )
