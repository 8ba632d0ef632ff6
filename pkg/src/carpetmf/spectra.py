"""Multifractal spectra via concave conjugation, and empirical L^q spectra.

The parametric Legendre transform of a concave pressure curve f produces the
spectrum points ``(alpha(q), q * alpha(q) - f(q))`` with ``alpha = f'`` taken
by grid differentiation.  A direct infimum evaluation of
``f*(alpha) = inf_q (alpha q - f(q))`` over the same grid cross-checks every
point, and the double transform measures how far the curve is from its own
concave envelope (the involution defect).

Dimensions may come out negative (level sets that are empty for the measure);
those points are flagged rather than clipped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .gibbs import ball_mass
from .numerics import (
    NEG_INF,
    chunked_logsumexp,
    concavity_defect,
    grid_derivative,
    lse,
    part_from_array,
    scaled_powers,
)
from .pressure import CONCAVITY_RTOL, PressureCurve, log_total_mass
from .symbolic import (
    DEFAULT_ENUMERATION_CAP,
    CapExceededError,
    CellSystem,
    depth_map,
    digits_of_indices,
    row_word_count,
    row_words_range,
)
from .weights import CylinderWeight, row_sum_log_any

FLAG_OK = "ok"
FLAG_EMPTY = "empty"
FLAG_BOUNDARY = "boundary"

SOURCE_BIRKHOFF_SYMBOLIC = "birkhoffSymbolic"
SOURCE_BIRKHOFF_CARPET = "birkhoffCarpet"
SOURCE_GIBBS_SYMBOLIC = "gibbsSymbolic"


@dataclass(frozen=True)
class Spectrum:
    """Parametric spectrum points with per-point validity flags.

    ``alpha`` holds Birkhoff/local-dimension levels; for the carpet-mapped
    spectrum it holds the carpet levels ``-alpha * log r2`` instead (the
    ``source_kind`` says which).  ``infimum_defect`` is the worst disagreement
    between the parametric dimensions and the direct infimum evaluation on
    the same grid; ``level_tolerance`` is the derivative error scale used for
    boundary flagging.
    """

    source_kind: str
    q: np.ndarray
    alpha: np.ndarray
    dimension: np.ndarray
    flags: tuple[str, ...]
    infimum_defect: float
    level_tolerance: float


def _legendre_arrays(q: np.ndarray, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    alpha = grid_derivative(q, f)
    dimension = q * alpha - f
    return alpha, dimension


def _direct_infimum(q: np.ndarray, f: np.ndarray, levels: np.ndarray) -> np.ndarray:
    """``inf_q (level * q - f(q))`` evaluated on the grid, per level."""
    return np.min(levels[:, None] * q[None, :] - f[None, :], axis=1)


def _level_tolerance(q: np.ndarray, f: np.ndarray) -> float:
    """Derivative error scale: (max grid step)^2 times the peak curvature."""
    d1 = grid_derivative(q, f)
    curvature = float(np.max(np.abs(grid_derivative(q, d1))))
    step = float(np.max(np.diff(q)))
    return max(float(np.finfo(float).eps), step * step * curvature)


def legendre(curve: PressureCurve, source_kind: str | None = None) -> Spectrum:
    """Concave conjugate of a pressure curve, in parametric form.

    Every grid point yields ``(alpha, dim)``; points with ``dim`` below
    ``-tol`` are flagged ``empty`` (no mass at that level), points with
    ``|dim| <= tol`` are flagged ``boundary``.
    """
    if source_kind is None:
        source_kind = (
            SOURCE_BIRKHOFF_SYMBOLIC if curve.kind == "T" else SOURCE_GIBBS_SYMBOLIC
        )
    q = curve.q_grid
    f = curve.extrapolated
    if q.size >= 3:
        scale = max(1.0, float(np.max(np.abs(f))))
        dq = float(np.min(np.diff(q)))
        defect = concavity_defect(q, f)
        if defect > CONCAVITY_RTOL * scale / dq:
            raise ValueError(
                f"conjugating a non-concave curve (slope defect {defect:.3e})"
            )
    alpha, dimension = _legendre_arrays(q, f)
    tol = _level_tolerance(q, f)
    direct = _direct_infimum(q, f, alpha)
    defect = float(np.max(np.abs(direct - dimension)))
    flags = tuple(
        FLAG_EMPTY if d < -tol else (FLAG_BOUNDARY if abs(d) <= tol else FLAG_OK)
        for d in dimension
    )
    return Spectrum(
        source_kind=source_kind,
        q=q.copy(),
        alpha=alpha,
        dimension=dimension,
        flags=flags,
        infimum_defect=defect,
        level_tolerance=tol,
    )


def legendre_involution_check(curve: PressureCurve) -> float:
    """Defect ``max_grid |f**(q) - f(q)|`` of the double concave conjugate.

    The conjugate is represented by its parametric samples; the second
    transform is the lower envelope of the tangent lines they induce.  For a
    genuinely concave curve this vanishes up to derivative error.
    """
    q = curve.q_grid
    f = curve.extrapolated
    alpha, dimension = _legendre_arrays(q, f)
    # f**(q) = inf_alpha (q * alpha - f*(alpha)) over the sampled levels.
    double = np.min(q[:, None] * alpha[None, :] - dimension[None, :], axis=1)
    return float(np.max(np.abs(double - f)))


def birkhoff_spectrum_carpet(curve: PressureCurve, system: CellSystem) -> Spectrum:
    """Map the symbolic Birkhoff spectrum onto carpet-level coordinates.

    Each parametric point ``(alpha, dim)`` becomes ``(-alpha * log r2, dim)``;
    dimensions and flags are carried over bit-exactly.
    """
    if curve.kind != "T":
        raise ValueError("the carpet Birkhoff spectrum is built from a 'T' curve")
    base = legendre(curve, source_kind=SOURCE_BIRKHOFF_SYMBOLIC)
    return replace(
        base,
        source_kind=SOURCE_BIRKHOFF_CARPET,
        alpha=-base.alpha * math.log(system.r2),
    )


def support_dimension(curve: PressureCurve) -> float:
    """Box dimension of the support: ``-f(0)`` for either pressure kind."""
    return -curve.value_at(0.0)


def mcmullen_dimension(system: CellSystem) -> float:
    """``log_{r1} sum_{a1} N(a1)^s`` with N = row-fiber sizes (q = 0 value)."""
    sizes = np.array([len(system.row_fiber(a1)) for a1 in system.row_alphabet], float)
    return math.log(float(np.sum(sizes**system.s))) / math.log(system.r1)


# ---------------------------------------------------------------------------
# Empirical L^q spectrum of the approximate Gibbs measure
# ---------------------------------------------------------------------------


def lq_spectrum_empirical(
    psi: CylinderWeight,
    q: float,
    n: int,
    method: str = "auto",
    workers: int = 1,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> float:
    """``tau_n(q) = -(1/n) log_{r2} sum_B mu_n(B)^q`` over depth-n balls.

    ``mu_n`` assigns a ball (w1 x w2, column extension u) the product of the
    normalized cylinder weight of ``w1 x w2`` and the row-marginal fraction of
    ``u``.  With ``method='auto'`` the ball sum factorizes exactly into two
    column-word reductions; ``method='enumerate'`` walks every ball and calls
    :func:`carpetmf.gibbs.ball_mass` — the slow independent oracle.
    """
    if n < 1:
        raise ValueError("depth must be >= 1")
    system = psi.system
    g = depth_map(system, n)
    m = g - n
    if method == "enumerate":
        return _lq_enumerate(psi, q, n, g, cap)
    # sum_B mu(B)^q = [sum_{w1} I_q(w1)] * [sum_u (I_1(u)/Z_m)^q]
    def main_terms(words: np.ndarray) -> np.ndarray:
        return row_sum_log_any(psi, words, q, method=method, cap=cap)

    total = row_word_count(system, n)
    if total > cap:
        raise CapExceededError(f"{total} column words at depth {n} exceed cap {cap}")

    def main_partial(start: int, stop: int):
        return part_from_array(main_terms(row_words_range(system, n, start, stop)))

    log_sum = chunked_logsumexp(main_partial, total, workers=workers)
    if m > 0:
        ext_total = row_word_count(system, m)
        if ext_total > cap:
            raise CapExceededError(
                f"{ext_total} column extensions at depth {m} exceed cap {cap}"
            )

        def ext_partial(start: int, stop: int):
            words = row_words_range(system, m, start, stop)
            return part_from_array(
                scaled_powers(q, row_sum_log_any(psi, words, 1.0, method=method, cap=cap))
            )

        log_ext = chunked_logsumexp(ext_partial, ext_total, workers=workers)
        log_z = log_total_mass(psi, m, workers=workers, method=method, cap=cap)
        log_sum += log_ext - q * log_z
    if log_sum == NEG_INF:
        raise ValueError("measure charges no ball at this depth")
    return -log_sum / (n * math.log(system.r2))


def _lq_enumerate(psi: CylinderWeight, q: float, n: int, g: int, cap: int) -> float:
    """Literal loop over the depth-n ball family (oracle path, small n only)."""
    system = psi.system
    n_balls = row_word_count(system, g) * system.r2**n
    if n_balls > cap:
        raise CapExceededError(f"{n_balls} balls at depth {n} exceed cap {cap}")
    columns = digits_of_indices(np.arange(row_word_count(system, g)), system.r1, g)
    rows = digits_of_indices(np.arange(system.r2**n), system.r2, n)
    log_terms = []
    for cw in columns:
        for rw in rows:
            lm = ball_mass(psi, cw, rw, cap=cap)
            log_terms.append(scaled_powers(q, np.array(lm)))
    total = float(lse(np.array(log_terms)))
    if total == NEG_INF:
        raise ValueError("measure charges no ball at this depth")
    return -total / (n * math.log(system.r2))
