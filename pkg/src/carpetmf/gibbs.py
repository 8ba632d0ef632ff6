"""Auxiliary Gibbs-type weights, ball masses, and path sampling.

For a weight psi and a moment parameter q, two auxiliary weights tilt psi
toward the q-typical behavior; both have pressure zero when the supplied
level constant equals the corresponding extrapolated pressure value:

* variant ``psiQ``  (level constant from the ``beta`` curve):
  ``theta_q(w1) = r1^{n L} I_1(w1)^{q(1-s)} I_q(w1)^s`` and
  ``psi_q = theta_q psi^q / I_q`` — its row marginal is exactly ``theta_q``;
* variant ``psiTildeQ`` (level constant from the ``T`` curve):
  ``tilde-theta_q(w1) = r1^{n L} I_q(w1)^s`` and
  ``tilde-psi_q = tilde-theta_q psi^q / I_q``.

At q = 1 with the pressure of psi as level constant, ``psiQ`` reproduces the
normalized weight itself.  Sampling draws cell paths whose cylinder
probabilities are the exact weight conditionals (closed form for depth-1
weights, backward transfer tables for wider windows, enumeration otherwise),
with one counter-based RNG stream per sample index so runs are reproducible
for any worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .numerics import NEG_INF, lse, mean_and_stderr, run_chunked_arrays, scaled_powers
from .pressure import log_total_mass, row_sum
from .symbolic import (
    DEFAULT_ENUMERATION_CAP,
    CapExceededError,
    CellSystem,
    depth_map,
    digits_of_indices,
)
from .weights import (
    ConstantCellWeight,
    CylinderWeight,
    ShiftedWeight,
    row_sum_log_any,
)

VARIANT_PSI_Q = "psiQ"
VARIANT_PSI_TILDE_Q = "psiTildeQ"
VARIANTS = (VARIANT_PSI_Q, VARIANT_PSI_TILDE_Q)


class AuxiliaryWeight(CylinderWeight):
    """Moment-tilted weight ``theta(w1) * psi(w1 x w2)^q / I_q(w1)``."""

    def __init__(
        self,
        base: CylinderWeight,
        q: float,
        level_constant: float,
        variant: str,
    ) -> None:
        if variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        self.system = base.system
        self.base = base
        self.q = float(q)
        self.level_constant = float(level_constant)
        self.variant = variant
        self._delegate = self._build_depth1_delegate()

    # -- exact depth-1 reduction -----------------------------------------

    def _build_depth1_delegate(self) -> ConstantCellWeight | None:
        """For depth-1 bases the tilt is again a depth-1 cell weight."""
        table = self.base.depth1_log_table()
        if table is None or self.base.dependence_depth != 1:
            return None
        system = self.system
        s = system.s
        log_r1 = math.log(system.r1)
        l1 = lse(table, axis=1)  # (r1,)
        lq = lse(scaled_powers(self.q, table), axis=1)
        safe_l1 = np.where(np.isneginf(l1), 0.0, l1)
        safe_lq = np.where(np.isneginf(lq), 0.0, lq)
        with np.errstate(invalid="ignore"):
            if self.variant == VARIANT_PSI_Q:
                cell = (
                    self.level_constant * log_r1
                    + self.q * (1.0 - s) * safe_l1[:, None]
                    + (s - 1.0) * safe_lq[:, None]
                    + scaled_powers(self.q, table)
                )
            else:
                cell = (
                    self.level_constant * log_r1
                    + (s - 1.0) * safe_lq[:, None]
                    + scaled_powers(self.q, table)
                )
        cell = np.where(np.isneginf(table), NEG_INF, cell)
        cells = system.cells_array
        return ConstantCellWeight(system, 1, cell[cells[:, 0], cells[:, 1]])

    # -- weight interface --------------------------------------------------

    def theta_log_batch(self, a1s: np.ndarray) -> np.ndarray:
        """Row marginal ``log theta`` for a batch of column words."""
        a1s = np.asarray(a1s, dtype=np.int64)
        n = a1s.shape[1]
        s = self.system.s
        shift = n * self.level_constant * math.log(self.system.r1)
        liq = row_sum_log_any(self.base, a1s, self.q)
        if self.variant == VARIANT_PSI_Q:
            li1 = row_sum_log_any(self.base, a1s, 1.0)
            return shift + scaled_powers(self.q * (1.0 - s), li1) + scaled_powers(s, liq)
        return shift + scaled_powers(s, liq)

    def log_weight_arrays(self, a1s: np.ndarray, a2s: np.ndarray) -> np.ndarray:
        if self._delegate is not None:
            return self._delegate.log_weight_arrays(a1s, a2s)
        n = np.asarray(a1s).shape[1]
        if n == 0:
            return np.zeros(np.asarray(a1s).shape[0])
        lb = self.base.log_weight_arrays(a1s, a2s)
        lt = self.theta_log_batch(a1s)
        liq = row_sum_log_any(self.base, a1s, self.q)
        with np.errstate(invalid="ignore"):
            out = lt + scaled_powers(self.q, lb) - liq
        return np.where(np.isneginf(lb) | np.isneginf(lt), NEG_INF, out)

    @property
    def dependence_depth(self) -> int | None:
        return 1 if self._delegate is not None else None

    def depth1_log_table(self) -> np.ndarray | None:
        if self._delegate is None:
            return None
        return self._delegate.depth1_log_table()

    def row_sum_log_batch(self, a1s: np.ndarray, r: float) -> np.ndarray:
        """``I_r`` of the tilt: ``theta^r I_{qr} / I_q^r`` — a base reduction."""
        if self._delegate is not None:
            return self._delegate.row_sum_log_batch(a1s, r)
        lt = self.theta_log_batch(a1s)
        liq = row_sum_log_any(self.base, a1s, self.q)
        liqr = row_sum_log_any(self.base, a1s, self.q * r)
        dead = np.isneginf(liqr) | np.isneginf(lt)
        with np.errstate(invalid="ignore"):
            out = scaled_powers(r, lt) - scaled_powers(r, liq) + liqr
        return np.where(dead, NEG_INF, out)

    def log_total_mass(self, m: int) -> float | None:
        if self._delegate is not None:
            return self._delegate.log_total_mass(m)
        return None


def make_auxiliary(
    psi: CylinderWeight, q: float, level_constant: float, variant: str
) -> AuxiliaryWeight:
    """Tilt ``psi`` toward its q-typical rows/cells; see module docstring.

    ``level_constant`` should be the extrapolated ``beta(q)`` (variant
    ``psiQ``) or ``T(q)`` (variant ``psiTildeQ``) so the tilt has pressure
    zero; any float is accepted — the pressure then shifts accordingly.
    """
    return AuxiliaryWeight(psi, q, level_constant, variant)


# ---------------------------------------------------------------------------
# Ball masses
# ---------------------------------------------------------------------------


def ball_mass(
    psi: CylinderWeight,
    column_word: Sequence[int],
    row_word: Sequence[int],
    method: str = "auto",
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> float:
    """Log mass of the anisotropic ball given by a depth-n row word and a
    depth-g(n) column word.

    The mass multiplies the cylinder weight of the square part ``w1|n x w2``
    by the normalized row-marginal fraction of the column extension:
    ``I_1(u) / sum_{|u'| = g-n} I_1(u')``.
    """
    row_word = np.asarray(row_word, dtype=np.int64)
    column_word = np.asarray(column_word, dtype=np.int64)
    n = row_word.size
    g = depth_map(psi.system, n)
    if column_word.size != g:
        raise ValueError(f"column word must have depth g({n}) = {g}, got {column_word.size}")
    if n == 0:
        return 0.0
    lw = float(
        psi.log_weight_arrays(column_word[None, :n], row_word[None, :])[0]
    )
    if lw == NEG_INF:
        return NEG_INF
    m = g - n
    if m == 0:
        return lw
    lmar = row_sum(psi, column_word[n:], 1.0, method=method, cap=cap)
    if lmar == NEG_INF:
        return NEG_INF
    lz = log_total_mass(psi, m, method=method, cap=cap)
    return lw + lmar - lz


# ---------------------------------------------------------------------------
# Path sampling
# ---------------------------------------------------------------------------


def _rng_for_sample(master_seed: int, sample_index: int) -> np.random.Generator:
    """Counter-based stream: one generator per (seed, sample index)."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(sample_index,))
    return np.random.default_rng(ss)


def _draw_from_log(rng: np.random.Generator, log_probs: np.ndarray) -> int:
    peak = float(np.max(log_probs))
    if peak == NEG_INF:
        raise ValueError("no admissible continuation has positive weight")
    p = np.exp(log_probs - peak)
    p /= p.sum()
    cdf = np.cumsum(p)
    idx = int(np.searchsorted(cdf, rng.random(), side="right"))
    return min(idx, log_probs.size - 1)


def _unwrap_shift(weight: CylinderWeight) -> CylinderWeight:
    while isinstance(weight, ShiftedWeight):
        weight = weight.base
    return weight


def _draw_cells(
    weight: CylinderWeight, m: int, rng: np.random.Generator, cap: int
) -> np.ndarray:
    """Sample a length-m cell path with the exact cylinder conditionals
    ``P(c | u) = Z(uc) / Z(u)`` (Z = total weight of depth-m extensions)."""
    system = weight.system
    if m == 0:
        return np.empty((0, 2), dtype=np.int64)
    core = _unwrap_shift(weight)
    if isinstance(core, AuxiliaryWeight) and core._delegate is not None:
        core = core._delegate
    table = core.depth1_log_table()
    if table is not None and core.dependence_depth == 1:
        # i.i.d. cells: conditionals are the normalized cell weights.
        cells = system.cells_array
        logp = table[cells[:, 0], cells[:, 1]]
        peak = float(np.max(logp))
        p = np.exp(logp - peak)
        p /= p.sum()
        cdf = np.cumsum(p)
        draws = np.searchsorted(cdf, rng.random(m), side="right")
        draws = np.minimum(draws, system.n_cells - 1)
        return cells[draws]
    if isinstance(core, ConstantCellWeight) and m >= core.depth - 1:
        return _draw_cells_window(core, m, rng)
    return _draw_cells_enumerate(core, m, rng, cap)


def _draw_cells_window(
    weight: ConstantCellWeight, m: int, rng: np.random.Generator
) -> np.ndarray:
    """Backward-table sampling for window weights (depth k >= 2)."""
    system = weight.system
    k = weight.depth
    nc = system.n_cells
    tables = weight.backward_completion_tables(m)  # R[j], j = 0 .. m-k+1
    drop = nc ** (k - 2)
    flat = weight.window_log.reshape(nc ** (k - 1), nc)
    # The first k-1 cells carry no window of their own: sample the block
    # jointly from the total weight of its completions.
    state = _draw_from_log(rng, tables[m - k + 1])
    idx = list(digits_of_indices(np.array([state]), nc, k - 1)[0])
    for pos in range(k - 1, m):
        remaining = m - pos - 1
        cont = tables[remaining].reshape(drop, nc)[state % drop]
        c = _draw_from_log(rng, flat[state] + cont)
        idx.append(c)
        state = (state % drop) * nc + c
    return system.cells_array[np.array(idx, dtype=np.int64)]


def _draw_cells_enumerate(
    weight: CylinderWeight, m: int, rng: np.random.Generator, cap: int
) -> np.ndarray:
    """Conditional sampling by brute-force extension sums (small m only)."""
    system = weight.system
    nc = system.n_cells
    if nc**m > cap:
        raise CapExceededError(
            f"sampling this weight needs {nc**m} extension evaluations (> cap {cap})"
        )
    cells = system.cells_array
    prefix: list[int] = []
    for pos in range(m):
        rem = m - pos - 1
        count = nc**rem
        tails = digits_of_indices(np.arange(count), nc, rem)  # (count, rem)
        block = np.empty((nc * count, m - pos), dtype=np.int64)
        block[:, 0] = np.repeat(np.arange(nc), count)
        if rem:
            block[:, 1:] = np.tile(tails, (nc, 1))
        full = np.concatenate(
            [np.tile(np.array(prefix, dtype=np.int64), (nc * count, 1)), block], axis=1
        )
        a1s = cells[full, 0]
        a2s = cells[full, 1]
        lw = weight.log_weight_arrays(a1s, a2s).reshape(nc, count)
        c = _draw_from_log(rng, lse(lw, axis=1))
        prefix.append(c)
    return cells[np.array(prefix, dtype=np.int64)]


@dataclass(frozen=True)
class SamplePath:
    """One sampled cell path plus per-depth diagnostics.

    ``cells`` covers the requested depth; ``extra_columns`` extends the
    column digits to the sampling horizon (needed to form deep balls).
    ``log_ball_mass[j-1]`` is the mass of the depth-j ball around the path
    under the analyzed weight (NaN where the horizon is too short), and
    ``birkhoff`` tracks the running prefix log-weight for window weights.
    """

    cells: np.ndarray
    extra_columns: np.ndarray
    log_ball_mass: np.ndarray | None
    birkhoff: np.ndarray | None
    master_seed: int
    sample_index: int

    @property
    def depth(self) -> int:
        return self.cells.shape[0]


def sample_path(
    weight: CylinderWeight,
    depth: int,
    horizon: int | None = None,
    master_seed: int = 0,
    sample_index: int = 0,
    mass_weight: CylinderWeight | None = None,
    record_masses: bool = True,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> SamplePath:
    """Draw one path from ``weight``'s exact cylinder process.

    ``mass_weight`` (default: the tilt's base when ``weight`` is auxiliary,
    else ``weight`` itself) is the measure whose ball masses and Birkhoff sums
    are recorded along the path.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    horizon = depth if horizon is None else int(horizon)
    if horizon < depth:
        raise ValueError("horizon must be >= depth")
    if mass_weight is None:
        mass_weight = weight.base if isinstance(weight, AuxiliaryWeight) else weight
    rng = _rng_for_sample(master_seed, sample_index)
    cells = _draw_cells(weight, horizon, rng, cap)
    masses = None
    if record_masses:
        masses = np.full(depth, np.nan)
        for j in range(1, depth + 1):
            gj = depth_map(weight.system, j)
            if gj <= horizon:
                masses[j - 1] = ball_mass(
                    mass_weight, cells[:gj, 0], cells[:j, 1], cap=cap
                )
    birkhoff = None
    if isinstance(_unwrap_shift(mass_weight), ConstantCellWeight):
        birkhoff = np.array(
            [
                float(
                    mass_weight.log_weight_arrays(
                        cells[None, :j, 0], cells[None, :j, 1]
                    )[0]
                )
                for j in range(1, depth + 1)
            ]
        )
    return SamplePath(
        cells=cells[:depth].copy(),
        extra_columns=cells[depth:, 0].copy(),
        log_ball_mass=masses,
        birkhoff=birkhoff,
        master_seed=master_seed,
        sample_index=sample_index,
    )


# ---------------------------------------------------------------------------
# Monte Carlo local dimensions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class McEstimate:
    """Monte Carlo mean/stderr of a local-dimension statistic."""

    mean: float
    stderr: float
    n_samples: int
    depth: int
    q: float
    variant: str
    statistics: np.ndarray


def local_dimension_mc(
    psi: CylinderWeight,
    aux: AuxiliaryWeight,
    n_samples: int,
    depth: int,
    master_seed: int = 0,
    workers: int = 1,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> McEstimate:
    """Sample local dimensions of ``psi``'s measure under the tilt ``aux``.

    Variant ``psiQ`` draws paths from the tilt and evaluates
    ``log mu(B_n) / (-n log r2)`` with full anisotropic balls (the sampling
    horizon extends to g(n)); variant ``psiTildeQ`` evaluates the cylinder
    statistic ``log psi(w|n) / (-n log r2)`` at horizon n.  Sample index i
    always uses RNG stream i, so results are reproducible for any worker
    count.
    """
    if n_samples < 2:
        raise ValueError("need at least two samples")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    system = psi.system
    n = depth
    g = depth_map(system, n)
    use_ball = aux.variant == VARIANT_PSI_Q
    horizon = g if use_ball else n
    m = g - n
    denom = -n * math.log(system.r2)
    log_z = log_total_mass(psi, m, cap=cap) if (use_ball and m > 0) else 0.0

    def chunk_stats(lo: int, hi: int) -> np.ndarray:
        batch = np.stack(
            [
                _draw_cells(aux, horizon, _rng_for_sample(master_seed, i), cap)
                for i in range(lo, hi)
            ]
        )  # (B, horizon, 2)
        lw = psi.log_weight_arrays(batch[:, :n, 0], batch[:, :n, 1])
        if use_ball and m > 0:
            lmar = row_sum_log_any(psi, batch[:, n:g, 0], 1.0, cap=cap)
            lw = lw + lmar - log_z
        return lw / denom

    stats = run_chunked_arrays(chunk_stats, n_samples, workers=workers)
    mean, stderr = mean_and_stderr(stats)
    return McEstimate(
        mean=mean,
        stderr=stderr,
        n_samples=n_samples,
        depth=depth,
        q=aux.q,
        variant=aux.variant,
        statistics=stats,
    )
