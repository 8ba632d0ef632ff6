"""Almost-multiplicative cylinder weights, evaluated in log space.

A cylinder weight assigns every admissible product word a positive value (its
log is stored; ``-inf`` means the cylinder carries no weight).  Three
constructions are provided:

* :func:`make_constant_cell` — exponentials of Birkhoff sums of a potential
  that only sees a sliding window of ``depth`` cells (with separate truncated
  tables for words shorter than the window);
* :func:`make_matrix_cocycle` — norms of products of strictly positive
  matrices driven by the cell sequence, with the positive-cone norm
  ``|B| = 1^T B 1``;
* :func:`make_skew_product` — a column-word weight times a row-fiber
  conditional built from another cylinder weight.

Every weight exposes batched evaluation over digit-row arrays, and —
when its structure allows — fast row-fiber power sums
``I_q(w1) = sum_{w2} psi(w1 x w2)^q`` via transfer recursions, so the deep
regimes never enumerate the row alphabet.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .numerics import NEG_INF, lse, scaled_powers
from .symbolic import (
    DEFAULT_ENUMERATION_CAP,
    CapExceededError,
    CellSystem,
    ProductWord,
    admissible_word_count,
    admissible_words_range,
    digits_of_indices,
    pack_digits,
)

#: Largest transient table a transfer recursion may allocate.
MAX_TRANSFER_TABLE = 1 << 22


class CylinderWeight:
    """Interface for log-space cylinder weights over a :class:`CellSystem`."""

    system: CellSystem

    # -- evaluation ------------------------------------------------------

    def log_weight(self, word: ProductWord | Sequence[tuple[int, int]]) -> float:
        """Log weight of one product cylinder (0.0 for the empty word)."""
        if not isinstance(word, ProductWord):
            word = ProductWord.from_cells(tuple(word))
        if len(word) == 0:
            return 0.0
        a1s = np.array([word.w1], dtype=np.int64)
        a2s = np.array([word.w2], dtype=np.int64)
        return float(self.log_weight_arrays(a1s, a2s)[0])

    def log_weight_arrays(self, a1s: np.ndarray, a2s: np.ndarray) -> np.ndarray:
        """Vectorized log weights: ``(W, n)`` digit rows -> ``(W,)`` floats."""
        raise NotImplementedError

    # -- structure hooks (None = no fast structure) ----------------------

    @property
    def dependence_depth(self) -> int | None:
        """Window size when the weight is locally constant, else None."""
        return None

    def depth1_log_table(self) -> np.ndarray | None:
        """Exact ``(r1, r2)`` per-cell log table for depth-1 weights."""
        return None

    def row_sum_log_batch(self, a1s: np.ndarray, q: float) -> np.ndarray | None:
        """``log I_q`` for a batch of column words without enumerating rows.

        Returns None when the weight has no such structure; callers fall back
        to row enumeration.
        """
        return None

    def log_total_mass(self, m: int) -> float | None:
        """``log sum_{|w|=m} psi(w)`` when computable without row-word
        enumeration, else None."""
        return None


def _clip_indices(system: CellSystem, a1s: np.ndarray, a2s: np.ndarray):
    """Cell indices for digit rows plus a per-word validity mask."""
    a1s = np.asarray(a1s, dtype=np.int64)
    a2s = np.asarray(a2s, dtype=np.int64)
    in_range = (
        (a1s >= 0) & (a1s < system.r1) & (a2s >= 0) & (a2s < system.r2)
    )
    idx = system.cell_index[
        np.clip(a1s, 0, system.r1 - 1), np.clip(a2s, 0, system.r2 - 1)
    ]
    idx = np.where(in_range, idx, -1)
    valid = (idx >= 0).all(axis=1)
    return np.clip(idx, 0, None), valid


# ---------------------------------------------------------------------------
# Locally constant (finite-window Birkhoff) weights
# ---------------------------------------------------------------------------


class ConstantCellWeight(CylinderWeight):
    """``log psi(w) = sum_i phi(w_i .. w_{i+k-1})`` for a window potential phi.

    ``window_log`` has shape ``(n_cells,) * depth`` indexed by cell positions
    in ``system.allowed``.  Words shorter than the window use
    ``truncated_log[len - 1]`` (all-zero tables unless supplied).
    """

    def __init__(
        self,
        system: CellSystem,
        depth: int,
        window_log: np.ndarray,
        truncated_log: Sequence[np.ndarray] | None = None,
    ) -> None:
        if depth < 1:
            raise ValueError("window depth must be >= 1")
        nc = system.n_cells
        window_log = np.asarray(window_log, dtype=float)
        if window_log.shape != (nc,) * depth:
            raise ValueError(
                f"window table must have shape {(nc,) * depth}, got {window_log.shape}"
            )
        if not np.all(np.isfinite(window_log)):
            raise ValueError("window table must be finite on every admissible window")
        if truncated_log is None:
            truncated_log = [np.zeros((nc,) * j) for j in range(1, depth)]
        truncated_log = [np.asarray(t, dtype=float) for t in truncated_log]
        if len(truncated_log) != depth - 1:
            raise ValueError(f"need {depth - 1} truncated tables, got {len(truncated_log)}")
        for j, t in enumerate(truncated_log, start=1):
            if t.shape != (nc,) * j:
                raise ValueError(f"truncated table for length {j} has wrong shape {t.shape}")
            if not np.all(np.isfinite(t)):
                raise ValueError("truncated tables must be finite")
        self.system = system
        self.depth = depth
        self.window_log = window_log
        self.truncated_log = tuple(truncated_log)

    @property
    def dependence_depth(self) -> int:
        return self.depth

    # -- evaluation ------------------------------------------------------

    def _table_for_length(self, n: int) -> np.ndarray:
        return self.truncated_log[n - 1] if n < self.depth else self.window_log

    def log_weight_arrays(self, a1s: np.ndarray, a2s: np.ndarray) -> np.ndarray:
        W, n = np.asarray(a1s).shape
        if n == 0:
            return np.zeros(W)
        idx, valid = _clip_indices(self.system, a1s, a2s)
        k = self.depth
        if n < k:
            table = self.truncated_log[n - 1]
            vals = table[tuple(idx[:, j] for j in range(n))]
        else:
            windows = self.window_log[
                tuple(idx[:, j : j + n - k + 1] for j in range(k))
            ]  # (W, n - k + 1)
            vals = windows.sum(axis=1)
        return np.where(valid, vals, NEG_INF)

    def depth1_log_table(self) -> np.ndarray | None:
        if self.depth != 1:
            return None
        table = np.full((self.system.r1, self.system.r2), NEG_INF)
        cells = self.system.cells_array
        table[cells[:, 0], cells[:, 1]] = self.window_log
        return table

    # -- row-fiber transfer ----------------------------------------------

    def _window_qtable(self, q: float) -> np.ndarray:
        """``(r1**k, r2**k)`` table of q-scaled window values, -inf where the
        window leaves the allowed cells; rows/cols indexed by packed digits."""
        k = self.depth
        r1, r2 = self.system.r1, self.system.r2
        if (r1**k) * (r2**k) > MAX_TRANSFER_TABLE:
            raise CapExceededError("window transfer table too large")
        a1grid = digits_of_indices(np.arange(r1**k), r1, k)
        a2grid = digits_of_indices(np.arange(r2**k), r2, k)
        cidx = self.system.cell_index[a1grid[:, None, :], a2grid[None, :, :]]
        ok = (cidx >= 0).all(axis=2)
        ci = np.clip(cidx, 0, None)
        vals = self.window_log[tuple(ci[..., j] for j in range(k))]
        return np.where(ok, scaled_powers(q, vals), NEG_INF)

    def _row_sum_short(self, a1s: np.ndarray, q: float) -> np.ndarray:
        """Row sums for words shorter than the window (direct, small)."""
        W, n = a1s.shape
        r2 = self.system.r2
        w2 = digits_of_indices(np.arange(r2**n), r2, n)  # (R, n)
        cidx = self.system.cell_index[
            np.clip(a1s, 0, self.system.r1 - 1)[:, None, :], w2[None, :, :]
        ]
        in_range = ((a1s >= 0) & (a1s < self.system.r1)).all(axis=1)
        ok = (cidx >= 0).all(axis=2) & in_range[:, None]
        ci = np.clip(cidx, 0, None)
        table = self.truncated_log[n - 1]
        vals = table[tuple(ci[..., j] for j in range(n))]
        lw = np.where(ok, vals, NEG_INF)
        return lse(scaled_powers(q, lw), axis=1)

    def row_sum_log_batch(self, a1s: np.ndarray, q: float) -> np.ndarray:
        a1s = np.asarray(a1s, dtype=np.int64)
        W, n = a1s.shape
        if n == 0:
            return np.zeros(W)
        k = self.depth
        r2 = self.system.r2
        if n < k:
            return self._row_sum_short(a1s, q)
        if k == 1:
            table = self.depth1_log_table()
            letter_lse = lse(scaled_powers(q, table), axis=1)  # (r1,)
            letter_lse = np.append(letter_lse, NEG_INF)  # slot for bad digits
            pos = np.where((a1s >= 0) & (a1s < self.system.r1), a1s, self.system.r1)
            return letter_lse[pos].sum(axis=1)
        # State recursion over the last k-1 row digits, vectorized over words.
        table_q = self._window_qtable(q)  # (r1**k, r2**k)
        S = r2 ** (k - 1)
        a2states = digits_of_indices(np.arange(S), r2, k - 1)  # (S, k-1)
        cidx0 = self.system.cell_index[
            np.clip(a1s[:, : k - 1], 0, self.system.r1 - 1)[:, None, :],
            a2states[None, :, :],
        ]
        in_range = ((a1s >= 0) & (a1s < self.system.r1)).all(axis=1)
        ok0 = (cidx0 >= 0).all(axis=2) & in_range[:, None]
        lv = np.where(ok0, 0.0, NEG_INF)  # (W, S)
        drop = r2 ** (k - 2)
        safe_a1 = np.clip(a1s, 0, self.system.r1 - 1)  # bad digits already -inf via ok0
        windows = np.lib.stride_tricks.sliding_window_view(safe_a1, k, axis=1)
        a1pack = pack_digits(windows, self.system.r1)  # (W, n-k+1)
        for i in range(n - k + 1):
            M = table_q[a1pack[:, i]].reshape(W, S, r2)  # [word, state, new digit]
            x = (lv[:, :, None] + M).reshape(W, r2, drop, r2)
            lv = lse(x, axis=1).reshape(W, S)
        return lse(lv, axis=1)

    # -- totals over full product words ----------------------------------

    def log_total_mass(self, m: int) -> float:
        if m == 0:
            return 0.0
        k = self.depth
        nc = self.system.n_cells
        if m < k:
            return float(lse(self.truncated_log[m - 1]))
        if k == 1:
            return m * float(lse(self.window_log))
        flat = self.window_log.reshape(nc ** (k - 1), nc)  # [state, next cell]
        v = np.zeros(nc ** (k - 1))
        drop = nc ** (k - 2)
        for _ in range(m - k + 1):
            x = (v[:, None] + flat).reshape(nc, drop, nc)
            v = lse(x, axis=0).reshape(nc ** (k - 1))
        return float(lse(v))

    def backward_completion_tables(self, m: int) -> list[np.ndarray]:
        """``R[j][state]`` = log-sum of window weights over all length-``j``
        continuations of a full state (the last ``k-1`` cells, packed), for
        ``j = 0 .. m - k + 1``.  Used by exact path sampling."""
        k = self.depth
        if k < 2:
            raise ValueError("backward tables require window depth >= 2")
        if m < k - 1:
            raise ValueError("horizon shorter than one state")
        nc = self.system.n_cells
        flat = self.window_log.reshape(nc ** (k - 1), nc)  # [state, next cell]
        drop = nc ** (k - 2)
        tables = [np.zeros(nc ** (k - 1))]
        for _ in range(m - k + 1):
            prev = tables[-1]
            # R_j(s) = lse over c of window(s, c) + R_{j-1}(shift(s, c)) where
            # shift(s, c) = (s mod drop) * nc + c; write s = (h, t).
            contrib = flat.reshape(nc, drop, nc) + prev.reshape(drop, nc)[None, :, :]
            tables.append(lse(contrib, axis=2).reshape(nc ** (k - 1)))
        return tables


def make_constant_cell(
    system: CellSystem,
    depth: int,
    window_table: np.ndarray | Mapping[tuple, float],
    truncated_tables: Mapping[int, np.ndarray | Mapping[tuple, float]] | None = None,
) -> ConstantCellWeight:
    """Build a finite-window Birkhoff weight from a full window table.

    ``window_table`` is either an array of shape ``(n_cells,) * depth`` (cell
    order = ``system.allowed``) or a mapping from window tuples (tuples of
    ``(a1, a2)`` cells) to log values; a mapping must cover every admissible
    window.  ``truncated_tables`` optionally maps word lengths ``1..depth-1``
    to tables for short words (default: zero).
    """
    nc = system.n_cells
    window_log = _coerce_table(system, depth, window_table, "window table")
    trunc: list[np.ndarray] = []
    truncated_tables = dict(truncated_tables or {})
    for j in range(1, depth):
        if j in truncated_tables:
            trunc.append(_coerce_table(system, j, truncated_tables.pop(j), f"truncated[{j}]"))
        else:
            trunc.append(np.zeros((nc,) * j))
    if truncated_tables:
        raise ValueError(f"unexpected truncated table lengths: {sorted(truncated_tables)}")
    return ConstantCellWeight(system, depth, window_log, trunc)


def _coerce_table(system: CellSystem, depth: int, table, label: str) -> np.ndarray:
    nc = system.n_cells
    if isinstance(table, Mapping):
        out = np.full((nc,) * depth, np.nan)
        index = {cell: i for i, cell in enumerate(system.allowed)}
        for window, value in table.items():
            if len(window) != depth:
                raise ValueError(f"{label}: window {window} has wrong length")
            try:
                pos = tuple(index[tuple(c)] for c in window)
            except KeyError as exc:
                raise ValueError(f"{label}: window {window} uses a forbidden cell") from exc
            out[pos] = float(value)
        if np.any(np.isnan(out)):
            raise ValueError(f"{label}: missing entries for admissible windows")
        return out
    out = np.asarray(table, dtype=float)
    if out.shape == (nc**depth,):
        out = out.reshape((nc,) * depth)
    if out.shape != (nc,) * depth:
        raise ValueError(f"{label}: expected shape {(nc,) * depth}, got {out.shape}")
    return out


# ---------------------------------------------------------------------------
# Positive matrix cocycles
# ---------------------------------------------------------------------------


class MatrixCocycleWeight(CylinderWeight):
    """``psi(w) = 1^T M(w_n) ... M(w_1) 1`` for strictly positive matrices.

    Products are evaluated as scaled matrix-vector passes so a word of any
    length stays in range; only the log of the running normalizer is
    accumulated.
    """

    def __init__(self, system: CellSystem, dim: int, matrices: np.ndarray) -> None:
        matrices = np.asarray(matrices, dtype=float)
        if matrices.shape != (system.n_cells, dim, dim):
            raise ValueError(
                f"need one {dim}x{dim} matrix per allowed cell, got shape {matrices.shape}"
            )
        if not np.all(matrices > 0):
            raise ValueError("cocycle matrices must be strictly positive")
        self.system = system
        self.dim = dim
        self.matrices = matrices

    @property
    def dependence_depth(self) -> int | None:
        return 1 if self.dim == 1 else None

    def log_weight_arrays(self, a1s: np.ndarray, a2s: np.ndarray) -> np.ndarray:
        W, n = np.asarray(a1s).shape
        if n == 0:
            return np.zeros(W)
        idx, valid = _clip_indices(self.system, a1s, a2s)
        u = np.ones((W, self.dim))
        acc = np.zeros(W)
        for i in range(n):
            Mi = self.matrices[idx[:, i]]  # (W, d, d); first cell acts first
            u = np.einsum("wij,wj->wi", Mi, u)
            norm = u.sum(axis=1)
            acc += np.log(norm)
            u /= norm[:, None]
        return np.where(valid, acc, NEG_INF)

    def depth1_log_table(self) -> np.ndarray | None:
        if self.dim != 1:
            return None
        table = np.full((self.system.r1, self.system.r2), NEG_INF)
        cells = self.system.cells_array
        table[cells[:, 0], cells[:, 1]] = np.log(self.matrices[:, 0, 0])
        return table

    def row_sum_log_batch(self, a1s: np.ndarray, q: float) -> np.ndarray | None:
        if self.dim != 1:
            return None
        return _depth1_row_sums(self.system, self.depth1_log_table(), a1s, q)

    def log_total_mass(self, m: int) -> float | None:
        if self.dim != 1:
            return None
        if m == 0:
            return 0.0
        return m * float(lse(np.log(self.matrices[:, 0, 0])))


def make_matrix_cocycle(
    system: CellSystem, dim: int, matrices: np.ndarray | Mapping[tuple[int, int], np.ndarray]
) -> MatrixCocycleWeight:
    """Build a positive-cone cocycle weight from per-cell matrices."""
    if isinstance(matrices, Mapping):
        stack = []
        for cell in system.allowed:
            if cell not in matrices:
                raise ValueError(f"missing matrix for cell {cell}")
            stack.append(np.asarray(matrices[cell], dtype=float))
        matrices = np.stack(stack)
    return MatrixCocycleWeight(system, dim, np.asarray(matrices, dtype=float))


def _depth1_row_sums(
    system: CellSystem, table: np.ndarray, a1s: np.ndarray, q: float
) -> np.ndarray:
    letter_lse = lse(scaled_powers(q, table), axis=1)
    letter_lse = np.append(letter_lse, NEG_INF)
    a1s = np.asarray(a1s, dtype=np.int64)
    pos = np.where((a1s >= 0) & (a1s < system.r1), a1s, system.r1)
    return letter_lse[pos].sum(axis=1)


# ---------------------------------------------------------------------------
# Row weights (column-word factors for skew products)
# ---------------------------------------------------------------------------


class RowWeight:
    """Positive weight on column words alone."""

    def log_values(self, a1s: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def letter_log_table(self) -> np.ndarray | None:
        """Per-letter log factors when the weight is a product over letters."""
        return None


class UniformRowWeight(RowWeight):
    """``theta(w1) = r1^{-n}`` — the maximal-entropy column weight."""

    def __init__(self, r1: int) -> None:
        self.r1 = r1
        self._letter = math.log(1.0 / r1)

    def log_values(self, a1s: np.ndarray) -> np.ndarray:
        a1s = np.asarray(a1s)
        return np.full(a1s.shape[0], a1s.shape[1] * self._letter)

    def letter_log_table(self) -> np.ndarray:
        return np.full(self.r1, self._letter)


class LetterRowWeight(RowWeight):
    """Product of a per-letter table: ``theta(w1) = prod_i t[w1_i]``."""

    def __init__(self, r1: int, letter_log: np.ndarray) -> None:
        letter_log = np.asarray(letter_log, dtype=float)
        if letter_log.shape != (r1,):
            raise ValueError(f"need one value per column letter, got {letter_log.shape}")
        self.r1 = r1
        self.letter_log = letter_log

    def log_values(self, a1s: np.ndarray) -> np.ndarray:
        a1s = np.asarray(a1s, dtype=np.int64)
        padded = np.append(self.letter_log, NEG_INF)
        pos = np.where((a1s >= 0) & (a1s < self.r1), a1s, self.r1)
        return padded[pos].sum(axis=1)

    def letter_log_table(self) -> np.ndarray:
        return self.letter_log


class RowSumRowWeight(RowWeight):
    """``theta(w1) = I_q(w1)`` of another cylinder weight (default q = 1)."""

    def __init__(self, weight: CylinderWeight, q: float = 1.0) -> None:
        self.weight = weight
        self.q = q

    def log_values(self, a1s: np.ndarray) -> np.ndarray:
        return row_sum_log_any(self.weight, a1s, self.q)

    def letter_log_table(self) -> np.ndarray | None:
        table = self.weight.depth1_log_table()
        if table is None:
            return None
        # Depth-1 row sums factorize over letters exactly.
        return lse(scaled_powers(self.q, table), axis=1)


# ---------------------------------------------------------------------------
# Skew products
# ---------------------------------------------------------------------------


class SkewProductWeight(CylinderWeight):
    """``psi(w1 x w2) = theta1(w1) * rho(w1 x w2) / I_rho(w1)``.

    The row fibers carry the rho-conditional distribution while the column
    marginal is exactly ``theta1``, so ``I_{psi,1} = theta1``.
    """

    def __init__(self, rho: CylinderWeight, theta1: RowWeight) -> None:
        self.system = rho.system
        self.rho = rho
        self.theta1 = theta1

    def log_weight_arrays(self, a1s: np.ndarray, a2s: np.ndarray) -> np.ndarray:
        lr = self.rho.log_weight_arrays(a1s, a2s)
        lt = self.theta1.log_values(a1s)
        li = row_sum_log_any(self.rho, a1s, 1.0)
        with np.errstate(invalid="ignore"):
            out = lt + lr - li
        return np.where(np.isneginf(lr), NEG_INF, out)

    def row_sum_log_batch(self, a1s: np.ndarray, q: float) -> np.ndarray:
        lt = self.theta1.log_values(a1s)
        li1 = row_sum_log_any(self.rho, a1s, 1.0)
        liq = row_sum_log_any(self.rho, a1s, q)
        dead = np.isneginf(liq) | np.isneginf(lt)
        with np.errstate(invalid="ignore"):
            out = scaled_powers(q, lt) - scaled_powers(q, li1) + liq
        return np.where(dead, NEG_INF, out)

    def depth1_log_table(self) -> np.ndarray | None:
        rt = self.rho.depth1_log_table()
        tt = self.theta1.letter_log_table()
        if rt is None or tt is None:
            return None
        li1 = lse(rt, axis=1)  # (r1,)
        safe_li1 = np.where(np.isneginf(li1), 0.0, li1)
        with np.errstate(invalid="ignore"):
            table = tt[:, None] + rt - safe_li1[:, None]
        return np.where(np.isneginf(rt), NEG_INF, table)

    @property
    def dependence_depth(self) -> int | None:
        return 1 if self.depth1_log_table() is not None else None

    def log_total_mass(self, m: int) -> float | None:
        table = self.theta1.letter_log_table()
        if table is None:
            return None
        if m == 0:
            return 0.0
        # Total mass = sum over column words of theta1 (fibers sum to 1 where
        # rho charges the column word); restrict letters to charged fibers.
        rt = self.rho.depth1_log_table()
        if rt is None:
            return None
        charged = ~np.isneginf(lse(rt, axis=1))
        return m * float(lse(np.where(charged, table, NEG_INF)))


def make_skew_product(rho: CylinderWeight, theta1: RowWeight) -> SkewProductWeight:
    return SkewProductWeight(rho, theta1)


# ---------------------------------------------------------------------------
# Pressure-shift normalization
# ---------------------------------------------------------------------------


class ShiftedWeight(CylinderWeight):
    """``log psi_hat(w) = log psi(w) - len(w) * shift`` (Gibbs normalization)."""

    def __init__(self, base: CylinderWeight, shift: float) -> None:
        self.system = base.system
        self.base = base
        self.shift = float(shift)

    def log_weight_arrays(self, a1s: np.ndarray, a2s: np.ndarray) -> np.ndarray:
        n = np.asarray(a1s).shape[1]
        return self.base.log_weight_arrays(a1s, a2s) - n * self.shift

    @property
    def dependence_depth(self) -> int | None:
        return self.base.dependence_depth

    def depth1_log_table(self) -> np.ndarray | None:
        table = self.base.depth1_log_table()
        if table is None:
            return None
        return table - self.shift

    def row_sum_log_batch(self, a1s: np.ndarray, q: float) -> np.ndarray | None:
        inner = self.base.row_sum_log_batch(a1s, q)
        if inner is None:
            return None
        n = np.asarray(a1s).shape[1]
        return inner - n * q * self.shift

    def log_total_mass(self, m: int) -> float | None:
        inner = self.base.log_total_mass(m)
        if inner is None:
            return None
        return inner - m * self.shift


def normalize_to_gibbs(psi: CylinderWeight, pressure_estimate: float) -> ShiftedWeight:
    """Subtract ``n * pressure_estimate`` from log weights.

    Shifting an already-shifted weight merges the shifts, so normalizing by
    ``p`` and then by ``-p`` returns to bit-identical log weights.
    """
    if isinstance(psi, ShiftedWeight):
        return ShiftedWeight(psi.base, psi.shift + pressure_estimate)
    return ShiftedWeight(psi, pressure_estimate)


# ---------------------------------------------------------------------------
# Generic row sums and almost-multiplicativity estimation
# ---------------------------------------------------------------------------


def row_sum_log_any(
    weight: CylinderWeight,
    a1s: np.ndarray,
    q: float,
    method: str = "auto",
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> np.ndarray:
    """``log I_q`` for a batch of column words, preferring fast structure.

    ``method`` is one of ``auto`` (transfer when available, else enumerate),
    ``transfer`` (error if unavailable) or ``enumerate`` (force the oracle).
    """
    a1s = np.asarray(a1s, dtype=np.int64)
    if method not in ("auto", "transfer", "enumerate"):
        raise ValueError(f"unknown row-sum method {method!r}")
    if method in ("auto", "transfer"):
        fast = weight.row_sum_log_batch(a1s, q)
        if fast is not None:
            return fast
        if method == "transfer":
            raise ValueError("weight has no transfer structure for row sums")
    W, n = a1s.shape
    if n == 0:
        return np.zeros(W)
    r2 = weight.system.r2
    total = r2**n
    if total > cap:
        raise CapExceededError(f"row enumeration of {total} words exceeds cap {cap}")
    w2 = digits_of_indices(np.arange(total), r2, n)
    a1rep = np.repeat(a1s, total, axis=0)
    w2t = np.tile(w2, (W, 1))
    lw = weight.log_weight_arrays(a1rep, w2t).reshape(W, total)
    return lse(scaled_powers(q, lw), axis=1)


@dataclass(frozen=True)
class AmEstimate:
    """Scanned lower bound for the almost-multiplicativity constant log C."""

    log_c: float
    split: tuple[int, int]
    max_depth: int


def estimate_am_constant(
    psi: CylinderWeight, max_depth: int, cap: int = DEFAULT_ENUMERATION_CAP
) -> AmEstimate:
    """Max of ``|log psi(uv) - log psi(u) - log psi(v)|`` over admissible
    ``u, v`` with ``|u| + |v| <= max_depth`` (a certified lower bound for the
    almost-multiplicativity constant, reported with the split attaining it).
    """
    if max_depth < 2:
        raise ValueError("max_depth must be >= 2")
    system = psi.system
    nc = system.n_cells
    best = 0.0
    best_split = (1, 1)
    for nu in range(1, max_depth):
        for nv in range(1, max_depth - nu + 1):
            if nc ** (nu + nv) > cap:
                raise CapExceededError(
                    f"{nc ** (nu + nv)} word pairs at split ({nu}, {nv}) exceed cap {cap}"
                )
            a1u, a2u = _all_admissible(system, nu)
            a1v, a2v = _all_admissible(system, nv)
            lwu = psi.log_weight_arrays(a1u, a2u)
            lwv = psi.log_weight_arrays(a1v, a2v)
            Wu, Wv = a1u.shape[0], a1v.shape[0]
            a1c = np.concatenate(
                [np.repeat(a1u, Wv, axis=0), np.tile(a1v, (Wu, 1))], axis=1
            )
            a2c = np.concatenate(
                [np.repeat(a2u, Wv, axis=0), np.tile(a2v, (Wu, 1))], axis=1
            )
            lwc = psi.log_weight_arrays(a1c, a2c).reshape(Wu, Wv)
            with np.errstate(invalid="ignore"):
                defect = np.abs(lwc - (lwu[:, None] + lwv[None, :]))
            finite = (
                np.isfinite(lwc)
                & np.isfinite(lwu)[:, None]
                & np.isfinite(lwv)[None, :]
            )
            if np.any(finite):
                local = float(np.max(defect[finite]))
                if local > best:
                    best = local
                    best_split = (nu, nv)
    return AmEstimate(log_c=best, split=best_split, max_depth=max_depth)


def _all_admissible(system: CellSystem, n: int) -> tuple[np.ndarray, np.ndarray]:
    return admissible_words_range(system, n, 0, admissible_word_count(system, n))
