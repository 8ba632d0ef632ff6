"""Product symbolic spaces over two digit alphabets.

A *cell system* couples a coarse column alphabet ``{0..r1-1}`` with a finer
row alphabet ``{0..r2-1}`` (``2 <= r1 <= r2``) through a set of allowed cells.
Infinite words over the allowed cells project to a self-affine carpet; at
finite depth the natural metric balls are anisotropic: a ball of row depth
``n`` constrains the column word to the larger depth ``g(n)`` given by
:func:`depth_map`.

Enumeration helpers stream words in the lexicographic order of their digit
(or cell) sequences and refuse to start when the requested volume exceeds a
cap, so accidental combinatorial explosions fail fast.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

#: Largest number of items an enumeration stream may cover.
DEFAULT_ENUMERATION_CAP = 1 << 24


class CapExceededError(RuntimeError):
    """Requested enumeration or table is larger than the configured cap."""


@dataclass(frozen=True)
class CellSystem:
    """Base sizes ``r1 <= r2`` plus the allowed cells of the product alphabet.

    ``allowed`` is normalized to a sorted tuple of ``(a1, a2)`` pairs; all
    derived lookups (fibers, index grids) follow that order.
    """

    r1: int
    r2: int
    allowed: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        if not (2 <= self.r1 <= self.r2):
            raise ValueError("cell system needs 2 <= r1 <= r2")
        cells = tuple(sorted({(int(a1), int(a2)) for a1, a2 in self.allowed}))
        if len(cells) < 2:
            raise ValueError("cell system needs at least two allowed cells")
        for a1, a2 in cells:
            if not (0 <= a1 < self.r1 and 0 <= a2 < self.r2):
                raise ValueError(f"cell {(a1, a2)} outside digit ranges")
        object.__setattr__(self, "allowed", cells)

    # ------------------------------------------------------------------
    # Derived structure (cached; safe on a frozen dataclass)
    # ------------------------------------------------------------------

    @cached_property
    def s(self) -> float:
        """Anisotropy exponent ``log r1 / log r2`` in ``(0, 1]``."""
        return math.log(self.r1) / math.log(self.r2)

    @property
    def n_cells(self) -> int:
        return len(self.allowed)

    @cached_property
    def row_alphabet(self) -> tuple[int, ...]:
        """Column letters that carry at least one allowed cell."""
        return tuple(sorted({a1 for a1, _ in self.allowed}))

    @cached_property
    def _fibers(self) -> dict[int, tuple[int, ...]]:
        fib: dict[int, list[int]] = {}
        for a1, a2 in self.allowed:
            fib.setdefault(a1, []).append(a2)
        return {a1: tuple(sorted(v)) for a1, v in fib.items()}

    def row_fiber(self, a1: int) -> tuple[int, ...]:
        """Row letters allowed above column letter ``a1`` (may be empty)."""
        return self._fibers.get(int(a1), ())

    @cached_property
    def cell_index(self) -> np.ndarray:
        """``(r1, r2)`` int array: position in ``allowed``, -1 if forbidden."""
        idx = np.full((self.r1, self.r2), -1, dtype=np.int64)
        for i, (a1, a2) in enumerate(self.allowed):
            idx[a1, a2] = i
        return idx

    @cached_property
    def cells_array(self) -> np.ndarray:
        """``(n_cells, 2)`` array of the allowed cells in canonical order."""
        return np.array(self.allowed, dtype=np.int64)

    def is_allowed(self, a1: int, a2: int) -> bool:
        if not (0 <= a1 < self.r1 and 0 <= a2 < self.r2):
            return False
        return bool(self.cell_index[a1, a2] >= 0)


def depth_map(system: CellSystem, n: int) -> int:
    """Smallest ``m`` with ``r1**-m <= r2**-n`` (exact integer arithmetic).

    This is ``ceil(n * log r2 / log r1)`` computed without float comparisons,
    so ties like ``r1**m == r2**n`` round the right way at any depth.
    """
    if n < 0:
        raise ValueError("depth must be >= 0")
    if n == 0:
        return 0
    r1, r2 = system.r1, system.r2
    target = r2**n
    m = max(n, int(n * math.log(r2) / math.log(r1)) - 2)
    power = r1**m
    while power < target:
        power *= r1
        m += 1
    while m > n and power // r1 >= target:
        power //= r1
        m -= 1
    return m


@dataclass(frozen=True)
class ProductWord:
    """Finite word of cells, stored as paired digit tuples of equal length."""

    w1: tuple[int, ...]
    w2: tuple[int, ...]

    def __post_init__(self) -> None:
        w1 = tuple(int(a) for a in self.w1)
        w2 = tuple(int(a) for a in self.w2)
        if len(w1) != len(w2):
            raise ValueError("component words must have equal length")
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "w2", w2)

    def __len__(self) -> int:
        return len(self.w1)

    @classmethod
    def from_cells(cls, cells: Sequence[tuple[int, int]]) -> "ProductWord":
        return cls(tuple(c[0] for c in cells), tuple(c[1] for c in cells))

    def cells(self) -> tuple[tuple[int, int], ...]:
        return tuple(zip(self.w1, self.w2))

    def concat(self, other: "ProductWord") -> "ProductWord":
        return ProductWord(self.w1 + other.w1, self.w2 + other.w2)

    def shift(self) -> "ProductWord":
        """Drop the first cell (the dynamics on words)."""
        return ProductWord(self.w1[1:], self.w2[1:])

    def is_admissible(self, system: CellSystem) -> bool:
        return all(system.is_allowed(a1, a2) for a1, a2 in self.cells())


@dataclass(frozen=True)
class Ball:
    """Approximate ball: a row word of depth ``n`` and a column word of
    depth ``g(n)`` (so both sides have comparable geometric size)."""

    column_word: tuple[int, ...]
    row_word: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "column_word", tuple(int(a) for a in self.column_word))
        object.__setattr__(self, "row_word", tuple(int(a) for a in self.row_word))

    @property
    def depth(self) -> int:
        return len(self.row_word)

    def log_diameter(self, system: CellSystem) -> float:
        return -self.depth * math.log(system.r2)


def ball(system: CellSystem, column_word: Sequence[int], row_word: Sequence[int]) -> Ball:
    """Validated :class:`Ball` constructor (checks the anisotropic lengths)."""
    b = Ball(tuple(column_word), tuple(row_word))
    expected = depth_map(system, b.depth)
    if len(b.column_word) != expected:
        raise ValueError(
            f"column word must have length g({b.depth}) = {expected}, got {len(b.column_word)}"
        )
    for a1 in b.column_word:
        if not (0 <= a1 < system.r1):
            raise ValueError(f"column digit {a1} outside range")
    for a2 in b.row_word:
        if not (0 <= a2 < system.r2):
            raise ValueError(f"row digit {a2} outside range")
    return b


# ---------------------------------------------------------------------------
# Enumeration
# ---------------------------------------------------------------------------


def digits_of_indices(indices: np.ndarray, base: int, n: int) -> np.ndarray:
    """Expand flat indices to ``(len(indices), n)`` digit rows, MSB first."""
    rem = np.array(indices, dtype=np.int64, copy=True)
    out = np.empty((rem.size, n), dtype=np.int64)
    for j in range(n - 1, -1, -1):
        out[:, j] = rem % base
        rem //= base
    return out


def pack_digits(digits: np.ndarray, base: int) -> np.ndarray:
    """Inverse of :func:`digits_of_indices` along the last axis."""
    digits = np.asarray(digits, dtype=np.int64)
    n = digits.shape[-1]
    out = np.zeros(digits.shape[:-1], dtype=np.int64)
    for j in range(n):
        out = out * base + digits[..., j]
    return out


def row_word_count(system: CellSystem, n: int) -> int:
    return system.r1**n


def row_words_range(system: CellSystem, n: int, start: int, stop: int) -> np.ndarray:
    """Column words with lexicographic ranks ``[start, stop)`` as digit rows."""
    return digits_of_indices(np.arange(start, stop, dtype=np.int64), system.r1, n)


def enumerate_row_words(
    system: CellSystem, n: int, cap: int = DEFAULT_ENUMERATION_CAP
) -> Iterator[tuple[int, ...]]:
    """All column words of length ``n`` in lexicographic order."""
    total = row_word_count(system, n)
    if total > cap:
        raise CapExceededError(f"{total} column words of depth {n} exceed cap {cap}")
    yield from itertools.product(range(system.r1), repeat=n)


def admissible_word_count(system: CellSystem, n: int) -> int:
    return system.n_cells**n


def admissible_words_range(
    system: CellSystem, n: int, start: int, stop: int
) -> tuple[np.ndarray, np.ndarray]:
    """Admissible product words ranked ``[start, stop)`` as digit-row pairs.

    The rank order is lexicographic in the cell sequence, with cells compared
    as ``(a1, a2)`` pairs — i.e. the order of ``system.allowed``.
    """
    cell_rows = digits_of_indices(
        np.arange(start, stop, dtype=np.int64), system.n_cells, n
    )
    cells = system.cells_array[cell_rows]  # (W, n, 2)
    return cells[..., 0], cells[..., 1]


def enumerate_admissible(
    system: CellSystem, n: int, cap: int = DEFAULT_ENUMERATION_CAP
) -> Iterator[ProductWord]:
    """All admissible product words of length ``n``, lexicographic in cells."""
    total = admissible_word_count(system, n)
    if total > cap:
        raise CapExceededError(f"{total} product words of depth {n} exceed cap {cap}")
    for cells in itertools.product(system.allowed, repeat=n):
        yield ProductWord.from_cells(cells)
