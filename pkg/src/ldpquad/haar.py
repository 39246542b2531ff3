"""Haar wavelet basis on [0, 1] and exact coefficient tables.

Coefficients are stored flat in heap order: slot 0 holds the scaling
coefficient (level -1) and the level-j, position-k coefficient sits at slot
``2**j + k``. A table with max level ``J`` (levels -1 .. J-1) therefore has
exactly ``2**J`` slots, which is also the number of cells of the resolution-J
dyadic grid the table reconstructs onto.

Convention: ``psi = +1`` on [0, 1/2), ``-1`` on [1/2, 1], ``psi_jk(x) =
2**(j/2) psi(2**j x - k)`` and the scaling function is 1 on the closed interval.
The point x = 1 belongs to the last cell of every level.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .density import DyadicDensity


class InvalidIndexError(ValueError):
    """Wavelet index outside the basis."""


@dataclass(frozen=True)
class WaveletIndex:
    j: int
    k: int = 0

    def __post_init__(self):
        if self.j < -1:
            raise InvalidIndexError(f"level must be >= -1, got {self.j}")
        width = 1 if self.j < 0 else 1 << self.j
        if not 0 <= self.k < width:
            raise InvalidIndexError(
                f"position {self.k} out of range for level {self.j} (0..{width - 1})"
            )

    @property
    def flat(self) -> int:
        return 0 if self.j < 0 else (1 << self.j) + self.k


def flat_index(j: int, k: int = 0) -> int:
    return WaveletIndex(j, k).flat


def unflat_index(p: int) -> WaveletIndex:
    if p < 0:
        raise InvalidIndexError(f"negative slot {p}")
    if p == 0:
        return WaveletIndex(-1, 0)
    j = p.bit_length() - 1
    return WaveletIndex(j, p - (1 << j))


def level_of_slots(J: int) -> np.ndarray:
    """Level of every slot of a max-level-J table (slot 0 -> -1)."""
    levels = np.empty(1 << J, dtype=np.int64)
    levels[0] = -1
    for j in range(J):
        levels[1 << j : 2 << j] = j
    return levels


def cell_index(x, J: int):
    """Index of the resolution-J dyadic cell containing x (x = 1 -> last cell)."""
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)) or np.any(np.isnan(x)):
        raise ValueError("points must lie in [0, 1]")
    c = np.floor(x * (1 << J)).astype(np.int64)
    return np.minimum(c, (1 << J) - 1)


@dataclass(frozen=True, eq=False)
class CoeffTable:
    """Haar coefficients for levels -1 .. J-1 in heap order."""

    J: int
    values: np.ndarray

    def __post_init__(self):
        if self.J < 0:
            raise ValueError(f"max level must be >= 0, got {self.J}")
        v = np.array(self.values, dtype=float)
        if v.shape != (1 << self.J,):
            raise ValueError(
                f"table of max level {self.J} needs {1 << self.J} entries, got {v.shape}"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __getitem__(self, key) -> float:
        j, k = key
        return float(self.values[flat_index(j, k)])

    def level(self, j: int) -> np.ndarray:
        if j == -1:
            return self.values[:1]
        if not 0 <= j < self.J:
            raise InvalidIndexError(f"level {j} not in table of max level {self.J}")
        return self.values[1 << j : 2 << j]

    def level_energies(self) -> np.ndarray:
        """Squared l2 norm of each level, ordered -1 .. J-1."""
        out = [self.values[0] ** 2]
        out += [float(np.dot(self.level(j), self.level(j))) for j in range(self.J)]
        return np.array(out)

    def energy(self) -> float:
        return float(np.dot(self.values, self.values))

    def truncate(self, J: int) -> "CoeffTable":
        if J > self.J:
            return CoeffTable(J, np.concatenate([self.values, np.zeros((1 << J) - (1 << self.J))]))
        return CoeffTable(J, self.values[: 1 << J])

    def cell_values(self) -> np.ndarray:
        """Heights of the reconstructed function on the resolution-J grid."""
        return synthesize(self.values, self.J)

    def __sub__(self, other: "CoeffTable") -> "CoeffTable":
        J = max(self.J, other.J)
        return CoeffTable(J, self.truncate(J).values - other.truncate(J).values)

    def __add__(self, other: "CoeffTable") -> "CoeffTable":
        J = max(self.J, other.J)
        return CoeffTable(J, self.truncate(J).values + other.truncate(J).values)


def eval_wavelet(idx: WaveletIndex, x) -> float:
    """Value of the basis function ``idx`` at x."""
    if not isinstance(idx, WaveletIndex):
        idx = WaveletIndex(*idx)
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x={x} outside [0, 1]")
    if idx.j < 0:
        return 1.0
    scale = 1 << idx.j
    u = x * scale - idx.k
    if u < 0.0 or u > 1.0 or (u == 1.0 and idx.k != scale - 1):
        return 0.0
    amp = 2.0 ** (idx.j / 2)
    return amp if u < 0.5 else -amp


def basis_matrix(x, J: int) -> np.ndarray:
    """Rows ``psi_jk(x_i)`` for all slots of a max-level-J table, shape (n, 2**J)."""
    cells = np.atleast_1d(cell_index(x, J))
    out = np.zeros((cells.size, 1 << J))
    out[:, 0] = 1.0
    rows = np.arange(cells.size)
    for j in range(J):
        k = cells >> (J - j)
        half = (cells >> (J - j - 1)) & 1
        out[rows, (1 << j) + k] = 2.0 ** (j / 2) * (1 - 2 * half)
    return out


def analyze(masses: np.ndarray, J: int) -> np.ndarray:
    """Haar coefficients from interval masses on a dyadic grid.

    ``masses[c]`` is the integral of the function over cell c of a
    resolution-R grid. Levels at or beyond R have zero coefficients because
    the function is constant on each half of their supports.
    """
    masses = np.asarray(masses, dtype=float)
    R = int(masses.size).bit_length() - 1
    if masses.size != 1 << R:
        raise ValueError("mass vector length must be a power of two")
    out = np.zeros(1 << J)
    m = masses
    for j in range(R - 1, -1, -1):
        left, right = m[0::2], m[1::2]
        if j < J:
            out[1 << j : 2 << j] = 2.0 ** (j / 2) * (left - right)
        m = left + right
    out[0] = m[0]
    return out


def synthesize(values: np.ndarray, J: int) -> np.ndarray:
    """Inverse of ``analyze``: heights on the 2**J cells."""
    v = np.array(values[:1], dtype=float)
    for j in range(J):
        detail = 2.0 ** (j / 2) * values[1 << j : 2 << j]
        nxt = np.empty(2 << j)
        nxt[0::2] = v + detail
        nxt[1::2] = v - detail
        v = nxt
    return v


def exact_coeffs(d: "DyadicDensity", J: int) -> CoeffTable:
    """Exact inner products of a dyadic density with the basis, levels -1 .. J-1."""
    if J < 1:
        raise ValueError(f"J must be >= 1, got {J}")
    masses = d.values / d.values.size
    return CoeffTable(J, analyze(masses, J))


def project_eval(c: CoeffTable, x):
    """Evaluate ``sum_jk beta_jk psi_jk(x)``; scalar in, scalar out."""
    heights = c.cell_values()
    out = heights[cell_index(x, c.J)]
    return float(out) if np.ndim(out) == 0 else out


def tail_energy(d: "DyadicDensity", J: int) -> float:
    """Energy of the levels >= J: ``D(d) - sum_{j<J} ||beta_j||^2``.

    Summed directly over the (finitely many) nonzero high levels, so the
    result is non-negative and monotone in J by construction.
    """
    if J < 1:
        raise ValueError(f"J must be >= 1, got {J}")
    R = d.resolution
    if J >= R:
        return 0.0
    full = exact_coeffs(d, R).values
    tail = full[1 << J :]
    return float(np.dot(tail, tail))
