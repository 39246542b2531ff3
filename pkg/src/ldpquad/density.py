"""Piecewise-constant densities on dyadic grids of [0, 1].

Every density here is a step function on ``2**R`` equal cells, so functionals
such as the integrated square, linear functionals and entropy have exact
cell-sum oracles, and sampling is exact by inverse CDF.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import haar


class AmplitudeTooLargeError(ValueError):
    """Perturbation amplitude would make the density negative (or exceed 2)."""

    def __init__(self, delta: float, max_delta: float):
        self.delta = delta
        self.max_delta = max_delta
        super().__init__(
            f"amplitude delta={delta!r} exceeds the admissible maximum {max_delta!r}"
        )


@dataclass(frozen=True, eq=False)
class DyadicDensity:
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        R = int(v.size).bit_length() - 1
        if v.size == 0 or v.size != 1 << R:
            raise ValueError(f"number of cells must be a power of two, got {v.size}")
        if np.any(~np.isfinite(v)) or np.any(v < 0):
            raise ValueError("cell values must be finite and non-negative")
        if abs(v.mean() - 1.0) > 1e-12:
            raise ValueError(f"cell values must average to 1, got mean {v.mean()!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def resolution(self) -> int:
        return int(self.values.size).bit_length() - 1

    @property
    def sup(self) -> float:
        return float(self.values.max())

    @property
    def inf(self) -> float:
        return float(self.values.min())

    @classmethod
    def from_weights(cls, weights) -> "DyadicDensity":
        """Normalize non-negative cell weights into a density."""
        w = np.asarray(weights, dtype=float)
        if w.sum() <= 0:
            raise ValueError("weights must have positive total")
        return cls(w * (w.size / w.sum()))

    @classmethod
    def uniform(cls, R: int = 0) -> "DyadicDensity":
        return cls(np.ones(1 << R))

    def refine(self, R: int) -> "DyadicDensity":
        """Same function written on a finer grid."""
        if R < self.resolution:
            raise ValueError("can only refine to a finer grid")
        return DyadicDensity(np.repeat(self.values, 1 << (R - self.resolution)))

    def masses(self) -> np.ndarray:
        return self.values / self.values.size

    def to_text(self) -> str:
        return f"{self.resolution}\n" + " ".join(repr(float(v)) for v in self.values) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "DyadicDensity":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if len(lines) != 2:
            raise ValueError("density text needs exactly two lines: R and the cell values")
        R = int(lines[0])
        vals = np.array([float(t) for t in lines[1].split()])
        if vals.size != 1 << R:
            raise ValueError(f"expected {1 << R} cell values, got {vals.size}")
        return cls(vals)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "DyadicDensity":
        return cls.from_text(Path(path).read_text())


@dataclass(frozen=True)
class BesovSpec:
    """Haar-aligned perturbation of the uniform density.

    The density is ``1 + delta * sum_{j in levels} 2**(-j(s+1/2)) sum_k nu_jk psi_jk``.
    A single level reproduces the lower-bound family used for the interactive
    protocol; several levels give a self-similar function whose level energies
    decay like ``2**(-2js)``.
    """

    s: float
    delta: float
    levels: tuple[int, ...] = (1,)
    signs: tuple[tuple[int, ...], ...] | None = None
    seed: int | None = None

    def __post_init__(self):
        if not 0 < self.s:
            raise ValueError(f"smoothness must be positive, got {self.s}")
        if self.delta < 0:
            raise ValueError(f"delta must be non-negative, got {self.delta}")
        levels = tuple(int(m) for m in np.atleast_1d(self.levels))
        if not levels or min(levels) < 0 or len(set(levels)) != len(levels):
            raise ValueError(f"levels must be distinct non-negative integers, got {levels}")
        object.__setattr__(self, "levels", levels)
        if self.signs is not None:
            if len(self.signs) != len(levels):
                raise ValueError("one sign vector per level required")
            for m, nu in zip(levels, self.signs):
                if len(nu) != 1 << m or any(v not in (-1, 1) for v in nu):
                    raise ValueError(f"level {m} needs {1 << m} signs in {{-1, +1}}")

    @classmethod
    def single(cls, m: int, s: float, delta: float, signs=None, seed=None) -> "BesovSpec":
        return cls(s, delta, (m,), None if signs is None else (tuple(signs),), seed)

    def sign_vectors(self) -> list[np.ndarray]:
        if self.signs is not None:
            return [np.asarray(nu, dtype=float) for nu in self.signs]
        if self.seed is None:
            return [np.ones(1 << m) for m in self.levels]
        rng = np.random.default_rng(self.seed)
        return [rng.choice([-1.0, 1.0], size=1 << m) for m in self.levels]

    @property
    def resolution(self) -> int:
        return max(self.levels) + 1


def _perturbation_coeffs(spec: BesovSpec) -> haar.CoeffTable:
    """Coefficients of the delta = 1 perturbation shape."""
    J = spec.resolution
    vals = np.zeros(1 << J)
    for m, nu in zip(spec.levels, spec.sign_vectors()):
        vals[1 << m : 2 << m] = 2.0 ** (-m * (spec.s + 0.5)) * nu
    return haar.CoeffTable(J, vals)


def max_admissible_delta(spec: BesovSpec) -> float:
    """Largest delta keeping the density inside [0, 2]."""
    shape = _perturbation_coeffs(spec).cell_values()
    peak = float(np.abs(shape).max())
    return np.inf if peak == 0 else 1.0 / peak


def make_besov_density(spec: BesovSpec) -> DyadicDensity:
    """Density of resolution ``max(levels) + 1`` with the exact Haar expansion of ``spec``."""
    bound = max_admissible_delta(spec)
    if spec.delta > bound:
        raise AmplitudeTooLargeError(spec.delta, bound)
    shape = _perturbation_coeffs(spec).cell_values()
    values = 1.0 + spec.delta * shape
    # rounding at the admissible edge must not produce -0.0 or -1e-17
    return DyadicDensity(np.maximum(values, 0.0))


def sample(d: DyadicDensity, n: int, rng: np.random.Generator) -> np.ndarray:
    """n i.i.d. draws from d by inverse CDF over the cells."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    cdf = np.cumsum(d.masses())
    cdf[-1] = 1.0
    cells = np.searchsorted(cdf, rng.random(n), side="right")
    offsets = rng.random(n)
    return (cells + offsets) / d.values.size


def eval_density(d: DyadicDensity, x):
    out = d.values[haar.cell_index(x, d.resolution)]
    return float(out) if np.ndim(out) == 0 else out


def quad_functional(d: DyadicDensity) -> float:
    """Exact integral of f**2."""
    return float(np.dot(d.values, d.values) / d.values.size)


def _heights(g, R: int) -> np.ndarray:
    if isinstance(g, DyadicDensity):
        return np.repeat(g.values, 1 << (R - g.resolution))
    if isinstance(g, haar.CoeffTable):
        return np.repeat(g.cell_values(), 1 << (R - g.J))
    h = np.asarray(g, dtype=float)
    r = int(h.size).bit_length() - 1
    return np.repeat(h, 1 << (R - r))


def _resolution_of(g) -> int:
    if isinstance(g, DyadicDensity):
        return g.resolution
    if isinstance(g, haar.CoeffTable):
        return g.J
    size = np.asarray(g).size
    r = int(size).bit_length() - 1
    if size != 1 << r:
        raise ValueError("step function needs a power-of-two number of cells")
    return r


def linear_functional(d: DyadicDensity, g) -> float:
    """Exact integral of g * f for a step function g (density, coefficient table or heights)."""
    R = max(d.resolution, _resolution_of(g))
    f = _heights(d, R)
    return float(np.dot(f, _heights(g, R)) / f.size)


def integral_functional(d: DyadicDensity, phi: Callable[[np.ndarray], np.ndarray]) -> float:
    """Exact integral of phi(f) (phi applied cell-wise)."""
    return float(np.mean(phi(d.values)))


def l2_distance(d: DyadicDensity, g: DyadicDensity) -> float:
    R = max(d.resolution, g.resolution)
    diff = _heights(d, R) - _heights(g, R)
    return float(np.sqrt(np.dot(diff, diff) / diff.size))


def spike_density(R: int, weight: float, cell: int = 0, base: DyadicDensity | None = None) -> DyadicDensity:
    """Mixture ``(1 - weight) * base + weight * 2**R * 1_cell``."""
    if not 0.0 <= weight <= 1.0:
        raise ValueError("mixture weight must lie in [0, 1]")
    base = DyadicDensity.uniform(R) if base is None else base.refine(max(R, base.resolution))
    R = base.resolution
    spike = np.zeros(1 << R)
    spike[cell] = 1 << R
    return DyadicDensity((1.0 - weight) * base.values + weight * spike)


def random_density(R: int, rng: np.random.Generator, concentration: float = 1.0) -> DyadicDensity:
    """Dirichlet-distributed cell masses; used for property tests."""
    w = rng.dirichlet(np.full(1 << R, concentration))
    return DyadicDensity.from_weights(w)
