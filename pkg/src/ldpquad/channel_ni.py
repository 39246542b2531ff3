"""Non-interactive channel: Laplace noise on every Haar coefficient.

Individual i releases the array ``Z_i = psi(X_i) + (sigma/alpha) * sigma_j * W_i``
over the slots of a max-level-J coefficient table, with i.i.d. standard Laplace
``W`` (density exp(-|w|)/2, variance 2). The integrated square is estimated by
the order-2 U-statistic of the released arrays.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import haar, kernels

J_MAX = 24


class InsufficientBudgetError(ValueError):
    """n * alpha**2 too small for the bandwidth rule."""


class SampleTooSmallError(ValueError):
    pass


@lru_cache(maxsize=None)
def _zeta_bracket(a: float) -> tuple[float, float]:
    # partial sum plus convexity bounds on the tail:
    #   int_{N+1}^inf x^-a + (N+1)^-a / 2  <=  tail  <=  int_{N+1/2}^inf x^-a
    N = 100_000
    head = math.fsum((np.arange(N, 0, -1, dtype=float) ** -a).tolist())
    lo = head + (N + 1.0) ** (1 - a) / (a - 1) + 0.5 * (N + 1.0) ** -a
    hi = head + (N + 0.5) ** (1 - a) / (a - 1)
    return lo, hi


def zeta_series(a: float) -> float:
    """``sum_{j>=1} j**-a`` with absolute error below 1e-10."""
    if a <= 1:
        raise ValueError(f"series diverges for a={a} (need a > 1)")
    lo, hi = _zeta_bracket(float(a))
    if hi - lo > 2e-10:
        raise ArithmeticError(f"tail bracket too wide for a={a}: {hi - lo}")
    return 0.5 * (lo + hi)


def sigma_constant(a: float, variant: str = "normalized") -> float:
    """Noise normalization: ``4 + 2 zeta(a)`` (variant "paper") or ``4 + 4 zeta(a)`` (variant "normalized")."""
    z = zeta_series(a)
    if variant == "paper":
        return 4.0 + 2.0 * z
    if variant == "normalized":
        return 4.0 + 4.0 * z
    raise ValueError(f"unknown sigma variant {variant!r}")


def level_scales(J: int, a: float) -> np.ndarray:
    """``sigma_j`` for every slot: 1 at level -1, ``(1 v j)**a 2**(j/2)`` above."""
    levels = haar.level_of_slots(J)
    out = np.ones(1 << J)
    pos = levels >= 0
    lj = levels[pos]
    out[pos] = np.maximum(1, lj) ** float(a) * 2.0 ** (lj / 2)
    return out


@dataclass(frozen=True)
class NiConfig:
    alpha: float
    a: float = 2.0
    J: int = 4
    sigma_variant: str = "normalized"
    level0_noise: bool = True
    noise: bool = True  # test hook: False releases psi(x) exactly

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.a > 1:
            raise ValueError(f"noise exponent a must exceed 1, got {self.a}")
        if not 1 <= self.J <= J_MAX:
            raise ValueError(f"J must lie in [1, {J_MAX}], got {self.J}")

    @property
    def sigma(self) -> float:
        return sigma_constant(self.a, self.sigma_variant)

    @property
    def size(self) -> int:
        return 1 << self.J

    def noise_scales(self) -> np.ndarray:
        """Laplace scale of each released slot: ``sigma_j * sigma / alpha``."""
        if not self.noise:
            return np.zeros(self.size)
        sc = level_scales(self.J, self.a) * (self.sigma / self.alpha)
        if not self.level0_noise:
            sc[0] = 0.0
        return sc


@dataclass(frozen=True, eq=False)
class NiRecord:
    J: int
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (1 << self.J,) or not np.all(np.isfinite(v)):
            raise ValueError("record must hold 2**J finite values")
        object.__setattr__(self, "values", v)

    def __getitem__(self, key) -> float:
        return float(self.values[haar.flat_index(*key)])


def sanitize_batch(x, cfg: NiConfig, rng: np.random.Generator) -> np.ndarray:
    """Sanitized arrays for a batch of points, shape (n, 2**J)."""
    cells = np.atleast_1d(haar.cell_index(x, cfg.J))
    return kernels.ni_sanitize(cells, cfg.J, cfg.noise_scales(), rng)


def sanitize_ni(x: float, cfg: NiConfig, rng: np.random.Generator) -> NiRecord:
    return NiRecord(cfg.J, sanitize_batch([x], cfg, rng)[0])


@dataclass(frozen=True, eq=False)
class NiSummary:
    """Sufficient statistics of a batch for the U-statistic."""

    n: int
    total: np.ndarray  # sum_i Z_i
    sumsq: float  # sum_i ||Z_i||^2

    @property
    def J(self) -> int:
        return int(self.total.size).bit_length() - 1


def summarize(sample, cfg: NiConfig, rng: np.random.Generator) -> NiSummary:
    """Sanitize every point and keep only the running sums (no n x 2**J array)."""
    cells = np.atleast_1d(haar.cell_index(sample, cfg.J))
    S, ss = kernels.ni_accumulate(cells, cfg.J, cfg.noise_scales(), rng)
    return NiSummary(int(cells.size), S, float(ss))


def _as_matrix(records) -> np.ndarray:
    if isinstance(records, np.ndarray):
        Z = np.asarray(records, dtype=float)
    else:
        records = list(records)
        if not records:
            raise SampleTooSmallError("no records")
        J = records[0].J
        if any(r.J != J for r in records):
            raise ValueError("records must share the same max level")
        Z = np.stack([r.values for r in records])
    if Z.ndim != 2:
        raise ValueError("records must form an (n, 2**J) array")
    return Z


def u_statistic(summary: NiSummary, center: np.ndarray | None = None) -> float:
    """``sum_{i != h} <Z_i - c, Z_h - c> / (n (n-1))`` from sufficient statistics."""
    n = summary.n
    if n < 2:
        raise SampleTooSmallError(f"U-statistic needs n >= 2, got {n}")
    S, ss = summary.total, summary.sumsq
    if center is not None:
        c = np.asarray(center, dtype=float)
        ss = ss - 2.0 * float(np.dot(c, S)) + n * float(np.dot(c, c))
        S = S - n * c
    return (float(np.dot(S, S)) - ss) / (n * (n - 1.0))


def estimate_quadratic_ni(records) -> float:
    """U-statistic estimate of the integrated square from released arrays."""
    Z = _as_matrix(records)
    n = Z.shape[0]
    if n < 2:
        raise SampleTooSmallError(f"U-statistic needs n >= 2, got {n}")
    summary = NiSummary(n, Z.sum(axis=0), float(np.einsum("ij,ij->", Z, Z)))
    return u_statistic(summary)


def select_J_ni(n: int, alpha: float, s_eff: float, a: float = 2.0) -> int:
    """Resolution ``round(log2 2**J_n)`` from the non-interactive bandwidth rule, clamped to [1, 24]."""
    budget = n * alpha**2
    if budget <= 1:
        raise InsufficientBudgetError(f"n*alpha^2 = {budget} must exceed 1")
    if s_eff > 0.75:
        log2_target = (math.log2(budget) - (4 * a + 1) * math.log2(math.log(budget))) / 3
    else:
        log2_target = 2 * math.log2(budget) / (4 * s_eff + 3)
    return int(min(max(round(log2_target), 1), J_MAX))


def ni_logratio_bound(cfg: NiConfig) -> float:
    """Supremum over (z, x, x') of ``log q(z|x) - log q(z|x')``.

    The log-ratio is bounded slot-wise by ``|psi_jk(x) - psi_jk(x')| / b_jk``
    with ``b_jk = sigma_j sigma / alpha``. At level j >= 0 the two points
    differ in at most two slots, by ``2**(j/2)`` each (different supports) or
    by ``2 * 2**(j/2)`` in one slot (same support), so each level contributes
    at most ``2 (1 v j)**-a alpha / sigma``; the level -1 contributes nothing
    since the scaling function is constant. Taking x near 0 and x' near 1
    activates every level at once and z far out makes each slot tight, so the
    bound is attained in the limit.
    """
    if not cfg.noise:
        return math.inf
    j = np.arange(cfg.J)
    return float(cfg.alpha / cfg.sigma * np.sum(2.0 * np.maximum(1, j) ** -float(cfg.a)))


def write_records_csv(records, path) -> None:
    """Batch of released arrays as rows ``individual,j,k,z``."""
    Z = _as_matrix(records)
    J = int(Z.shape[1]).bit_length() - 1
    idx = [haar.unflat_index(p) for p in range(Z.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["individual", "j", "k", "z"])
        for i, row in enumerate(Z):
            for (wi, z) in zip(idx, row):
                w.writerow([i, wi.j, wi.k, repr(float(z))])


def read_records_csv(path) -> list[NiRecord]:
    rows: dict[int, dict[int, float]] = {}
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            p = haar.flat_index(int(rec["j"]), int(rec["k"]))
            rows.setdefault(int(rec["individual"]), {})[p] = float(rec["z"])
    out = []
    for i in sorted(rows):
        slots = rows[i]
        P = len(slots)
        J = P.bit_length() - 1
        if P != 1 << J or set(slots) != set(range(P)):
            raise ValueError(f"individual {i} has an incomplete coefficient array")
        out.append(NiRecord(J, np.array([slots[p] for p in range(P)])))
    return out
