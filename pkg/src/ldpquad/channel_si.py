"""Sequentially interactive two-stage protocol.

The first half of the individuals release Laplace-sanitized Haar arrays; their
mean gives a pilot estimate ``fhat``. Each individual of the second half then
releases a single two-point value ``+-c`` whose conditional mean is the clamped
pilot evaluated at their own point, so the average of the second stage is an
estimate of ``int fhat * f``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import channel_ni, haar
from .channel_ni import J_MAX, InsufficientBudgetError, NiConfig, SampleTooSmallError


def clamp(y, tau: float):
    """Projection of y onto [-tau, tau]."""
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    out = np.clip(y, -tau, tau)
    return float(out) if np.ndim(out) == 0 else out


def select_tau(K: float, M: float, J: int, a: float, s_eff: float) -> float:
    """Clamp level ``sqrt([K^2 M^2 (1 v J^(2a+1) 2^(J(1 - 2(s' ^ 1/2))))] v 1)``."""
    if K < 2:
        raise ValueError(f"K must be >= 2, got {K}")
    if not M > 0:
        raise ValueError(f"M must be positive, got {M}")
    growth = J ** (2 * a + 1) * 2.0 ** (J * (1 - 2 * min(s_eff, 0.5)))
    return math.sqrt(max(K * K * M * M * max(1.0, growth), 1.0))


def select_J_si(n: int, alpha: float, s_eff: float) -> int:
    """Resolution for the interactive protocol: ``2**J = (n alpha^2)^(1/(2(s' ^ 1) + 1))``."""
    budget = n * alpha**2
    if budget <= 1:
        raise InsufficientBudgetError(f"n*alpha^2 = {budget} must exceed 1")
    target = math.log2(budget) / (2 * min(s_eff, 1.0) + 1)
    return int(min(max(round(target), 1), J_MAX))


def response_constant(bound: float, alpha: float) -> float:
    """Magnitude ``bound (e^alpha + 1)/(e^alpha - 1)`` of the two-point release."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    return bound / math.tanh(alpha / 2)


@dataclass(frozen=True)
class SiConfig:
    alpha: float
    J: int
    tau: float
    M: float
    a: float = 2.0
    K: float = 2.0
    s_eff: float = 0.5
    sigma_variant: str = "normalized"
    noise: bool = True  # test hook for stage 1
    clamp: bool = True  # test hook for stage 2

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.M > 0:
            raise ValueError(f"M must be positive, got {self.M}")
        if self.tau < 1 or self.tau < 2 * self.M:
            raise ValueError(f"tau={self.tau} must be at least max(1, 2M={2 * self.M})")
        NiConfig(self.alpha, self.a, self.J)  # validates a and J

    @classmethod
    def tuned(cls, n: int, alpha: float, s_eff: float, M: float, a: float = 2.0, K: float = 2.0, **kw) -> "SiConfig":
        """Resolution and clamp from the rate-optimal rules for ``n`` individuals per stage."""
        J = select_J_si(n, alpha, s_eff)
        return cls(alpha, J, select_tau(K, M, J, a, s_eff), M, a, K, s_eff, **kw)

    @property
    def ni(self) -> NiConfig:
        return NiConfig(self.alpha, self.a, self.J, self.sigma_variant, noise=self.noise)

    @property
    def c(self) -> float:
        return response_constant(self.tau, self.alpha)


@dataclass(frozen=True, eq=False)
class Stage1Estimate:
    coeffs: haar.CoeffTable
    heights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not np.all(np.isfinite(self.coeffs.values)):
            raise ValueError("pilot coefficients must be finite")
        h = haar.synthesize(self.coeffs.values, self.coeffs.J)
        h.setflags(write=False)
        object.__setattr__(self, "heights", h)

    @property
    def J(self) -> int:
        return self.coeffs.J

    def __call__(self, x):
        out = self.heights[haar.cell_index(x, self.J)]
        return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class Stage2Record:
    value: float


def stage1_estimate(records) -> Stage1Estimate:
    """Coefficient-wise mean of released arrays."""
    Z = channel_ni._as_matrix(records)
    if Z.shape[0] == 0:
        raise SampleTooSmallError("stage 1 needs at least one record")
    J = int(Z.shape[1]).bit_length() - 1
    return Stage1Estimate(haar.CoeffTable(J, Z.mean(axis=0)))


def stage1_from_sample(sample, cfg: NiConfig, rng: np.random.Generator, aggregate: bool = False) -> Stage1Estimate:
    """Pilot estimate from raw points through the Laplace channel.

    ``aggregate=False`` sanitizes every individual through the kernel.
    ``aggregate=True`` draws the summed noise of each slot directly: a sum of n
    standard Laplace variates has the law of ``G1 - G2`` with independent
    Gamma(n, 1) variables, so the resulting estimate has the same distribution
    at O(2**J) cost.
    """
    cells = np.atleast_1d(haar.cell_index(sample, cfg.J))
    n = cells.size
    if n == 0:
        raise SampleTooSmallError("stage 1 needs at least one point")
    if not aggregate:
        S, _ = channel_ni.kernels.ni_accumulate(cells, cfg.J, cfg.noise_scales(), rng)
        return Stage1Estimate(haar.CoeffTable(cfg.J, S / n))
    counts = np.bincount(cells, minlength=cfg.size).astype(float)
    signal = haar.analyze(counts, cfg.J)
    g = rng.standard_gamma(n, size=(2, cfg.size))
    noise = cfg.noise_scales() * (g[0] - g[1])
    return Stage1Estimate(haar.CoeffTable(cfg.J, (signal + noise) / n))


def randomized_response(u, bound: float, alpha: float, rng: np.random.Generator) -> np.ndarray:
    """Two-point releases ``+-c`` with conditional mean u, for ``|u| <= bound``."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any(~np.isfinite(u)) or np.any(np.abs(u) > bound):
        raise ValueError(f"response weights must lie in [-{bound}, {bound}]")
    c = response_constant(bound, alpha)
    p = 0.5 * (1.0 + u / c)
    assert np.all((p >= 0) & (p <= 1))
    return np.where(rng.random(u.size) < p, c, -c)


def stage2_values(x, pilot: Stage1Estimate, cfg: SiConfig) -> np.ndarray:
    """Stage-2 weights at the points: clamped pilot (or raw pilot under the clamp-off hook)."""
    v = np.atleast_1d(pilot(x))
    return clamp(v, cfg.tau) if cfg.clamp else v


def stage2_sanitize(x: float, pilot: Stage1Estimate, tau: float, alpha: float, rng: np.random.Generator) -> Stage2Record:
    u = clamp(pilot(x), tau)
    return Stage2Record(float(randomized_response(u, tau, alpha, rng)[0]))


def estimate_quadratic_si(records) -> float:
    """Mean of the stage-2 releases."""
    v = np.array([r.value if isinstance(r, Stage2Record) else r for r in np.atleast_1d(records)], dtype=float)
    if v.size == 0:
        raise SampleTooSmallError("no stage-2 records")
    return float(v.mean())


def split_halves(sample) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(sample, dtype=float)
    if x.ndim != 1 or x.size < 4 or x.size % 2:
        raise SampleTooSmallError(f"need an even sample of at least 4 points, got {x.size}")
    h = x.size // 2
    return x[:h], x[h:]


def run_si_protocol(sample, cfg: SiConfig, rng: np.random.Generator, *, aggregate: bool = False, transcript=None) -> float:
    """Full protocol on 2n points: first half builds the pilot, second half responds.

    With ``transcript`` set to a path, stage-1 arrays are materialized and every
    release is written as CSV.
    """
    first, second = split_halves(sample)
    if transcript is not None:
        Z1 = channel_ni.sanitize_batch(first, cfg.ni, rng)
        pilot = stage1_estimate(Z1)
    else:
        pilot = stage1_from_sample(first, cfg.ni, rng, aggregate=aggregate)
    z2 = randomized_response(stage2_values(second, pilot, cfg), cfg.tau, cfg.alpha, rng)
    if transcript is not None:
        write_transcript(transcript, Z1, z2)
    return estimate_quadratic_si(z2)


def write_transcript(path, stage1: np.ndarray, stage2: np.ndarray) -> None:
    """Rows ``individual,stage,value``; stage-1 arrays contribute one row per slot in heap order."""
    n1 = stage1.shape[0]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["individual", "stage", "value"])
        for i, row in enumerate(stage1):
            for z in row:
                w.writerow([i, 1, repr(float(z))])
        for i, z in enumerate(stage2):
            w.writerow([n1 + i, 2, repr(float(z))])


def read_transcript(path) -> tuple[np.ndarray, np.ndarray]:
    s1: dict[int, list[float]] = {}
    s2: list[float] = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            if rec["stage"] == "1":
                s1.setdefault(int(rec["individual"]), []).append(float(rec["value"]))
            else:
                s2.append(float(rec["value"]))
    Z1 = np.array([s1[i] for i in sorted(s1)])
    return Z1, np.array(s2)
