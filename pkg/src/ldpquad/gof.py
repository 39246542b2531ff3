"""L2 goodness-of-fit tests of ``H0: f = f0`` under local privacy.

Both statistics estimate a truncated squared distance to the null. The
non-interactive one is the U-statistic of released arrays recentred by the
known null coefficients. The interactive one builds a pilot of ``f - f0`` from
the first half and measures its clamped inner product with ``f - f0`` on the
second half.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import channel_ni, channel_si, density as dn, haar
from .channel_ni import InsufficientBudgetError, NiConfig
from .channel_si import SiConfig

PROTOCOLS = ("ni", "si")


@dataclass(frozen=True)
class GofConfig:
    protocol: str
    f0: dn.DyadicDensity
    n: int
    alpha: float = 1.0
    s_eff: float = 0.3
    a: float = 2.0
    C: float = 1.0
    gamma: float = 0.05
    M: float | None = None  # sup-norm bound for the interactive clamp
    K: float = 2.0

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"protocol must be one of {PROTOCOLS}, got {self.protocol!r}")
        if not self.C > 0:
            raise ValueError(f"C must be positive, got {self.C}")
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.protocol == "si" and (self.n < 4 or self.n % 2):
            raise ValueError("interactive test needs an even n >= 4")

    @property
    def budget(self) -> float:
        return self.n * self.alpha**2

    @property
    def J(self) -> int:
        if self.protocol == "ni":
            return channel_ni.select_J_ni(self.n, self.alpha, self.s_eff, self.a)
        return channel_si.select_J_si(self.n // 2, self.alpha, self.s_eff)

    def ni_config(self) -> NiConfig:
        return NiConfig(self.alpha, self.a, self.J)

    def si_config(self) -> SiConfig:
        M = self.M if self.M is not None else self.f0.sup
        J = self.J
        return SiConfig(self.alpha, J, channel_si.select_tau(self.K, M, J, self.a, self.s_eff), M, self.a, self.K, self.s_eff)

    def null_coeffs(self) -> haar.CoeffTable:
        return haar.exact_coeffs(self.f0, self.J)


@dataclass(frozen=True)
class TestOutcome:
    decision: int
    statistic: float
    threshold: float

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if self.decision != int(self.statistic > self.threshold):
            raise ValueError("decision must equal [statistic > threshold]")


def gof_threshold(cfg: GofConfig) -> float:
    """Separation rate ``t_n`` of the chosen protocol (natural log)."""
    b, s, a = cfg.budget, cfg.s_eff, cfg.a
    if b <= math.e:
        raise InsufficientBudgetError(f"n*alpha^2 = {b} must exceed e")
    if cfg.protocol == "ni":
        return b ** (-2 * s / (4 * s + 3)) * math.log(b) ** (a + 0.25)
    return b ** (-2 * s / (4 * s + 2)) * math.log(b) ** (a / 2 + 0.25)


def statistic_ni(sample, cfg: GofConfig, rng: np.random.Generator, ni_cfg: NiConfig | None = None) -> float:
    ni_cfg = ni_cfg or cfg.ni_config()
    summary = channel_ni.summarize(sample, ni_cfg, rng)
    return channel_ni.u_statistic(summary, center=haar.exact_coeffs(cfg.f0, ni_cfg.J).values)


def statistic_si(sample, cfg: GofConfig, rng: np.random.Generator, si_cfg: SiConfig | None = None, aggregate: bool = True) -> float:
    """Mean response minus the exact null mean ``int clamp(ghat) f0``.

    Under the null the responses have conditional mean exactly that
    correction, so the statistic is centred for every pilot.
    """
    si_cfg = si_cfg or cfg.si_config()
    first, second = channel_si.split_halves(sample)
    pilot = channel_si.stage1_from_sample(first, si_cfg.ni, rng, aggregate=aggregate)
    g = haar.CoeffTable(si_cfg.J, pilot.coeffs.values - haar.exact_coeffs(cfg.f0, si_cfg.J).values)
    u_heights = channel_si.clamp(g.cell_values(), si_cfg.tau)
    u = u_heights[haar.cell_index(second, si_cfg.J)]
    z = channel_si.randomized_response(u, si_cfg.tau, si_cfg.alpha, rng)
    return float(z.mean()) - dn.linear_functional(cfg.f0, u_heights)


def _outcome(stat: float, cfg: GofConfig) -> TestOutcome:
    thr = cfg.C * gof_threshold(cfg)
    return TestOutcome(int(stat > thr), stat, thr)


def gof_test_ni(sample, cfg: GofConfig, rng: np.random.Generator) -> TestOutcome:
    return _outcome(statistic_ni(sample, cfg, rng), cfg)


def gof_test_si(sample, cfg: GofConfig, rng: np.random.Generator) -> TestOutcome:
    return _outcome(statistic_si(sample, cfg, rng), cfg)


def gof_test(sample, cfg: GofConfig, rng: np.random.Generator) -> TestOutcome:
    return (gof_test_ni if cfg.protocol == "ni" else gof_test_si)(sample, cfg, rng)


def null_statistics(cfg: GofConfig, replications: int, rng: np.random.Generator) -> np.ndarray:
    stat = statistic_ni if cfg.protocol == "ni" else statistic_si
    return np.array([stat(dn.sample(cfg.f0, cfg.n, rng), cfg, rng) for _ in range(replications)])


def calibrate_C(cfg: GofConfig, replications: int, rng: np.random.Generator) -> float:
    """Constant placing ``C t_n`` at the (1 - gamma) quantile of null statistics."""
    q = float(np.quantile(null_statistics(cfg, replications, rng), 1 - cfg.gamma))
    return max(q, 1e-300) / gof_threshold(cfg)


def separated_alternative(f0: dn.DyadicDensity, distance: float) -> dn.DyadicDensity:
    """A density at L2 distance exactly ``distance`` from f0, with the smallest sup reachable by a spike.

    Mixes f0 with a point mass on the first cell of the coarsest grid that
    makes the distance reachable: ``(1 - w) f0 + w 2**R 1_cell``.
    """
    if distance < 0:
        raise ValueError("distance must be non-negative")
    if distance == 0:
        return f0
    for R in range(max(1, f0.resolution), 31):
        base = f0.refine(R).values
        spike = np.zeros(1 << R)
        spike[0] = 1 << R
        full = math.sqrt(float(np.mean((spike - base) ** 2)))
        if full >= distance:
            w = distance / full
            return dn.DyadicDensity((1 - w) * base + w * spike)
    raise ValueError(f"distance {distance} unreachable on grids up to 2**30 cells")
