"""Privacy certification of the channels and the pilot concentration check.

Both channels have closed-form output densities, so the privacy ratio is
checked pointwise on densities rather than on estimated set probabilities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import channel_ni, channel_si, density as dn, haar
from .channel_ni import NiConfig

SLACK = 1e-12


@dataclass(frozen=True)
class AuditReport:
    channel: str
    alpha: float
    analytic: float  # certified sup of the log-ratio
    empirical: float  # largest log-ratio observed
    trials: int

    @property
    def passed(self) -> bool:
        return self.analytic <= self.alpha + SLACK and self.empirical <= self.alpha + SLACK

    def to_text(self) -> str:
        rows = [
            ("channel", self.channel),
            ("alpha", repr(self.alpha)),
            ("analytic bound", repr(self.analytic)),
            ("empirical max", repr(self.empirical)),
            ("trials", str(self.trials)),
            ("result", "PASS" if self.passed else "FAIL"),
        ]
        w = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{w}}  {v}" for k, v in rows)

    CSV_HEADER = "channel,alpha,analytic,empirical,trials,passed"

    def to_csv_row(self) -> str:
        return f"{self.channel},{self.alpha!r},{self.analytic!r},{self.empirical!r},{self.trials},{int(self.passed)}"


def _level_values(cells: np.ndarray, J: int, j: int) -> tuple[np.ndarray, np.ndarray]:
    """Active position and wavelet value at level j for each cell."""
    k = cells >> (J - j)
    half = (cells >> (J - j - 1)) & 1
    return k, 2.0 ** (j / 2) * (1 - 2 * half)


def ni_logratios(x, x_prime, cfg: NiConfig, rng: np.random.Generator) -> np.ndarray:
    """``log q(Z|x) - log q(Z|x')`` for ``Z ~ q(.|x)``, one value per pair.

    Slots where both points give the same wavelet value cancel exactly, so only
    the (at most two per level) differing slots are drawn and evaluated.
    """
    if not cfg.noise:
        raise ValueError("noise-free channel has an unbounded privacy ratio")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xp = np.atleast_1d(np.asarray(x_prime, dtype=float))
    c, cp = haar.cell_index(x, cfg.J), haar.cell_index(xp, cfg.J)
    b = cfg.sigma / cfg.alpha * channel_ni.level_scales(cfg.J, cfg.a)
    out = np.zeros(x.size)
    for j in range(cfg.J):
        bj = b[1 << j]
        k, v = _level_values(c, cfg.J, j)
        kp, vp = _level_values(cp, cfg.J, j)
        w = rng.laplace(size=(2, x.size))
        same = k == kp
        # shared slot: psi(x) = v, psi(x') = vp
        z = v + bj * w[0]
        shared = np.abs(z - vp) - np.abs(z - v)
        # disjoint slots: (v, 0) at k and (0, vp) at kp
        z1, z2 = v + bj * w[0], bj * w[1]
        split = (np.abs(z1) - np.abs(z1 - v)) + (np.abs(z2 - vp) - np.abs(z2))
        out += np.where(same, shared, split) / bj
    return out


def ni_logratio_dense(z: np.ndarray, x: float, x_prime: float, cfg: NiConfig) -> float:
    """Same log-ratio summed over every slot of a full released array."""
    b = cfg.noise_scales()
    px = haar.basis_matrix([x], cfg.J)[0]
    pxp = haar.basis_matrix([x_prime], cfg.J)[0]
    live = b > 0
    if np.any(~live & (px != pxp)):
        return math.inf
    return float(np.sum((np.abs(z - pxp)[live] - np.abs(z - px)[live]) / b[live]))


def ni_worst_case_logratio(cfg: NiConfig, reach: float = 1e6) -> float:
    """Log-ratio at x = 0, x' = 1 with every differing slot pushed ``reach`` scales out."""
    b = cfg.noise_scales()
    px = haar.basis_matrix([0.0], cfg.J)[0]
    pxp = haar.basis_matrix([1.0], cfg.J)[0]
    z = px + reach * b * np.sign(px - pxp)
    return ni_logratio_dense(z, 0.0, 1.0, cfg)


def audit_ni(cfg: NiConfig, trials: int, rng: np.random.Generator, pairs=None) -> AuditReport:
    """Analytic bound plus the largest exact log-ratio over random (x, x', z) triples."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if pairs is None:
        x, xp = rng.random(trials), rng.random(trials)
    else:
        x, xp = (np.broadcast_to(np.asarray(p, dtype=float), (trials,)) for p in pairs)
    emp = float(np.max(ni_logratios(x, xp, cfg, rng)))
    return AuditReport("ni", cfg.alpha, channel_ni.ni_logratio_bound(cfg), emp, trials)


def rr_probabilities(u, tau: float, alpha: float) -> np.ndarray:
    """Probability of releasing ``+c`` for clamped weights u."""
    return 0.5 * (1.0 + np.asarray(u, dtype=float) / channel_si.response_constant(tau, alpha))


def audit_rr(tau: float, alpha: float, grid: int) -> AuditReport:
    """Exact worst ratio of the two-point law over a grid of weights in [-tau, tau]."""
    if grid < 2:
        raise ValueError("grid must have at least 2 points")
    p = rr_probabilities(np.linspace(-tau, tau, grid), tau, alpha)
    worst = max(p.max() / p.min(), (1 - p).max() / (1 - p).min())
    p_hi, p_lo = rr_probabilities([tau, -tau], tau, alpha)
    return AuditReport("rr", alpha, math.log(p_hi / p_lo), math.log(worst), grid)


@dataclass(frozen=True)
class TailRow:
    u: float
    threshold: float
    empirical: float
    bound: float

    @property
    def ok(self) -> bool:
        return self.empirical <= self.bound


def concentration_threshold(u: float, n: int, cfg: NiConfig, M: float) -> float:
    """``[c1 J^a 2^J sqrt(u) / (alpha sqrt n)] v [c2 J^a 2^J u / (n alpha)]``."""
    c1 = 2 * cfg.sigma + 2 * math.sqrt(math.e * M)
    c2 = 2 * cfg.sigma + 1
    scale = cfg.J**cfg.a * 2.0**cfg.J / cfg.alpha
    return max(c1 * scale * math.sqrt(u / n), c2 * scale * u / n)


def concentration_check(
    n: int,
    cfg: NiConfig,
    u_values,
    replications: int,
    rng: np.random.Generator,
    d: dn.DyadicDensity | None = None,
    x: float = 0.5,
    M: float | None = None,
) -> list[TailRow]:
    """Tail frequency of ``|fhat(x) - E fhat(x)|`` against ``4 exp(-u/2)``."""
    if replications < 1000:
        raise ValueError("replications must be >= 1000")
    d = dn.DyadicDensity.uniform(0) if d is None else d
    M = d.sup if M is None else M
    center = haar.project_eval(haar.exact_coeffs(d, cfg.J), x)
    dev = np.empty(replications)
    for r in range(replications):
        pilot = channel_si.stage1_from_sample(dn.sample(d, n, rng), cfg, rng, aggregate=True)
        dev[r] = abs(pilot(x) - center)
    rows = []
    for u in u_values:
        t = concentration_threshold(u, n, cfg, M)
        rows.append(TailRow(float(u), t, float(np.mean(dev > t)), 4 * math.exp(-u / 2)))
    return rows
