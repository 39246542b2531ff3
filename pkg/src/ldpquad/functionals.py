"""Private estimation of integral functionals ``T(f) = int phi(f)``.

A pilot ``fhat`` from one third of the individuals linearizes phi to second
order around ``fhat``:

    T(f) = int [phi(fhat) - phi'(fhat) fhat + phi''(fhat) fhat^2 / 2]
         + int f [phi'(fhat) - phi''(fhat) fhat]
         + int f^2 phi''(fhat) / 2  +  remainder.

The first integral only involves the pilot and is computed exactly. The
second is a linear functional estimated by randomized response on the second
third. The third is estimated by a two-stage interactive run on the last
third. The remainder is reported as an a-priori bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import channel_si, haar
from .channel_si import SiConfig, Stage1Estimate

Fn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SmoothFunctional:
    """phi with its first two derivatives and a sup bound on the third.

    ``f_min`` and ``M`` delimit the working range; the pilot is clipped into it.
    """

    phi: Fn
    d1: Fn
    d2: Fn
    d3_bound: float
    f_min: float | None = None
    M: float | None = None
    name: str = "phi"

    def __post_init__(self):
        if self.d3_bound < 0 or not math.isfinite(self.d3_bound):
            raise ValueError("third-derivative bound must be finite and non-negative")
        if self.f_min is not None and self.M is not None and not 0 <= self.f_min < self.M:
            raise ValueError("working range must satisfy 0 <= f_min < M")

    @classmethod
    def quadratic(cls) -> "SmoothFunctional":
        return cls(np.square, lambda t: 2.0 * t, lambda t: np.full_like(t, 2.0, dtype=float), 0.0, name="quadratic")

    @classmethod
    def identity(cls) -> "SmoothFunctional":
        return cls(lambda t: t, lambda t: np.ones_like(t, dtype=float), lambda t: np.zeros_like(t, dtype=float), 0.0, name="identity")

    @classmethod
    def entropy(cls, f_min: float, M: float) -> "SmoothFunctional":
        """``phi(t) = t log t`` on [f_min, M]; ``|phi'''| = 1/t^2 <= 1/f_min^2``."""
        if not f_min > 0:
            raise ValueError("entropy needs a positive lower bound on the density")
        return cls(
            lambda t: t * np.log(t),
            lambda t: np.log(t) + 1.0,
            lambda t: 1.0 / t,
            1.0 / f_min**2,
            f_min,
            M,
            name="entropy",
        )


@dataclass(frozen=True)
class FunctionalEstimate:
    value: float
    plug_in: float
    linear: float
    quadratic: float
    remainder_bound: float


def private_linear_functional(sample, w, tau_w: float, alpha: float, rng: np.random.Generator) -> float:
    """Mean of two-point releases with conditional mean ``w(x)``; unbiased for ``int w f``.

    ``w`` is a callable or an array of heights on a dyadic grid.
    """
    if not (tau_w >= 0 and math.isfinite(tau_w)):
        raise ValueError(f"weight bound must be finite, got {tau_w}")
    x = np.atleast_1d(np.asarray(sample, dtype=float))
    if x.size == 0:
        raise ValueError("empty sample")
    if callable(w):
        u = np.asarray(w(x), dtype=float)
    else:
        h = np.asarray(w, dtype=float)
        u = h[haar.cell_index(x, int(h.size).bit_length() - 1)]
    if np.any(np.abs(u) > tau_w):
        raise ValueError(f"weight exceeds its declared bound {tau_w}")
    if tau_w == 0:
        return 0.0
    return float(channel_si.randomized_response(u, tau_w, alpha, rng).mean())


def three_way_split(sample) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Disjoint consecutive thirds; each individual is used by exactly one stage."""
    x = np.asarray(sample, dtype=float)
    m = x.size // 3
    if m < 4 or m % 2:
        raise channel_si.SampleTooSmallError(f"need three equal parts of even size >= 4, got n={x.size}")
    return x[:m], x[m : 2 * m], x[2 * m : 3 * m]


def _pilot_heights(pilot: Stage1Estimate, fn: SmoothFunctional) -> np.ndarray:
    h = pilot.heights
    if fn.f_min is not None or fn.M is not None:
        lo = -np.inf if fn.f_min is None else fn.f_min
        hi = np.inf if fn.M is None else fn.M
        h = np.clip(h, lo, hi)
    return h


def remainder_bound(fn: SmoothFunctional) -> float:
    """``|phi'''|_inf / 6 * sup int |f - fhat|^3`` with both f and fhat in [f_min, M]."""
    if fn.d3_bound == 0:
        return 0.0
    if fn.f_min is None or fn.M is None:
        return math.inf
    return fn.d3_bound * (fn.M - fn.f_min) ** 3 / 6.0


def integral_functional_estimate(
    sample, fn: SmoothFunctional, cfg: SiConfig, rng: np.random.Generator, aggregate: bool = False
) -> FunctionalEstimate:
    """Second-order expansion estimator of ``int phi(f)`` on a 3-way split sample."""
    part1, part2, part3 = three_way_split(sample)
    pilot = channel_si.stage1_from_sample(part1, cfg.ni, rng, aggregate=aggregate)
    fh = _pilot_heights(pilot, fn)

    d1, d2 = np.asarray(fn.d1(fh), dtype=float), np.asarray(fn.d2(fh), dtype=float)
    plug_in = float(np.mean(fn.phi(fh) - d1 * fh + 0.5 * d2 * fh * fh))

    w = d1 - d2 * fh
    linear = private_linear_functional(part2, w, float(np.max(np.abs(w))), cfg.alpha, rng)

    quadratic = 0.0
    if np.any(d2 != 0):
        # independent pilot, so the weight is uncorrelated with the responders
        first, second = channel_si.split_halves(part3)
        inner = channel_si.stage1_from_sample(first, cfg.ni, rng, aggregate=aggregate)
        u = d2 * (np.clip(inner.heights, -cfg.tau, cfg.tau) if cfg.clamp else inner.heights)
        quadratic = 0.5 * private_linear_functional(second, u, float(np.max(np.abs(u))), cfg.alpha, rng)

    value = plug_in + linear + quadratic
    return FunctionalEstimate(value, plug_in, linear, quadratic, remainder_bound(fn))
