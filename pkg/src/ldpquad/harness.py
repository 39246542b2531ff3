"""Monte Carlo sweeps, rate fitting and plot-script emission.

Every (cell, replication) pair draws from its own generator seeded by
``SeedSequence(seed, spawn_key=(cell, replication))``, so any measurement can
be recomputed alone and serial and parallel runs agree bit for bit.
"""

from __future__ import annotations

import configparser
import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from pathlib import Path

import numpy as np

from . import channel_ni, channel_si, density as dn, gof

PROTOCOLS = ("ni", "si")
GENERATORS = ("uniform", "besov", "spike")


class ConfigError(ValueError):
    pass


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.replace(",", " ").split())


def _ints(text: str) -> tuple[int, ...]:
    out = []
    for t in text.replace(",", " ").split():
        if "^" in t:
            b, e = t.split("^")
            out.append(int(b) ** int(e))
        else:
            out.append(int(t))
    return tuple(out)


def _levels(text: str) -> tuple[int, ...]:
    text = text.strip()
    if "-" in text and "," not in text:
        lo, hi = text.split("-")
        return tuple(range(int(lo), int(hi) + 1))
    return _ints(text)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str) -> float | None:
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


# section -> key -> (field name, parser)
_SCHEMA = {
    "experiment": {
        "protocols": ("protocols", lambda t: tuple(p.strip().lower() for p in t.replace(",", " ").split())),
        "n": ("n_grid", _ints),
        "alpha": ("alpha_grid", _floats),
        "replications": ("replications", int),
        "seed": ("seed", int),
        "output": ("output", str),
        "workers": ("workers", int),
        "gof_protocol": ("gof_protocol", str),
        "gof_C": ("gof_C", _opt_float),
        "gof_gamma": ("gof_gamma", float),
        "gof_separation": ("gof_separation", float),
        "gof_calibration": ("gof_calibration", int),
        "gof_output": ("gof_output", str),
    },
    "generator": {
        "kind": ("generator", str),
        "s": ("s_grid", _floats),
        "delta": ("delta", float),
        "levels": ("levels", _levels),
        "sign_seed": ("sign_seed", lambda t: None if t.strip().lower() == "none" else int(t)),
        "spike_resolution": ("spike_resolution", int),
        "spike_weight": ("spike_weight", float),
        "p": ("p", float),
        "q": ("q", float),
        "L": ("L", float),
        "M": ("M", float),
    },
    "channel": {
        "a": ("a", float),
        "K": ("K", float),
        "sigma_variant": ("sigma_variant", str),
        "aggregate": ("aggregate", _bool),
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    protocols: tuple[str, ...] = ("ni", "si")
    n_grid: tuple[int, ...] = (1024,)
    alpha_grid: tuple[float, ...] = (1.0,)
    s_grid: tuple[float, ...] = (0.3,)
    generator: str = "besov"
    delta: float = 0.0
    levels: tuple[int, ...] = (1,)
    sign_seed: int | None = None
    spike_resolution: int = 4
    spike_weight: float = 0.0
    p: float = 2.0
    q: float = math.inf
    L: float = 1.0
    M: float = 2.0
    replications: int = 2
    seed: int = 0
    output: str = "results.csv"
    workers: int = 1
    a: float = 2.0
    K: float = 2.0
    sigma_variant: str = "normalized"
    aggregate: bool = True
    gof_protocol: str = "ni"
    gof_C: float | None = None
    gof_gamma: float = 0.05
    gof_separation: float = 0.0
    gof_calibration: int = 200
    gof_output: str = "gof.csv"

    def __post_init__(self):
        err = []
        if not self.protocols or any(p not in PROTOCOLS for p in self.protocols):
            err.append(f"experiment.protocols: must be a non-empty subset of {PROTOCOLS}, got {self.protocols}")
        if not self.n_grid or any(n < 4 for n in self.n_grid):
            err.append(f"experiment.n: grid must be non-empty with every n >= 4, got {self.n_grid}")
        if "si" in self.protocols and any(n % 2 for n in self.n_grid):
            err.append("experiment.n: the interactive protocol needs even n")
        if not self.alpha_grid or any(not a > 0 for a in self.alpha_grid):
            err.append(f"experiment.alpha: grid must be non-empty and positive, got {self.alpha_grid}")
        if not self.s_grid or any(not s > 0 for s in self.s_grid):
            err.append(f"generator.s: grid must be non-empty and positive, got {self.s_grid}")
        if self.replications < 2:
            err.append(f"experiment.replications: must be >= 2, got {self.replications}")
        if self.workers < 1:
            err.append(f"experiment.workers: must be >= 1, got {self.workers}")
        if self.generator not in GENERATORS:
            err.append(f"generator.kind: must be one of {GENERATORS}, got {self.generator!r}")
        if not self.a > 1:
            err.append(f"channel.a: must exceed 1, got {self.a}")
        if self.K < 2:
            err.append(f"channel.K: must be >= 2, got {self.K}")
        if self.sigma_variant not in ("normalized", "paper"):
            err.append(f"channel.sigma_variant: must be 'normalized' or 'paper', got {self.sigma_variant!r}")
        if err:
            raise ConfigError("; ".join(err))
        for s in self.s_grid:
            try:
                sup = make_density(self, s).sup
            except dn.AmplitudeTooLargeError as e:
                raise ConfigError(f"generator.delta: {e}") from e
            if sup > self.M:
                raise ConfigError(f"generator.M: {self.M} is below the generated sup {sup} (s={s})")

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as e:
            raise ConfigError(str(e)) from e
        kw = {}
        for section in cp.sections():
            if section not in _SCHEMA:
                raise ConfigError(f"unknown section [{section}]")
            for key, raw in cp.items(section):
                if key not in _SCHEMA[section]:
                    raise ConfigError(f"{section}.{key}: unknown key")
                name, parse = _SCHEMA[section][key]
                try:
                    kw[name] = parse(raw)
                except ValueError as e:
                    raise ConfigError(f"{section}.{key}: {e}") from e
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text())

    def cells(self) -> list[tuple[str, int, float, float]]:
        """Grid cells (protocol, n, alpha, s) in a fixed order."""
        return list(product(self.protocols, self.n_grid, self.alpha_grid, self.s_grid))


def make_density(cfg: ExperimentConfig, s: float) -> dn.DyadicDensity:
    """The single density used for every cell with smoothness s."""
    return _density(cfg.generator, s, cfg.delta, cfg.levels, cfg.sign_seed, cfg.spike_resolution, cfg.spike_weight)


@lru_cache(maxsize=64)
def _density(kind, s, delta, levels, sign_seed, spike_resolution, spike_weight) -> dn.DyadicDensity:
    if kind == "uniform":
        return dn.DyadicDensity.uniform(0)
    if kind == "spike":
        return dn.spike_density(spike_resolution, spike_weight)
    return dn.make_besov_density(dn.BesovSpec(s, delta, levels, seed=sign_seed))


@lru_cache(maxsize=64)
def _true_D(kind, s, delta, levels, sign_seed, spike_resolution, spike_weight) -> float:
    return dn.quad_functional(_density(kind, s, delta, levels, sign_seed, spike_resolution, spike_weight))


@dataclass(frozen=True)
class ResultRow:
    protocol: str
    n: int
    alpha: float
    s: float
    replication: int
    estimate: float
    true_D: float
    sq_error: float

    HEADER = ("protocol", "n", "alpha", "s", "replication", "estimate", "true_D", "sq_error")

    def cells(self) -> list[str]:
        return [self.protocol, str(self.n), repr(self.alpha), repr(self.s), str(self.replication),
                repr(self.estimate), repr(self.true_D), repr(self.sq_error)]


def replication_rng(seed: int, cell: int, replication: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(cell, replication)))


def estimate_once(protocol: str, x: np.ndarray, n: int, alpha: float, s: float, cfg: ExperimentConfig,
                  rng: np.random.Generator) -> float:
    if protocol == "ni":
        ni = channel_ni.NiConfig(alpha, cfg.a, channel_ni.select_J_ni(n, alpha, s, cfg.a), cfg.sigma_variant)
        return channel_ni.u_statistic(channel_ni.summarize(x, ni, rng))
    si = channel_si.SiConfig.tuned(n // 2, alpha, s, cfg.M, cfg.a, cfg.K, sigma_variant=cfg.sigma_variant)
    return channel_si.run_si_protocol(x, si, rng, aggregate=cfg.aggregate)


def run_replication(cfg: ExperimentConfig, cell: int, replication: int) -> ResultRow:
    protocol, n, alpha, s = cfg.cells()[cell]
    rng = replication_rng(cfg.seed, cell, replication)
    key = (cfg.generator, s, cfg.delta, cfg.levels, cfg.sign_seed, cfg.spike_resolution, cfg.spike_weight)
    d = _density(*key)
    est = estimate_once(protocol, dn.sample(d, n, rng), n, alpha, s, cfg, rng)
    D = _true_D(*key)
    return ResultRow(protocol, n, alpha, s, replication, est, D, (est - D) ** 2)


def _run_chunk(args) -> list[ResultRow]:
    cfg, tasks = args
    return [run_replication(cfg, c, r) for c, r in tasks]


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> list[ResultRow]:
    """All rows ordered by (cell, replication), independent of ``workers``."""
    workers = cfg.workers if workers is None else workers
    tasks = [(c, r) for c in range(len(cfg.cells())) for r in range(cfg.replications)]
    if workers <= 1:
        rows = _run_chunk((cfg, tasks))
    else:
        chunks = [tasks[i::workers * 4] for i in range(workers * 4)]
        with ProcessPoolExecutor(workers) as ex:
            rows = [row for part in ex.map(_run_chunk, [(cfg, ch) for ch in chunks if ch]) for row in part]
    index = {(p, n, a, s): i for i, (p, n, a, s) in enumerate(cfg.cells())}
    rows.sort(key=lambda r: (index[(r.protocol, r.n, r.alpha, r.s)], r.replication))
    return rows


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ResultRow.HEADER)
    for r in rows:
        w.writerow(r.cells())
    return buf.getvalue()


def write_csv(rows, path) -> None:
    Path(path).write_text(rows_to_csv(rows))


def read_csv(path) -> list[ResultRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != ResultRow.HEADER:
            raise ValueError(f"unexpected CSV header {reader.fieldnames}")
        return [ResultRow(r["protocol"], int(r["n"]), float(r["alpha"]), float(r["s"]), int(r["replication"]),
                          float(r["estimate"]), float(r["true_D"]), float(r["sq_error"])) for r in reader]


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    slope_se: float
    points: int
    elbow: float | None = None  # n*alpha^2 at the breakpoint
    slope_before: float | None = None
    slope_after: float | None = None


def cell_mse(rows, protocol: str, alpha: float | None = None, s: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Budgets ``n alpha^2`` and mean squared errors, sorted by budget."""
    sel = [r for r in rows if r.protocol == protocol and (alpha is None or r.alpha == alpha) and (s is None or r.s == s)]
    if alpha is None and len({r.alpha for r in sel}) > 1:
        raise ValueError("rows mix several alpha values; pass alpha")
    if s is None and len({r.s for r in sel}) > 1:
        raise ValueError("rows mix several s values; pass s")
    groups: dict[float, list[float]] = {}
    for r in sel:
        groups.setdefault(r.n * r.alpha**2, []).append(r.sq_error)
    b = np.array(sorted(groups))
    return b, np.array([np.mean(groups[k]) for k in b])


def _ols(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    r = y - X @ coef
    return coef, float(r @ r)


def fit_rate(rows, protocol: str, alpha: float | None = None, s: float | None = None) -> RateFit:
    """Log-log slope of cell MSE against ``n alpha^2`` with a hinge-elbow search.

    A breakpoint at an interior grid point is reported when the continuous
    two-segment fit lowers the BIC (breakpoint counted as a parameter).
    """
    b, mse = cell_mse(rows, protocol, alpha, s)
    return fit_power_law(b, mse)


def fit_power_law(budgets, mse) -> RateFit:
    x, y = np.log(np.asarray(budgets, float)), np.log(np.asarray(mse, float))
    m = x.size
    if m < 4 or np.ptp(x) == 0:
        raise ValueError(f"need at least 4 distinct budgets, got {m}")
    X = np.column_stack([np.ones(m), x])
    (c0, c1), rss = _ols(X, y)
    se = math.sqrt(rss / (m - 2) / np.sum((x - x.mean()) ** 2)) if m > 2 else math.nan

    floor = 1e-20 * max(1.0, float(y @ y))
    best = None
    for i in range(1, m - 1):
        Xh = np.column_stack([X, np.maximum(x - x[i], 0.0)])
        coef, rss_h = _ols(Xh, y)
        if best is None or rss_h < best[1]:
            best = (i, rss_h, coef)
    elbow = before = after = None
    if best is not None and m >= 5:
        i, rss_h, coef = best
        bic_line = m * math.log(max(rss, floor) / m) + 2 * math.log(m)
        bic_hinge = m * math.log(max(rss_h, floor) / m) + 4 * math.log(m)
        if rss_h < rss * (1 - 1e-9) and bic_hinge < bic_line:
            elbow, before, after = float(math.exp(x[i])), float(coef[1]), float(coef[1] + coef[2])
    return RateFit(float(c1), float(c0), se, m, elbow, before, after)


def emit_plot_script(rows, path, csv_path: str = "results.csv") -> None:
    """Standalone matplotlib script drawing log-log MSE against ``n alpha^2`` per protocol."""
    series: dict[str, list[tuple[float, float]]] = {}
    keys = sorted({(r.protocol, r.alpha, r.s) for r in rows})
    for p, a, s in keys:
        bx, my = cell_mse(rows, p, a, s)
        series[f"{p} alpha={a!r} s={s!r}"] = [(float(u), float(v)) for u, v in zip(bx, my)]
    lines = [
        "#!/usr/bin/env python3",
        f"# Mean squared error against n*alpha^2, aggregated from {csv_path}",
        "import matplotlib",
        'matplotlib.use("Agg")',
        "import matplotlib.pyplot as plt",
        "",
        "SERIES = {",
    ]
    for name, pts in series.items():
        lines.append(f"    {name!r}: [")
        lines += [f"        ({u!r}, {v!r})," for u, v in pts]
        lines.append("    ],")
    lines += [
        "}",
        "",
        "fig, ax = plt.subplots(figsize=(6, 4))",
        "for name, pts in SERIES.items():",
        "    xs, ys = zip(*pts)",
        '    ax.loglog(xs, ys, marker="o", label=name)',
        'ax.set_xlabel("n * alpha^2")',
        'ax.set_ylabel("mean squared error")',
        "if SERIES:",
        "    ax.legend()",
        "fig.tight_layout()",
        'fig.savefig(__file__.rsplit(".", 1)[0] + ".png", dpi=150)',
        "",
    ]
    Path(path).write_text("\n".join(lines))


@dataclass(frozen=True)
class GofRow:
    protocol: str
    n: int
    alpha: float
    s: float
    separation: float
    statistic: float
    threshold: float
    decision: int

    HEADER = "protocol,n,alpha,s,separation,statistic,threshold,decision"

    def to_csv(self) -> str:
        return (f"{self.protocol},{self.n},{self.alpha!r},{self.s!r},{self.separation!r},"
                f"{self.statistic!r},{self.threshold!r},{self.decision}")


_GOF_KEY = 1 << 30  # stream key disjoint from simulation cells


def run_gof(cfg: ExperimentConfig) -> GofRow:
    """One test of the uniform null at the first grid point, data drawn at the configured separation."""
    n, alpha, s = cfg.n_grid[0], cfg.alpha_grid[0], cfg.s_grid[0]
    f0 = dn.DyadicDensity.uniform(0)
    g = gof.GofConfig(cfg.gof_protocol, f0, n, alpha, s, cfg.a, 1.0, cfg.gof_gamma, cfg.M, cfg.K)
    t = gof.gof_threshold(g)
    if cfg.gof_C is None:
        C = gof.calibrate_C(g, cfg.gof_calibration, replication_rng(cfg.seed, _GOF_KEY, 0))
    else:
        C = cfg.gof_C
    g = gof.GofConfig(cfg.gof_protocol, f0, n, alpha, s, cfg.a, C, cfg.gof_gamma, cfg.M, cfg.K)
    truth = gof.separated_alternative(f0, cfg.gof_separation * t)
    rng = replication_rng(cfg.seed, _GOF_KEY, 1)
    out = gof.gof_test(dn.sample(truth, n, rng), g, rng)
    return GofRow(cfg.gof_protocol, n, alpha, s, cfg.gof_separation, out.statistic, out.threshold, out.decision)
