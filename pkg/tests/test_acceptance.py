"""Acceptance criteria 1 to 11, each at its stated tolerance.

Every test records a one-line verdict that is echoed in the terminal summary.
Criteria 6, 7 and 9 run full Monte Carlo sweeps and take several minutes.
"""

import math

import numpy as np
import pytest

from ldpquad import audit, channel_ni as ni, channel_si as si, density as dn, functionals as fn, gof, haar, harness

from .conftest import record

A_GRID = (1.5, 2.0, 3.0)
ALPHA_GRID = (0.1, 0.5, 1.0)
RATE_N = tuple(2**k for k in range(10, 18))
RATE_LEVELS = tuple(range(0, 15))


def se_gap(samples, target):
    """|mean - target| in standard errors."""
    x = np.asarray(samples, dtype=float)
    return abs(x.mean() - target) / (x.std(ddof=1) / math.sqrt(x.size))


def rate_config(protocols, n_grid, s, replications, seed):
    spec = dn.BesovSpec(s, 1.0, RATE_LEVELS, seed=7)
    delta = 0.9 * dn.max_admissible_delta(spec)
    return harness.ExperimentConfig(protocols=protocols, n_grid=n_grid, s_grid=(s,), generator="besov", delta=delta,
                                    levels=RATE_LEVELS, sign_seed=7, M=2.0, replications=replications, seed=seed)


def test_criterion_01_analytic_privacy():
    worst = 0.0
    ok = True
    for J in range(1, 25):
        for a in A_GRID:
            for alpha in ALPHA_GRID:
                b = ni.ni_logratio_bound(ni.NiConfig(alpha, a, J))
                worst = max(worst, b / alpha)
                ok &= b <= alpha
    rr_err = 0.0
    for alpha in ALPHA_GRID:
        for tau in (1.0, 4.0, 128.0):
            rep = audit.audit_rr(tau, alpha, 10_001)
            rr_err = max(rr_err, abs(math.exp(rep.empirical) - math.exp(alpha)))
            ok &= rep.passed
    ok &= rr_err <= 1e-12
    record(1, ok, f"max bound/alpha = {worst:.4f} over 216 NI configs; max |rr ratio - e^alpha| = {rr_err:.2e}")
    assert ok


def test_criterion_02_empirical_privacy():
    rng = np.random.default_rng(2)
    margin = math.inf
    for J in range(1, 25):
        for a in A_GRID:
            for alpha in ALPHA_GRID:
                rep = audit.audit_ni(ni.NiConfig(alpha, a, J), 10_000, rng)
                margin = min(margin, rep.analytic - rep.empirical)
    ok = margin >= -audit.SLACK
    record(2, ok, f"min (analytic - empirical) = {margin:.3e} over 216 configs x 1e4 triples")
    assert ok


def test_criterion_03_oracle_equivalence():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        n, J = int(rng.integers(2, 201)), int(rng.integers(1, 7))
        Z = rng.normal(loc=rng.normal(size=1 << J), scale=rng.uniform(0.1, 10), size=(n, 1 << J))
        G = Z @ Z.T
        naive = math.fsum(G[~np.eye(n, dtype=bool)].tolist()) / (n * (n - 1))
        worst = max(worst, abs(ni.estimate_quadratic_ni(Z) - naive) / abs(naive))
    ok = worst <= 1e-10
    record(3, ok, f"max relative error {worst:.2e} over 100 inputs")
    assert ok


def test_criterion_04_exactness():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(100):
        R, J = int(rng.integers(0, 9)), int(rng.integers(1, 11))
        d = dn.random_density(R, rng, concentration=float(rng.uniform(0.2, 5)))
        D_oracle = math.fsum((d.values**2).tolist()) / d.values.size
        head = haar.exact_coeffs(d, J).energy()
        tail = haar.tail_energy(d, J)
        errs = [abs(dn.quad_functional(d) - D_oracle), abs(head + tail - D_oracle)]
        if J >= R:
            errs += [abs(head - D_oracle), tail]
        full = haar.exact_coeffs(d, max(R, 1)).energy()
        errs.append(abs(full - D_oracle))
        worst = max(worst, max(errs) / D_oracle)
    ok = worst <= 1e-12
    record(4, ok, f"max relative deviation {worst:.2e} over 100 densities")
    assert ok


def test_criterion_05_unbiasedness():
    rng = np.random.default_rng(5)
    d = dn.make_besov_density(dn.BesovSpec(0.5, 0.3, (0, 1, 2, 3), seed=5))
    reps, n, J = 10_000, 200, 3
    cfg = ni.NiConfig(1.0, 2.0, J)
    beta = haar.exact_coeffs(d, J).values
    B = np.empty((reps, 1 << J))
    U = np.empty(reps)
    for r in range(reps):
        x = dn.sample(d, n, rng)
        s = ni.summarize(x, cfg, rng)
        B[r] = s.total / n
        U[r] = ni.u_statistic(s)
    gaps = {f"beta{p}": se_gap(B[:, p], beta[p]) for p in range(1 << J)}
    gaps["D"] = se_gap(U, haar.exact_coeffs(d, J).energy())

    si_cfg = si.SiConfig(1.0, J, si.select_tau(2, d.sup, J, 2.0, 0.5), d.sup)
    pilot = si.stage1_from_sample(dn.sample(d, 500, rng), si_cfg.ni, rng)
    for x in (0.05, 0.3, 0.62, 0.99):
        u = si.clamp(pilot(x), si_cfg.tau)
        z = si.randomized_response(np.full(reps * 10, u), si_cfg.tau, si_cfg.alpha, rng)
        gaps[f"stage2@{x}"] = se_gap(z, u)
    worst = max(gaps, key=gaps.get)
    ok = all(g <= 4 for g in gaps.values())
    record(5, ok, f"largest gap {gaps[worst]:.2f} SE ({worst}) over {len(gaps)} checks, >= 1e4 replications each")
    assert ok


@pytest.fixture(scope="module")
def rate_rows():
    rows = {}
    for s in (0.3, 1.0):
        rows[s] = harness.run_experiment(rate_config(("ni", "si"), RATE_N, s, 200, seed=6))
    return rows


def test_criterion_06_rates(rate_rows):
    f = {(p, s): harness.fit_rate(rate_rows[s], p) for p in ("ni", "si") for s in (0.3, 1.0)}
    checks = {
        "NI s=0.3 in [-0.72,-0.42]": -0.72 <= f["ni", 0.3].slope <= -0.42,
        "SI s=0.3 in [-0.90,-0.60]": -0.90 <= f["si", 0.3].slope <= -0.60,
        "SI < NI at s=0.3": f["si", 0.3].slope < f["ni", 0.3].slope,
        "NI s=1 in [-1.15,-0.85]": -1.15 <= f["ni", 1.0].slope <= -0.85,
        "SI s=1 in [-1.15,-0.85]": -1.15 <= f["si", 1.0].slope <= -0.85,
    }
    slopes = ", ".join(f"{p.upper()} s={s}: {fit.slope:+.3f}+-{fit.slope_se:.3f}" for (p, s), fit in f.items())
    failed = [k for k, v in checks.items() if not v]
    ok = not failed
    record(6, ok, f"{slopes}; failed: {failed or 'none'}")
    assert ok, failed


def test_criterion_07_head_to_head():
    rows = harness.run_experiment(rate_config(("ni", "si"), (2**17,), 0.3, 500, seed=7))
    mse = {p: float(np.mean([r.sq_error for r in rows if r.protocol == p])) for p in ("ni", "si")}
    se = {p: float(np.std([r.sq_error for r in rows if r.protocol == p], ddof=1) / math.sqrt(500)) for p in mse}
    ok = mse["si"] < mse["ni"]
    record(7, ok, f"MSE SI {mse['si']:.4g} (se {se['si']:.3g}) vs NI {mse['ni']:.4g} (se {se['ni']:.3g}) at n=2^17, 500 reps")
    assert ok


def test_criterion_08_concentration():
    rng = np.random.default_rng(8)
    d = dn.make_besov_density(dn.BesovSpec(0.5, 0.3, (0, 1, 2, 3), seed=8))
    rows = audit.concentration_check(1000, ni.NiConfig(1.0, 2.0, 4), (2.0, 4.0, 8.0), 10_000, rng, d=d)
    ok = all(r.ok for r in rows)
    record(8, ok, "; ".join(f"u={r.u:g}: tail {r.empirical:.4f} <= {r.bound:.4f}" for r in rows))
    assert ok


def _gof_run(protocol, rng, s=0.3, n=2**15, calib=500, level_reps=1000, power_reps=500):
    f0 = dn.DyadicDensity.uniform(0)
    base = gof.GofConfig(protocol, f0, n, 1.0, s, 2.0)
    t = gof.gof_threshold(base)
    alt = gof.separated_alternative(f0, 5 * t)
    M = alt.sup  # the alternative must respect the sup-norm bound of the class
    base = gof.GofConfig(protocol, f0, n, 1.0, s, 2.0, M=M)
    C = gof.calibrate_C(base, calib, rng)
    cfg = gof.GofConfig(protocol, f0, n, 1.0, s, 2.0, C=C, M=M)
    level = np.mean([gof.gof_test(dn.sample(f0, n, rng), cfg, rng).decision for _ in range(level_reps)])
    power = np.mean([gof.gof_test(dn.sample(alt, n, rng), cfg, rng).decision for _ in range(power_reps)])
    return level, power, t, C


def test_criterion_09_goodness_of_fit():
    rng = np.random.default_rng(9)
    res = {p: _gof_run(p, rng) for p in ("ni", "si")}
    checks = {}
    for p, (level, power, _, _) in res.items():
        checks[f"{p} level<=0.10"] = level <= 0.10
        checks[f"{p} power>=0.8"] = power >= 0.8
    checks["SI power >= NI power"] = res["si"][1] >= res["ni"][1]
    detail = "; ".join(f"{p.upper()}: level {lv:.3f}, power {pw:.3f}, 5*phi_n {5 * t:.3g}, C {C:.3g}"
                       for p, (lv, pw, t, C) in res.items())
    failed = [k for k, v in checks.items() if not v]
    ok = not failed
    record(9, ok, f"{detail}; failed: {failed or 'none'}")
    assert ok, failed


def test_criterion_10_integral_functionals():
    rng = np.random.default_rng(10)
    d = dn.DyadicDensity([1.6, 0.6, 1.2, 0.6])
    J = 2
    cfg = si.SiConfig(1.0, J, si.select_tau(2, 2.0, J, 2.0, 0.5), 2.0)
    quad = [fn.integral_functional_estimate(dn.sample(d, 6 * 2**11, rng), fn.SmoothFunctional.quadratic(), cfg, rng, True)
            for _ in range(2000)]
    q_gap = se_gap([e.value for e in quad], dn.quad_functional(d))
    q_rem = max(e.remainder_bound for e in quad)

    phi = fn.SmoothFunctional.entropy(0.5, 2.0)
    exact = dn.integral_functional(d, lambda t: t * np.log(t))
    gaps, mses = [], []
    for n in (2**12, 2**14, 2**16):
        est = np.array([fn.integral_functional_estimate(dn.sample(d, n // 6 * 6, rng), phi, cfg, rng, True).value
                        for _ in range(1000)])
        gaps.append(se_gap(est, exact))
        mses.append(float(np.mean((est - exact) ** 2)))
    ok = q_gap <= 4 and q_rem == 0.0 and max(gaps) <= 4 and mses[0] > mses[1] > mses[2]
    record(10, ok, f"quadratic gap {q_gap:.2f} SE, remainder {q_rem}; entropy gaps "
                   f"{', '.join(f'{g:.2f}' for g in gaps)} SE; MSE {', '.join(f'{m:.3g}' for m in mses)}")
    assert ok


def test_criterion_11_determinism():
    cfg = rate_config(("ni", "si"), (512, 1024, 2048, 4096), 0.3, 6, seed=11)
    a = harness.rows_to_csv(harness.run_experiment(cfg, workers=1))
    b = harness.rows_to_csv(harness.run_experiment(cfg, workers=1))
    c = harness.rows_to_csv(harness.run_experiment(cfg, workers=3))
    ok = a == b == c
    record(11, ok, f"serial/serial/parallel CSVs identical ({len(a)} bytes)")
    assert ok
