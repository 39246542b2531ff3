"""Command-line entry point: ``ldpquad <simulate|ratefit|audit|gof|plot> ...``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import audit, channel_ni, harness


def _simulate(args) -> int:
    cfg = harness.ExperimentConfig.load(args.config)
    rows = harness.run_experiment(cfg, workers=args.workers)
    out = args.out or cfg.output
    harness.write_csv(rows, out)
    print(f"wrote {len(rows)} rows to {out}")
    return 0


def _ratefit(args) -> int:
    rows = harness.read_csv(args.input)
    fit = harness.fit_rate(rows, args.protocol, args.alpha, args.s)
    print(f"protocol={args.protocol} points={fit.points} slope={fit.slope:.6f} se={fit.slope_se:.6f} "
          f"intercept={fit.intercept:.6f}")
    if fit.elbow is not None:
        print(f"elbow at n*alpha^2={fit.elbow:.6g}: slope {fit.slope_before:.6f} then {fit.slope_after:.6f}")
    else:
        print("no elbow detected")
    return 0


def _audit(args) -> int:
    if args.channel == "ni":
        cfg = channel_ni.NiConfig(args.alpha, args.a, args.J, args.sigma_variant)
        report = audit.audit_ni(cfg, args.trials, np.random.default_rng(args.seed))
    else:
        report = audit.audit_rr(args.tau, args.alpha, args.grid)
    print(report.to_text())
    if args.csv:
        path = Path(args.csv)
        new = not path.exists()
        with path.open("a") as fh:
            if new:
                fh.write(audit.AuditReport.CSV_HEADER + "\n")
            fh.write(report.to_csv_row() + "\n")
    return 0 if report.passed else 1


def _gof(args) -> int:
    cfg = harness.ExperimentConfig.load(args.config)
    row = harness.run_gof(cfg)
    verdict = "reject" if row.decision else "accept"
    print(f"{row.protocol}: statistic={row.statistic:.6g} threshold={row.threshold:.6g} -> {verdict} H0")
    path = Path(args.out or cfg.gof_output)
    new = not path.exists()
    with path.open("a") as fh:
        if new:
            fh.write(harness.GofRow.HEADER + "\n")
        fh.write(row.to_csv() + "\n")
    return 0


def _plot(args) -> int:
    rows = harness.read_csv(args.input)
    harness.emit_plot_script(rows, args.out, csv_path=args.input)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ldpquad", description="Locally private estimation of the integrated squared density.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a Monte Carlo sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=_simulate)

    p = sub.add_parser("ratefit", help="fit a log-log convergence slope")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--protocol", choices=harness.PROTOCOLS, required=True)
    p.add_argument("--alpha", type=float)
    p.add_argument("--s", type=float)
    p.set_defaults(func=_ratefit)

    p = sub.add_parser("audit", help="certify a channel's privacy ratio")
    p.add_argument("--channel", choices=("ni", "rr"), required=True)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--a", type=float, default=2.0)
    p.add_argument("--J", type=int, default=8)
    p.add_argument("--sigma-variant", choices=("normalized", "paper"), default="normalized")
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--grid", type=int, default=10_001)
    p.add_argument("--csv", help="append the report as a CSV row")
    p.set_defaults(func=_audit)

    p = sub.add_parser("gof", help="run one goodness-of-fit test")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="CSV to append to (default: experiment.gof_output)")
    p.set_defaults(func=_gof)

    p = sub.add_parser("plot", help="emit a matplotlib script for a results CSV")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_plot)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (harness.ConfigError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
