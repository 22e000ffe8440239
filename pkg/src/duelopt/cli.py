"""Command-line front end: experiment runs, cost-ratio sweeps, oracle checks."""

from __future__ import annotations

import argparse
import sys

from . import harness


def _parse_ratio_list(text: str) -> list[float]:
    try:
        ratios = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise harness.ConfigError(f"--ratios: cannot parse {text!r} as numbers")
    if not ratios:
        raise harness.ConfigError("--ratios: empty list")
    return ratios


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="duelopt",
        description="Budgeted optimization experiments mixing labels and duels.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the (policy x budget x seed) grid")
    p_run.add_argument("--config", required=True, help="YAML experiment config")
    p_run.add_argument("--out", default=None, help="output directory for CSVs")
    p_run.add_argument("--workers", type=int, default=None,
                       help="parallel run workers (default: config value)")
    p_run.add_argument("--master-seed", type=int, default=None,
                       help="override the config's master seed")

    p_sweep = sub.add_parser("sweep-ratio",
                             help="rerun at several label/comparison cost ratios")
    p_sweep.add_argument("--config", required=True, help="YAML experiment config")
    p_sweep.add_argument("--ratios", default=None,
                         help="comma-separated ratios, e.g. 1,2,5,10")
    p_sweep.add_argument("--out", default=None, help="output directory for CSVs")
    p_sweep.add_argument("--workers", type=int, default=None,
                         help="parallel run workers (default: config value)")
    p_sweep.add_argument("--master-seed", type=int, default=None,
                         help="override the config's master seed")

    p_ver = sub.add_parser("verify-oracle",
                           help="measure surface constants and check duel frequencies")
    p_ver.add_argument("--benchmark", required=True,
                       choices=("currin", "borehole", "synthetic1d"))
    p_ver.add_argument("--link", default="logistic",
                       choices=("logistic", "probit", "linear"))
    p_ver.add_argument("--points", type=int, default=20,
                       help="number of probe points (default 20)")
    p_ver.add_argument("--draws", type=int, default=100_000,
                       help="Monte-Carlo duels per probe point (default 100000)")
    p_ver.add_argument("--seed", type=int, default=0)
    return parser


def _cmd_run(args) -> int:
    config = harness.load_config(args.config)
    steps, agg = harness.run_experiment(config, out_dir=args.out,
                                        workers=args.workers,
                                        master_seed=args.master_seed)
    print(f"wrote {steps}")
    print(f"wrote {agg}")
    return 0


def _cmd_sweep(args) -> int:
    config = harness.load_config(args.config)
    ratios = None if args.ratios is None else _parse_ratio_list(args.ratios)
    agg = harness.sweep_cost_ratio(config, ratios=ratios, out_dir=args.out,
                                   workers=args.workers,
                                   master_seed=args.master_seed)
    print(f"wrote {agg}")
    return 0


def _cmd_verify(args) -> int:
    if args.points < 1 or args.draws < 1:
        raise harness.ConfigError("--points and --draws must be >= 1")
    report = harness.verify_oracle(args.benchmark, args.link,
                                   n_points=args.points, n_draws=args.draws,
                                   seed=args.seed)
    print(f"benchmark={report.benchmark} link={report.link}")
    print(f"zeta_hat={report.zeta_hat!r}")
    print(f"L1_hat={report.l1_hat!r}")
    print(f"L2_hat={report.l2_hat!r}")
    print(f"duel_frequency_check: {report.points_within}/{report.n_points} probe "
          f"points within 3 standard errors over {report.n_draws} draws "
          f"(worst deviation {report.max_se_multiples:.3f} SE)")
    if not report.ok:
        print("FAIL")
        return 1
    print("PASS")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "sweep-ratio": _cmd_sweep,
               "verify-oracle": _cmd_verify}[args.command]
    try:
        return handler(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
