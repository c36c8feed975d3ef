#!/usr/bin/env python3

"""
rmtlab - spectral norms of products of random and deterministic matrices

Monte Carlo checks of norm bounds for W = BA with A random and ‖B‖ ≤ 1,
plus the constructive tools behind them (nets, truncation, dyadic
decomposition, concentration bounds).

license: MIT
version: 1.0.0
status: Prototype
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

# Configure logging
log_level = os.getenv('LOG_LEVEL', 'INFO').upper()
logging.basicConfig(
    level=getattr(logging, log_level, logging.INFO),
    format='%(asctime)s - %(levelname)s - %(message)s',
    datefmt='%Y-%m-%d %H:%M:%S'
)
logger = logging.getLogger(__name__)

# ============================================================================
# MODULE ROUTER (Pass-throughs for the GUI)
# ============================================================================
from constants import EXIT_PASS, EXIT_CEILING, EXIT_CONFIG, EXIT_SOLVER, POWER_TOL
from catalog import ExperimentCatalog, ConfigManager, ConfigError
from concentration import run_concentration_audit, save_tabulation
from distributions import EntryDistribution, sample_matrix, describe
from experiments import run_experiment, save_report, load_records, fit_constant
from matrix_core import InequalityViolation, load_matrix, save_matrix
from spectral import spectral_norm, singular_values_full

__version__ = "1.0.0"


def _read_distribution(value: str) -> EntryDistribution:
    """--dist takes inline JSON or a path to a JSON file"""
    text = Path(value).read_text() if Path(value).is_file() else value
    try:
        return EntryDistribution.from_json(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--dist is neither a JSON file nor valid JSON: {exc}") from exc


# ============================================================================
# SUBCOMMANDS
# ============================================================================

def cmd_sample(args) -> int:
    dist = _read_distribution(args.dist)
    m = sample_matrix(dist, args.rows, args.cols, args.seed)
    save_matrix(m, args.out)
    print(f"🎲 Sampled {args.rows}x{args.cols} from {describe(dist)}, seed {args.seed}")
    print(f"💾 Saved to: {os.path.abspath(args.out)}")
    return EXIT_PASS


def cmd_norm(args) -> int:
    m = load_matrix(args.input)
    if args.method == 'power':
        result = spectral_norm(m, tol=args.tol, seed=args.seed)
        flag = '' if result.converged else '  (NOT converged)'
        print(f"‖W‖ = {result.value:.17g}  [{result.iterations} iterations, residual {result.residual:.3e}]{flag}")
    else:
        values = singular_values_full(m)
        print(f"‖W‖ = {values[0]:.17g}")
        if args.verbose:
            print("singular values: " + ' '.join(f"{v:.17g}" for v in values))
    return EXIT_PASS


def cmd_experiment_run(args) -> int:
    cfg = ConfigManager.load_config(args.config)
    print(f"🧪 {cfg.experiment}: {ExperimentCatalog.get_description(cfg.experiment)}")
    print(f"📐 dims {cfg.dims}, {cfg.trials} trials, {describe(cfg.distribution)}, B {cfg.b_factor.kind}")
    report = run_experiment(cfg, workers=args.workers)
    save_report(report, args.out)
    print(f"📈 fitted C = {report.fitted_constant:.6g} (quantile {report.quantile}), "
          f"mean ratio {report.mean_ratio:.6g} ± {report.ratio_standard_error:.2g}")
    for name, ok in report.checks.items():
        print(f"   {'✅' if ok else '❌'} {name}")
    if args.verbose and report.extras:
        print(json.dumps(report.extras, indent=2, default=str))
    print(f"💾 Saved to: {os.path.abspath(args.out)}")
    if report.ceiling is not None:
        print(f"{'✅' if report.fitted_constant <= report.ceiling else '❌'} ceiling {report.ceiling}")
    return EXIT_PASS if report.passed else EXIT_CEILING


def cmd_experiment_fit(args) -> int:
    records = load_records(args.input)
    fitted = fit_constant(records, args.quantile)
    print(f"📈 fitted C = {fitted:.17g} over {len(records)} records (quantile {args.quantile})")
    if args.ceiling is not None and fitted > args.ceiling:
        print(f"❌ above ceiling {args.ceiling}")
        return EXIT_CEILING
    return EXIT_PASS


def cmd_audit(args) -> int:
    table = run_concentration_audit(args.trials, args.seed, ts=args.ts)
    save_tabulation(table, args.out)
    for audit, rows in table.groupby('audit', sort=False):
        ok = bool(rows['dominated'].all())
        print(f"   {'✅' if ok else '❌'} {audit}: " +
              ', '.join(f"t={r.t:g} emp {r.empirical:.4g} ≤ {r.bound:.4g}" for r in rows.itertuples()))
    print(f"💾 Saved to: {os.path.abspath(args.out)}")
    return EXIT_PASS if bool(table['dominated'].all()) else EXIT_CEILING


def cmd_list(args) -> int:
    for name in ExperimentCatalog.get_all_experiments():
        print(f"  {name:22s} {ExperimentCatalog.get_description(name)}")
    return EXIT_PASS


# ============================================================================
# COMMAND LINE INTERFACE
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='rmtlab',
        description=f'rmtlab v{__version__} - spectral norms of W = BA',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python rmtlab.py sample --dist '{"kind": "rademacher"}' --rows 50 --cols 40 --seed 7 --out a.txt
  python rmtlab.py norm --in a.txt --method full
  python rmtlab.py experiment run --config configs/main_bound.json --out main.csv --workers 8
  python rmtlab.py experiment fit --in main.csv --quantile 0.9
  python rmtlab.py audit --trials 100000 --seed 1 --out tails.csv
        """
    )
    parser.add_argument('--verbose', '-v', action='store_true', help='Verbose output')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('sample', help='Sample a random matrix to the text format')
    p.add_argument('--dist', required=True, help='Distribution JSON, inline or a file path')
    p.add_argument('--rows', type=int, required=True)
    p.add_argument('--cols', type=int, required=True)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out', '-o', required=True, help='Output matrix file')
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser('norm', help='Spectral norm of a matrix file')
    p.add_argument('--in', dest='input', required=True, help='Input matrix file')
    p.add_argument('--method', choices=['power', 'full'], default='power')
    p.add_argument('--tol', type=float, default=POWER_TOL, help='Power iteration tolerance')
    p.add_argument('--seed', type=int, default=0, help='Power iteration start seed')
    p.set_defaults(func=cmd_norm)

    p = sub.add_parser('experiment', help='Run or summarize a Monte Carlo experiment')
    exp_sub = p.add_subparsers(dest='action', required=True)
    q = exp_sub.add_parser('run', help='Run an experiment config')
    q.add_argument('--config', required=True, help='Experiment JSON config')
    q.add_argument('--out', '-o', required=True, help='Output report CSV')
    q.add_argument('--workers', type=int, default=1, help='Worker threads')
    q.set_defaults(func=cmd_experiment_run)
    q = exp_sub.add_parser('fit', help='Fit a constant from a report CSV')
    q.add_argument('--in', dest='input', required=True, help='Report CSV')
    q.add_argument('--quantile', type=float, default=1.0)
    q.add_argument('--ceiling', type=float, default=None)
    q.set_defaults(func=cmd_experiment_fit)

    p = sub.add_parser('audit', help='Tabulate concentration bounds against empirical tails')
    p.add_argument('--trials', type=int, default=100000)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--ts', type=float, nargs='+', default=[1.0, 2.0, 3.0])
    p.add_argument('--out', '-o', required=True, help='Output tabulation CSV')
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser('list', help='List the registered experiments')
    p.set_defaults(func=cmd_list)
    return parser


def main(argv=None) -> int:
    """CLI interface"""
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    try:
        return args.func(args)
    except ConfigError as exc:
        logger.error(str(exc))
        print(f"❌ {exc}")
        return EXIT_CONFIG
    except InequalityViolation as exc:
        logger.error(f"Inequality violated during run: {exc}")
        print(f"❌ Inequality violated: {exc}")
        return EXIT_CEILING
    except (ValueError, OSError) as exc:
        logger.error(str(exc))
        print(f"❌ {exc}")
        return EXIT_CONFIG
    except RuntimeError as exc:
        logger.error(f"Solver failure: {exc}")
        print(f"❌ Solver failure: {exc}")
        return EXIT_SOLVER


if __name__ == "__main__":
    if len(sys.argv) > 1:
        sys.exit(main())
    else:
        print(f"rmtlab v{__version__}")
        print("\nUsage:")
        print("  python rmtlab.py experiment run --config configs/main_bound.json --out main.csv")
        print("  python rmtlab.py audit --trials 100000 --seed 1 --out tails.csv")
        print("\nRun with --help for all options")
