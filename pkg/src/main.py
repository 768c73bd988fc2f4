"""
Command-line surface: solve, bench, gen-hard, gen-recovery and check.

Exit codes: 0 on success, 1 when a run or an invariant suite failed,
2 on usage and configuration errors.
"""
import argparse
import os
import sys

from checks import SUITES, run_checks
from errors import ConfigError, InvalidArgumentError, RegSparseError
from harness import ALGOS, ExperimentConfig, ExperimentRunner, summary_path
from instances import gen_hard_instance, gen_recovery_instance, save_svmlight
from utils import ConfigManager

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def add_run_flags(parser):
    """Flags shared by `solve` and `bench`; unset flags keep the configured value."""
    parser.add_argument('--algo', choices=ALGOS)
    parser.add_argument('--s', type=int, help='target sparsity s (or rank r for lowrank)')
    parser.add_argument('--s-prime', dest='s_prime', type=int, help="relaxed sparsity s' (or rank r')")
    parser.add_argument('--eta', type=float, help='fixed step size')
    parser.add_argument('--c', type=float, help='fixed weight step size')
    parser.add_argument('--iters', type=int, help='number of iterations T')
    parser.add_argument('--seed', type=int)
    parser.add_argument('--data', help='svmlight file; replaces the instance generator')
    parser.add_argument('--task', choices=('ls', 'logistic'))
    parser.add_argument('--rho', type=float, help='ridge coefficient of the logistic loss')
    parser.add_argument('--out', help='per-iteration CSV')
    parser.add_argument('--theory-mode', dest='theory_mode', action='store_true', default=None)
    parser.add_argument('--revert', action='store_true', default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='regsparse', description='Sparse and low-rank convex optimization runs.')
    sub = parser.add_subparsers(dest='command', required=True)

    solve = sub.add_parser('solve', help='one run with the configured parameters')
    solve.add_argument('--config', help='YAML config file (defaults to $REGSPARSE_CONFIG or src/config.yaml)')
    add_run_flags(solve)

    bench = sub.add_parser('bench', help='batch of runs described by a config file')
    bench.add_argument('config', help='YAML config file')
    add_run_flags(bench)

    hard = sub.add_parser('gen-hard', help='write the IHT lower-bound instance as svmlight')
    hard.add_argument('--kappa', type=int, default=20)
    hard.add_argument('--s', type=int, default=2)
    hard.add_argument('--s-prime', dest='s_prime', type=int, default=480)
    hard.add_argument('--delta', type=float, default=1e-3)
    hard.add_argument('--out', required=True)

    rec = sub.add_parser('gen-recovery', help='write a sparse recovery instance as svmlight')
    rec.add_argument('--m', type=int, default=100)
    rec.add_argument('--n', type=int, default=800)
    rec.add_argument('--s', type=int, default=10)
    rec.add_argument('--seed', type=int, default=0)
    rec.add_argument('--out', required=True)

    check = sub.add_parser('check', help='run the invariant suites')
    check.add_argument('suites', nargs='*', metavar='SUITE',
                       help=f'subset of {", ".join(SUITES)} (default: all)')
    return parser


def run_overrides(args) -> dict:
    keys = ('algo', 's', 's_prime', 'eta', 'c', 'iters', 'seed', 'data', 'task', 'rho', 'out', 'theory_mode',
            'revert')
    overrides = {key: getattr(args, key) for key in keys}
    if args.algo == 'lowrank':
        # s and s' name the target and relaxed rank of the matrix solver
        overrides['r'], overrides['r_prime'] = overrides.pop('s'), overrides.pop('s_prime')
    if args.algo is not None:
        overrides['algos'] = []
    return overrides


def command_run(args) -> int:
    if args.command == 'bench' and not os.path.isfile(args.config):
        raise ConfigError(f'config file {args.config} does not exist')
    ConfigManager.reset()
    ConfigManager.initialize(config_path=args.config)
    ConfigManager.apply_overrides(run_overrides(args))
    cfg = ExperimentConfig.from_config()
    runner = ExperimentRunner(cfg)
    if args.command == 'solve' and len(runner.plan()) != 1:
        raise ConfigError('solve runs a single algorithm, seed and sparsity level; use bench for batches')
    records = runner.run()
    for rec in records:
        if rec.failed:
            print(f'{rec.run_id} {rec.algo} seed={rec.seed}: FAILED ({rec.error})')
        else:
            print(f'{rec.run_id} {rec.algo} s={rec.s} seed={rec.seed} eta={rec.eta:.4g}: {rec.status}, '
                  f'f={rec.final_f:.6e} (from {rec.initial_f:.6e}) in {rec.wall_time:.2f}s')
    if cfg.out:
        print(f'Wrote {cfg.out} and {summary_path(cfg.out)}')
    return EXIT_FAILED if any(r.failed for r in records) else EXIT_OK


def command_gen_hard(args) -> int:
    inst = gen_hard_instance(args.kappa, args.s, args.s_prime, args.delta)
    save_svmlight(args.out, inst.A, inst.b)
    obj = inst.objective()
    print(f'Wrote {args.out}: n={inst.n}, f(x_bad)={obj.value(inst.x_bad):.6g}, f(x*)={obj.value(inst.x_star):.6g}')
    return EXIT_OK


def command_gen_recovery(args) -> int:
    inst = gen_recovery_instance(args.m, args.n, args.s, args.seed)
    save_svmlight(args.out, inst.A, inst.b)
    print(f'Wrote {args.out}: {args.m} x {args.n}, planted support {inst.x_true.nonzero()[0].tolist()}')
    return EXIT_OK


def command_check(args) -> int:
    unknown = [name for name in args.suites if name not in SUITES]
    if unknown:
        raise ConfigError(f'unknown check suite(s) {unknown}; choose from {list(SUITES)}')
    failed = 0
    for result in run_checks(args.suites or None):
        print(f'{"PASS" if result.passed else "FAIL"} {result.name}: {result.detail}')
        failed += not result.passed
    return EXIT_FAILED if failed else EXIT_OK


COMMANDS = {
    'solve': command_run,
    'bench': command_run,
    'gen-hard': command_gen_hard,
    'gen-recovery': command_gen_recovery,
    'check': command_check,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, InvalidArgumentError) as e:
        print(f'error: {e}', file=sys.stderr)
        return EXIT_USAGE
    except RegSparseError as e:
        print(f'error: {e}', file=sys.stderr)
        return EXIT_FAILED


if __name__ == '__main__':
    sys.exit(main())
