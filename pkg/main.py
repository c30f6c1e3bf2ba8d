#!/usr/bin/env python3
import argparse
import json
import os
import sys

import pandas as pd

from src.config_loader import ConfigLoader
from src.errors import ConfigError, SimError, SimulationFailed
from src.evt import fit_excess
from src.logger import setup_logger
from src.metrics import ccdf_table
from src.presets import PRESETS, get_preset, run_preset
from src.reporting import read_excess, write_csv_atomic, write_run_outputs
from src.simulator import SWEEP_AXES, Simulator, sweep


def build_parser():
    parser = argparse.ArgumentParser(
        prog='v2v-aoi',
        description='Slotted V2V simulator for the tail of the age of information',
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='YAML config file (default: $V2V_CONFIG or config.yaml)')
    common.add_argument('--seed', type=int, help='master RNG seed')
    common.add_argument('--slots', type=int, help='simulated slots per run')
    common.add_argument('--policy', help='proposed | uniform | fixed:<watts>')
    common.add_argument('--preset', choices=sorted(PRESETS), help='experiment preset')
    common.add_argument('--out', default='results', help='output directory')
    common.add_argument('--trace', action='store_true', default=None, help='write per-slot records')

    sub = parser.add_subparsers(dest='command', required=True)

    sub.add_parser('run', parents=[common], help='one simulation run')

    sweep_parser = sub.add_parser('sweep', parents=[common], help='independent runs over one axis')
    sweep_parser.add_argument('--axis', choices=SWEEP_AXES)
    sweep_parser.add_argument('--values', help='comma-separated axis values')
    sweep_parser.add_argument('--workers', type=int, default=1)

    fit_parser = sub.add_parser('fit', help='GPD fit of an excess-sample dump')
    fit_parser.add_argument('input', help='CSV with an "excess" column')
    fit_parser.add_argument('--method', choices=('moments', 'mle'), default='moments')
    fit_parser.add_argument('--min-samples', type=int, default=100)
    fit_parser.add_argument('--out', default='results')

    return parser


def _overrides(args):
    preset = get_preset(args.preset) if getattr(args, 'preset', None) else None
    overrides = dict(preset.overrides) if preset else {}
    overrides.update({'seed': args.seed, 'slots': args.slots, 'policy': args.policy, 'trace': args.trace})
    return preset, overrides


def cmd_run(args, logger):
    preset, overrides = _overrides(args)
    config = ConfigLoader(args.config, overrides)
    params = config.params()
    if preset:
        params = preset.apply(params)

    policies = preset.policies if preset and args.policy is None else (config.policy,)
    results = []
    for policy in policies:
        out_dir = os.path.join(args.out, policy.replace(':', '_')) if len(policies) > 1 else args.out
        try:
            summary = Simulator(params, logger, trace_dir=out_dir).run(policy)
        except SimulationFailed as e:
            if e.partial is not None:
                write_run_outputs(e.partial, out_dir, logger)
            raise
        write_run_outputs(summary, out_dir, logger)
        results.append({'policy': policy, 'out': out_dir, 'mean_aoi': summary.aggregate['mean_aoi'],
                        'p_aoi_violation': summary.aggregate['p_aoi_violation'],
                        'tally_holds': summary.tally.holds})
    return {'status': 'ok', 'runs': results}


def cmd_sweep(args, logger):
    preset, overrides = _overrides(args)
    config = ConfigLoader(args.config, overrides)
    params = config.params()
    if preset:
        params = preset.apply(params)

    if preset and not args.axis:
        if preset.axis is None:
            raise ConfigError(f"Preset {preset.name} has no sweep axis")
        table = run_preset(preset, params, sweep, args.workers, logger, out_dir=args.out)
    else:
        if not args.axis or not args.values:
            raise ConfigError("sweep needs --axis and --values (or a preset)")
        try:
            values = [float(v) for v in args.values.split(',') if v.strip()]
        except ValueError as e:
            raise ConfigError(f"Bad --values list {args.values!r}: {e}") from e
        table = sweep(params, args.axis, values, config.policy, args.workers, logger, out_dir=args.out)

    path = write_csv_atomic(table, os.path.join(args.out, 'sweep.csv'), logger)
    failed = int((table['status'] != 'ok').sum())
    return {'status': 'ok', 'out': path, 'points': len(table), 'failed': failed}


def cmd_fit(args, logger):
    samples = read_excess(args.input)
    report = fit_excess(samples, args.method, args.min_samples, logger)
    write_csv_atomic(
        pd.DataFrame([report.to_row()]), os.path.join(args.out, 'gpd_fit.csv'), logger)
    write_csv_atomic(ccdf_table(samples, report.params), os.path.join(args.out, 'ccdf_excess.csv'), logger)
    return {'status': 'ok', **report.to_row()}


COMMANDS = {'run': cmd_run, 'sweep': cmd_sweep, 'fit': cmd_fit}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logger = setup_logger()

    logger.info("=" * 70)
    logger.info(f"V2V AoI-tail simulator - {args.command}")
    logger.info("=" * 70)

    try:
        result = COMMANDS[args.command](args, logger)
    except SimError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(json.dumps({'status': 'error', 'type': type(e).__name__, 'message': str(e)}), file=sys.stderr)
        return 2
    except Exception as e:
        logger.exception(f"Unexpected error: {e}")
        print(json.dumps({'status': 'error', 'type': type(e).__name__, 'message': str(e)}), file=sys.stderr)
        return 1

    print(json.dumps(result, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
