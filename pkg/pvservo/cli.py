import argparse
import logging
import sys

from pydantic import ValidationError

from .config import config_schema, dump_config, load_config
from .exceptions import UnknownPresetError
from .export import export_batch, export_log
from .harness import run_batch, run_scenario
from .presets import PRESET_DESCRIPTIONS, experiment_presets

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def build_parser():
    parser = argparse.ArgumentParser(prog='pvservo', description='Visual servoing + NMPC inspection simulator')
    parser.add_argument('--log-level', default='INFO', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    commands = parser.add_subparsers(dest='command', required=True)

    run = commands.add_parser('run', help='run a scenario or batch')
    source = run.add_mutually_exclusive_group(required=True)
    source.add_argument('--config', help='scenario configuration (JSON)')
    source.add_argument('--preset', help='named experiment preset')
    run.add_argument('--seed', type=int)
    run.add_argument('--out', default='pvservo-out', help='output directory')
    run.add_argument('--csv', action='store_true', help='write the per-cycle CSV logs')
    run.add_argument('--plots', action='store_true', help='write plot images (needs matplotlib)')
    run.add_argument('--mode', choices=['vs', 'vs-nmpc'])
    run.add_argument('--duration', type=float)

    commands.add_parser('presets', help='list experiment presets')

    config = commands.add_parser('config', help='write a preset as a configuration file')
    config.add_argument('--preset', required=True)
    config.add_argument('--out', help='file to write (prints to stdout when omitted)')

    commands.add_parser('schema', help='print the configuration JSON schema')
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format=LOG_FORMAT)
    try:
        return _COMMANDS[args.command](args)
    except (UnknownPresetError, ValidationError, ValueError) as exc:
        print(f'pvservo: error: {exc}', file=sys.stderr)
        return 2
    except OSError as exc:
        print(f'pvservo: error: {exc}', file=sys.stderr)
        return 1


def _load(args):
    config = load_config(args.config) if args.config else experiment_presets(args.preset)
    update = {}
    if args.seed is not None:
        update['seed'] = args.seed
    if args.mode is not None:
        update['mode'] = args.mode
    if args.duration is not None:
        update['duration'] = args.duration
    if update:
        # re-validate so overrides obey the same checks as a config file
        config = type(config).model_validate({**config.model_dump(), **update})
    return config


def _run(args):
    config = _load(args)
    if config.batch:
        logs = run_batch(config)
        export_batch(logs, args.out, plots=args.plots)
        failed = sum(log.failed for log in logs)
    else:
        log = run_scenario(config)
        export_log(log, args.out, csv_files=args.csv, plots=args.plots)
        failed = int(log.failed)
    return 0 if not failed else 3


def _presets(args):
    width = max(len(name) for name in PRESET_DESCRIPTIONS)
    for name, description in PRESET_DESCRIPTIONS.items():
        print(f'{name:<{width}}  {description}')
    return 0


def _config(args):
    text = dump_config(experiment_presets(args.preset), args.out)
    if args.out is None:
        print(text)
    return 0


def _schema(args):
    print(config_schema())
    return 0


_COMMANDS = {
    'run': _run,
    'presets': _presets,
    'config': _config,
    'schema': _schema,
}
