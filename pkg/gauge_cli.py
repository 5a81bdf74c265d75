#!/usr/bin/env python3
"""Command-line interface for the gauge-fixing experiments."""

import argparse
import json
import sys
import logging
from pathlib import Path

from src.config.settings import ExperimentConfig, emit_schema
from src.core.errors import ConfigInvalid
from src.core.experiments import list_experiments, run_experiment

EXIT_ERROR = 2


def setup_cli_logging(verbose: bool = False):
    """Setup logging for CLI mode."""
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(levelname)s - %(message)s'
    )


def run_config(args) -> int:
    """Run one experiment config and return the exit code."""
    logger = logging.getLogger(__name__)

    config_path = Path(args.config)
    config = ExperimentConfig.load_from_file(config_path)
    if args.seed is not None:
        config.seed = args.seed
        logger.info(f"Seed overridden: {args.seed}")

    summary = run_experiment(config, args.output_dir, str(config_path))
    print(f"{summary.experiment}: {summary.status.upper()}"
          + (f" ({summary.outcome.reason})" if summary.outcome.reason else ""))
    for path in summary.outcome.artifacts:
        print(f"  {path}")
    return summary.exit_code


def print_catalog():
    for entry in list_experiments():
        print(f"{entry['name']:<20} {entry['description']}")


def main(argv=None):
    """CLI entry point."""
    parser = argparse.ArgumentParser(
        description="Gauge lab - rotating-frame gauge fixing experiments"
    )

    subparsers = parser.add_subparsers(dest='command', help='Commands')

    # Run command
    run_parser = subparsers.add_parser('run', help='Run the experiment named in a config file')
    run_parser.add_argument('config', help='JSON experiment config')
    run_parser.add_argument(
        '--output-dir', '-o',
        help='Artifact directory (overrides GAUGELAB_OUTPUT_DIR and the config)'
    )
    run_parser.add_argument(
        '--seed',
        type=int,
        help='Override the config seed'
    )
    run_parser.add_argument(
        '--verbose',
        action='store_true',
        help='Enable verbose logging'
    )

    subparsers.add_parser('list', help='List available experiments')
    subparsers.add_parser('schema', help='Print the config schema as JSON')

    args = parser.parse_args(argv)

    if args.command == 'run':
        setup_cli_logging(args.verbose)
        try:
            code = run_config(args)
        except ConfigInvalid as e:
            logging.error(f"Invalid config: {e}")
            sys.exit(EXIT_ERROR)
        except Exception as e:
            logging.error(f"Error: {e}")
            sys.exit(EXIT_ERROR)
        sys.exit(code)
    elif args.command == 'list':
        print_catalog()
    elif args.command == 'schema':
        print(json.dumps(emit_schema(), indent=2))
    else:
        parser.print_help()
        sys.exit(EXIT_ERROR)


if __name__ == "__main__":
    main()
