"""
Command-line front end for MCML estimation and the replication experiments.

    python cli.py fit --data mocks/toy_ybar075.csv --model toy --psi 0 --m 1000000 --seed 7
    python cli.py coverage --config mocks/coverage_toy.json --out coverage.json
    python cli.py psi-sweep --config mocks/psi_sweep_toy.json --psi=-1 --psi=0 --psi=1
    python cli.py compare-schemes --config mocks/compare_schemes_toy.json

Reports go to stdout as JSON (and to --out when given); logs go to stderr.
"""

import argparse
import logging
import sys
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from constants.constants import (
    EXIT_ESTIMATION_ERROR,
    EXIT_INPUT_ERROR,
    EXIT_OK,
    LOG_FILE,
    LOG_FORMAT,
    LOG_LEVEL,
    MODEL_KIND_AUTOLOGISTIC,
    MODEL_KIND_TOY,
    REPORT_KIND_COMPARE_SCHEMES,
    REPORT_KIND_COVERAGE,
    REPORT_KIND_FIT,
    REPORT_KIND_PSI_SWEEP,
)
from exceptions import ConfigError, EstimationError, InputError
from models.configs import ExperimentConfig
from models.reports import write_report
from services.dataset_loader import load_dataset
from services.experiment_service import ExperimentService
from services.importance_service import Instrumental

logger = logging.getLogger(__name__)


def configure_logging(level: Optional[str] = None) -> None:
    """Root logger to stderr, plus MCML_LOG_FILE when set; stdout stays clean for JSON."""
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if LOG_FILE:
        handlers.append(logging.FileHandler(LOG_FILE))
    logging.basicConfig(
        level=getattr(logging, (level or LOG_LEVEL).upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )


def _float_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(',') if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from e


def _int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(',') if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='mcml', description='Monte Carlo maximum likelihood toolkit')
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='JSON experiment config')
    common.add_argument('--seed', type=int, help='64-bit stream seed (overrides the config)')
    common.add_argument('--out', help='Write the JSON report here (records CSV alongside)')
    common.add_argument('--workers', type=int, help='Replication threads (overrides the config)')
    common.add_argument('--log-level', default=None, help='DEBUG, INFO, WARNING, ERROR')

    sub = parser.add_subparsers(dest='command', required=True)

    fit = sub.add_parser(REPORT_KIND_FIT, parents=[common], help='Fit one dataset')
    fit.add_argument('--data', required=True, help='Dataset CSV (y* response columns, x* covariates)')
    fit.add_argument('--model', choices=[MODEL_KIND_TOY, MODEL_KIND_AUTOLOGISTIC],
                     help='Builtin model (ignored when --config names one)')
    fit.add_argument('--rows', type=int, help='Autologistic lattice rows')
    fit.add_argument('--cols', type=int, help='Autologistic lattice columns')
    instrumental = fit.add_mutually_exclusive_group()
    instrumental.add_argument('--psi', type=_float_list, help='h = p(.|psi), comma-separated')
    instrumental.add_argument('--uniform', action='store_true', help='h uniform on the support')
    fit.add_argument('--m', type=int, help='Monte Carlo sample size')
    fit.add_argument('--level', type=float, help='Wald confidence level')

    sub.add_parser(REPORT_KIND_COVERAGE, parents=[common], help='Coverage / normality experiment')

    sweep = sub.add_parser(REPORT_KIND_PSI_SWEEP, parents=[common], help='MC-error variance over psi')
    sweep.add_argument('--psi', type=_float_list, action='append', help='One psi vector; repeat for a grid')

    compare = sub.add_parser(REPORT_KIND_COMPARE_SCHEMES, parents=[common], help='MCML against the Cappe scheme')
    compare.add_argument('--n-grid', type=_int_list, help='Comma-separated dataset sizes')
    return parser


def _resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Load --config (or build one from flags for fit) and apply command-line overrides."""
    if args.config:
        payload: Dict[str, Any] = ExperimentConfig.from_file(args.config).model_dump()
    elif args.command == REPORT_KIND_FIT:
        payload = {'model': {'kind': args.model or MODEL_KIND_TOY, 'rows': args.rows, 'cols': args.cols}}
    else:
        raise ConfigError(f"{args.command} needs --config")

    overrides = {'seed': args.seed, 'output': args.out, 'workers': args.workers}
    if args.command == REPORT_KIND_FIT:
        overrides.update({'m': args.m, 'level': args.level})
    if args.command == REPORT_KIND_PSI_SWEEP:
        overrides['psi_grid'] = args.psi
    if args.command == REPORT_KIND_COMPARE_SCHEMES:
        overrides['n_grid'] = args.n_grid
    payload.update({key: value for key, value in overrides.items() if value is not None})
    return ExperimentConfig.model_validate(payload)


def run(args: argparse.Namespace):
    config = _resolve_config(args)
    service = ExperimentService(config)

    if args.command == REPORT_KIND_FIT:
        data = load_dataset(args.data, service.model)
        instr = None
        if args.uniform:
            instr = Instrumental.uniform()
        elif args.psi is not None:
            instr = config.to_instrumental(args.psi)
        return service.run_fit(data, instr)
    if args.command == REPORT_KIND_COVERAGE:
        return service.run_coverage()
    if args.command == REPORT_KIND_PSI_SWEEP:
        return service.run_psi_sweep()
    return service.run_compare_schemes()


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    logger.info(f"🚀 mcml {args.command}")

    try:
        report = run(args)
    except (InputError, ValidationError) as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except EstimationError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_ESTIMATION_ERROR

    output = args.out or getattr(getattr(report, 'config', None), 'output', None)
    if output:
        write_report(report, output)
    print(report.model_dump_json(indent=2))
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
