from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Callable
from collections.abc import Sequence
from typing import NoReturn

import numpy as np

from regsdml.config import build_config
from regsdml.config import DIAGNOSTICS
from regsdml.config import RunConfig
from regsdml.crossfit import crossfit_repetitions
from regsdml.diagnostics import naive_instrument_diagnostic
from regsdml.diagnostics import orthogonality_diagnostic
from regsdml.diagnostics import Score
from regsdml.errors import RegsDMLError
from regsdml.errors import UsageError
from regsdml.methods import DEFAULT_ESTIMATORS
from regsdml.methods import RunContext
from regsdml.sem.scenarios import generate
from regsdml.sem.simulation import run_monte_carlo
from regsdml.store import CsvDatasetStore
from regsdml.store import emit_report
from regsdml.store import load_dataset_csv
from regsdml.store import ReportFormat
from regsdml.store import ReportStore


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ESTIMATION = 2

# argparse destination -> config key
FLAG_KEYS = {
    "data": "data",
    "out": "out",
    "format": "format",
    "scenario": "scenario",
    "N": "N",
    "M": "M",
    "K": "K",
    "S": "S",
    "seed": "seed",
    "level": "level",
    "learner": "learner.kind",
    "gamma_grid": "gamma_grid",
    "methods": "methods",
    "threads": "threads",
    "which": "diagnose.which",
    "mc_size": "diagnose.mc_size",
    "step": "diagnose.step",
}


class UsageArgumentParser(argparse.ArgumentParser):

    def error(self, message: str) -> NoReturn:
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value run configuration file")
    parser.add_argument("--out", help="report path")
    parser.add_argument("--format", choices=["csv", "json"])
    parser.add_argument("--N", type=int)
    parser.add_argument("--M", type=int)
    parser.add_argument("--K", type=int)
    parser.add_argument("--S", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--level", type=float)
    parser.add_argument("--learner", help="spline, forest or oracle")
    parser.add_argument("--gamma-grid", dest="gamma_grid", help="'default' or e.g. 0,1,10,inf")
    parser.add_argument("--methods", help="comma separated, e.g. DML,regsDML,LIML")
    parser.add_argument("--threads", type=int)
    parser.add_argument("--scenario")


def create_parser() -> UsageArgumentParser:
    parser = UsageArgumentParser(prog="regsdml", description="DML, regDML and regsDML estimation")
    commands = parser.add_subparsers(dest="command", parser_class=UsageArgumentParser)

    fit = commands.add_parser("fit", help="estimate on a CSV dataset")
    fit.add_argument("--data", help="CSV file with a header row")
    _add_common_flags(fit)

    simulate = commands.add_parser("simulate", help="Monte Carlo study on a simulated scenario")
    _add_common_flags(simulate)

    diagnose = commands.add_parser("diagnose", help="orthogonality and naive-instrument diagnostics")
    diagnose.add_argument("--which", choices=DIAGNOSTICS)
    diagnose.add_argument("--mc-size", dest="mc_size", type=int)
    diagnose.add_argument("--step", type=float)
    _add_common_flags(diagnose)

    generator = commands.add_parser("generate", help="write a simulated dataset as CSV")
    _add_common_flags(generator)
    return parser


class RegsDMLApp:

    def __init__(self) -> None:
        self.handlers: dict[str, Callable[[RunConfig], int]] = {}
        self.add_handlers([
            ("fit", self.fit),
            ("simulate", self.simulate),
            ("diagnose", self.diagnose),
            ("generate", self.generate_data),
        ])

    def add_handlers(self, handlers: Sequence[tuple[str, Callable[[RunConfig], int]]]) -> None:
        for command, handler in handlers:
            self.handlers[command] = handler

    def run(self, config: RunConfig) -> int:
        return self.handlers[config.command](config)

    def fit(self, config: RunConfig) -> int:
        data = load_dataset_csv(config.input_path, config.roles)
        rng = np.random.default_rng(config.seed)
        fold_sets = crossfit_repetitions(data, config.K, config.S, config.learner, rng, threads=config.threads)
        context = RunContext(data=data, fold_sets=fold_sets, grid=config.grid, level=config.level,
                             threads=config.threads)

        results = []
        for method in config.methods:
            result = DEFAULT_ESTIMATORS[method.value](context)
            if result.selected_regularized is not None:
                chosen = "regularized" if result.selected_regularized else "DML"
                logger.info(f"regsDML chose the {chosen} estimate")
            results.append(result)

        emit_report(results, config.output_path, config.report_format)
        if config.report_format == ReportFormat.CSV:
            print(ReportStore(config.output_path).load().to_string(index=False))
        return EXIT_OK

    def simulate(self, config: RunConfig) -> int:
        report = run_monte_carlo(
            spec=config.scenario, N=config.N, M=config.M, methods=config.methods, K=config.K, S=config.S,
            grid=config.grid, learner=config.learner, level=config.level,
            rng=np.random.default_rng(config.seed), threads=config.threads, seed=config.seed)
        emit_report(report, config.output_path, config.report_format)
        return EXIT_OK

    def diagnose(self, config: RunConfig) -> int:
        rng = np.random.default_rng(config.seed)
        if config.diagnose_which == "orthogonality":
            proper_rng, naive_rng = rng.spawn(2)
            proper = orthogonality_diagnostic(Score.NEYMAN_PSI, config.scenario, config.mc_size, config.step,
                                              proper_rng)
            naive = orthogonality_diagnostic(Score.NAIVE_VARPHI, config.scenario, config.mc_size, config.step,
                                             naive_rng)
            metrics = {
                "neyman_psi_derivative": proper.derivative,
                "neyman_psi_std_error": proper.std_error,
                "naive_varphi_derivative": naive.derivative,
                "naive_varphi_std_error": naive.std_error,
            }
        else:
            result = naive_instrument_diagnostic(config.N, config.M, config.K, rng, learner=config.learner,
                                                 beta0=config.scenario.beta0 if config.scenario else None,
                                                 threads=config.threads)
            metrics = {"naive_standardized_bias": result.naive, "proper_standardized_bias": result.proper}

        for name, value in metrics.items():
            print(f"{name}: {value:.6g}")
        if config.output_path is not None:
            emit_report(metrics, config.output_path, config.report_format)
        return EXIT_OK

    def generate_data(self, config: RunConfig) -> int:
        data = generate(config.scenario, config.N, np.random.default_rng(config.seed))
        CsvDatasetStore(config.output_path).save(data)
        logger.info(f"Wrote {data.N} rows of {config.scenario.name.value} to {config.output_path}")
        return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = create_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().rstrip())
        flags = {key: getattr(args, dest, None) for dest, key in FLAG_KEYS.items()}
        config = build_config(args.command, flags, args.config)
    except UsageError as e:
        logger.error(f"Usage error: {e}")
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        # --help
        return int(e.code or 0)

    try:
        return RegsDMLApp().run(config)
    except RegsDMLError as e:
        logger.error(f"{config.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ESTIMATION
