import logging
from argparse import ArgumentParser
from pathlib import Path
from sys import stderr
from time import perf_counter

from bohm_pair_slit import __version__
from bohm_pair_slit.config import ConfigOverrides, read_config_file
from bohm_pair_slit.ensemble import THREADS_ENV_VAR
from bohm_pair_slit.exceptions import (
    ConditioningStarved,
    ConfigError,
    RejectionBudgetExceeded,
)
from bohm_pair_slit.runner import ExperimentRunner
from bohm_pair_slit.scenarios import Case

logger = logging.getLogger(__name__)

EXIT_SUCCESS = 0
EXIT_CONFIG_ERROR = 2
EXIT_REJECTED = 3


def main() -> int:
    parser = ArgumentParser(
        description=f"Two-particle two-slit experiment simulator, version {__version__}."
        " Runs a Bohmian trajectory ensemble against standard quantum mechanics"
        " detection statistics and writes summary.json plus CSV tables to the output"
        " directory. Logs are written to standard error. The number of worker threads"
        f" is read from the {THREADS_ENV_VAR} environment variable and never changes"
        " results.",
    )
    _ = parser.add_argument(
        "-c",
        "--config",
        type=Path,
        required=True,
        metavar="PATH",
        help="path to a JSON run configuration",
    )
    _ = parser.add_argument(
        "-o",
        "--out-dir",
        metavar="PATH",
        help="output directory; overrides output.dir of the configuration",
    )
    _ = parser.add_argument(
        "--seed",
        type=int,
        help="unsigned 64-bit random seed; overrides seed of the configuration",
    )
    _ = parser.add_argument(
        "--pairs",
        type=int,
        metavar="N",
        help="number of pairs; overrides n_pairs of the configuration",
    )
    _ = parser.add_argument(
        "--case",
        choices=[str(case) for case in Case],
        help="experiment case; overrides case of the configuration",
    )
    _ = parser.add_argument(
        "--log-level",
        choices=("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"),
        default="INFO",
        help="set log level; logs are written to standard error; default: %(default)s",
    )
    _ = parser.add_argument(
        "-v",
        "--version",
        action="version",
        version="%(prog)s " + __version__,
    )

    args = parser.parse_args()

    logging.basicConfig(
        format="%(levelname)s: %(message)s",
        style="%",
        stream=stderr,
        level=args.log_level,  # pyright: ignore[reportAny]
    )

    start_seconds = perf_counter()

    overrides = ConfigOverrides(
        seed=args.seed,  # pyright: ignore[reportAny]
        n_pairs=args.pairs,  # pyright: ignore[reportAny]
        case=args.case,  # pyright: ignore[reportAny]
        output_dir=args.out_dir,  # pyright: ignore[reportAny]
    )
    try:
        run = read_config_file(args.config, overrides)  # pyright: ignore[reportAny]
        runner = ExperimentRunner(run)
        _ = runner.execute()
    except ConfigError as e:
        logger.error("%s", e)
        return EXIT_CONFIG_ERROR
    except (RejectionBudgetExceeded, ConditioningStarved) as e:
        logger.error("%s", e)
        return EXIT_REJECTED

    duration = perf_counter() - start_seconds
    logger.info("Run took %.3f seconds", duration)
    return EXIT_SUCCESS


if __name__ == "__main__":
    raise SystemExit(main())
