"""Command-line entry point."""

import logging
import sys
from typing import Optional, Sequence

from . import __version__
from .cli import create_parser
from .core.config import settings
from .core.exceptions import SclensException
from .core.logging import configure_logging
from .schemas.run_config import load_run_config, parse_run_config
from .services import fourier
from .services.experiments import run_experiment

logger = logging.getLogger(__name__)

DEFAULT_OUT = "results"


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one experiment; returns 0 (all flags pass), 1 (a flag failed), 2 (bad config) or 3 (numerical failure)."""
    args = create_parser().parse_args(argv)
    configure_logging(args.log_level)
    logger.info("%s %s: %s", settings.PROJECT_NAME, __version__, args.command)
    overrides = {"experiment": args.command, "seed": args.seed, "threads": args.threads}
    try:
        config = (
            load_run_config(args.config, overrides) if args.config else parse_run_config("", overrides)
        )
        out = settings.OUT or args.out or config.out or DEFAULT_OUT
        fourier.set_workers(config.threads)
        summary, _ = run_experiment(config, out)
    except SclensException as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code
    for name, ok in summary.flags.items():
        logger.info("flag %-24s %s", name, "pass" if ok else "FAIL")
    logger.info("results written to %s", out)
    return 0 if summary.passed else 1


if __name__ == "__main__":
    sys.exit(main())
