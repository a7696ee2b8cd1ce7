"""Command-line parser: one subcommand per experiment driver."""

import argparse

from .. import __version__
from ..schemas.run_config import EXPERIMENTS

DESCRIPTIONS = {
    "geodesic": "geodesic flow invariants, nontrapping and preimage-measure sweep",
    "extinction": "long-time L^q extinction of concentrated data along an h ladder",
    "dispersive": "semiclassical sup-norm decay in t and in h",
    "converge": "convergence of curved to flat (or frozen) propagators",
    "morawetz": "Morawetz identity residual and Bourgain-Morawetz interval sweep",
    "smoothing": "scaled local-smoothing functional along B and N ladders",
    "profiles": "inverse-Strichartz witness and greedy profile extraction",
    "nls": "defocusing NLS conservation, norm proxies and Picard ratios",
}


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _threads(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("threads must be at least 1")
    return value


def create_parser() -> argparse.ArgumentParser:
    """Create the ``sclens`` argument parser."""
    parser = argparse.ArgumentParser(
        prog="sclens",
        description="Numerical experiments for Schrodinger evolution on compactly perturbed metrics.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="override SCLENS_LOG_LEVEL")
    commands = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    for name in EXPERIMENTS:
        sub = commands.add_parser(name, help=DESCRIPTIONS[name], description=DESCRIPTIONS[name])
        sub.add_argument("--config", metavar="PATH", help="key = value run configuration")
        sub.add_argument("--out", metavar="DIR", help="output directory (SCLENS_OUT takes precedence)")
        sub.add_argument("--seed", type=_seed, metavar="U64", help="override the configured seed")
        sub.add_argument("--threads", type=_threads, metavar="K", help="worker pool size")
    return parser
