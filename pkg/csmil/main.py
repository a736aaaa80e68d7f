# csmil/main.py
import argparse
import logging
import sys
from typing import List, Optional

from csmil.core.config import Settings, get_settings
from csmil.core.errors import CsmilError
from csmil.core.run_config import load_run_config
from csmil.router import cli_router

logger = logging.getLogger(__name__)


def build_parser(settings: Settings) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=settings.PROJECT_NAME,
        description="Cluster-level sparse multiple instance learning",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.VERSION}")
    parser.add_argument("--config", help="run configuration (JSON, or YAML by suffix)")
    parser.add_argument("--seed", type=int, help="root 64-bit seed (overrides the config)")
    parser.add_argument("--jobs", type=int, default=None, help="worker processes for folds, trials and grid points")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value, e.g. train.gamma=0.01 (repeatable)")

    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True
    for name, route in cli_router.routes.items():
        sub = subparsers.add_parser(name, help=route.help, description=route.help)
        for flags, kwargs in route.arguments:
            sub.add_argument(*flags, **kwargs)
        sub.set_defaults(handler=route.handler)
    return parser


def configure_logging(settings: Settings) -> None:
    logging.basicConfig(level=settings.log_level, format=settings.LOG_FORMAT, stream=sys.stderr)


def error_handler(exc: Exception) -> int:
    """Map any failure to an exit code"""
    if isinstance(exc, CsmilError):
        logger.error(f"{type(exc).__name__}: {exc.detail}")
        return exc.exit_code
    logger.error(f"Internal error: {exc}", exc_info=True)
    return 3


def main(argv: Optional[List[str]] = None) -> int:
    try:
        settings = get_settings()
    except CsmilError as e:
        return error_handler(e)
    parser = build_parser(settings)
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors and 0 for --help
        return int(e.code or 0)
    configure_logging(settings)

    if args.jobs is not None and args.jobs < 1:
        logger.error(f"--jobs must be >= 1, got {args.jobs}")
        return 2
    try:
        args.run = load_run_config(args.config, args.overrides, seed=args.seed)
        logger.info(f"Running {args.command} (seed={args.run.seed}, out={args.out})")
        return args.handler(args)
    except Exception as e:
        return error_handler(e)


if __name__ == "__main__":
    sys.exit(main())
