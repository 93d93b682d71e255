import argparse
import logging
import sys
from typing import NoReturn, Optional, Sequence

from cpsdetect import APP_NAME, __version__, commands
from cpsdetect.commands.context import RunContext
from cpsdetect.exceptions import (
    EXIT_OK,
    EXIT_USAGE,
    AppException,
    DataException,
    UsageException,
    handle_app_exception,
)
from cpsdetect.logging_config import configure_logging, log_duration, new_run_id

logger = logging.getLogger(__name__)


class ArgumentParser(argparse.ArgumentParser):
    """argparse that reports bad usage as a UsageException instead of exiting"""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        raise UsageException(f"{self.prog}: {message}")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog=APP_NAME, description="Anomaly detection for control-system logs",
                            allow_abbrev=False)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--seed", type=int, help="Seed for every random draw of the run")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--log-format", default="json", choices=["json", "text"])
    parser.add_argument("--timestamp", help="Fixed ISO timestamp for model headers and manifests")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="Override a config field; dotted keys address nested fields")

    subparsers = parser.add_subparsers(dest="command", metavar="command", required=True)
    for module in (commands.log, commands.dnn, commands.svm, commands.evaluate, commands.tune):
        module.register(subparsers)
    return parser


def _subcommand(args: argparse.Namespace) -> str:
    target = getattr(args, "target", None)
    return f"{args.command} {target}" if target else args.command


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and return its exit code"""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except AppException as exc:
        return handle_app_exception(exc)
    except SystemExit as exc:
        # --help and --version
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    configure_logging(args.log_level, args.log_format)
    context = RunContext(
        command=argv,
        run_id=new_run_id(),
        seed=args.seed,
        timestamp=args.timestamp,
        overrides=list(args.overrides),
    )
    subcommand = _subcommand(args)
    logger.info("Command started: command=%s, seed=%s", subcommand, args.seed)
    try:
        with log_duration(logger, "Command", command=subcommand):
            args.handler(args, context)
        context.write_manifests(subcommand)
    except AppException as exc:
        logger.error("Command failed: command=%s, error=%s", subcommand, exc.error_code)
        return handle_app_exception(exc)
    except OSError as exc:
        logger.error("Command failed: command=%s, error=%s", subcommand, exc)
        return handle_app_exception(DataException(str(exc), "IO_ERROR"))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
