import argparse
import sys
from typing import Optional, Sequence

from pydantic import ValidationError

from app import __version__
from app.exceptions import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, CommandError, ScenarioScoutError
from app.logger import get_logger, setup_logging
from app.routers import analyze, campaign, gen_data, search, train
from app.routers.common import first_error_field

# Initialise logging as the very first step
setup_logging()
logger = get_logger(__name__)

COMMANDS = (gen_data, train, search, analyze, campaign)


class ScoutArgumentParser(argparse.ArgumentParser):
    """Usage errors raise instead of exiting so ``main`` owns the exit code."""

    def error(self, message: str):
        raise CommandError(f"{self.prog}: {message}")


def build_parser() -> ScoutArgumentParser:
    parser = ScoutArgumentParser(
        prog="scenario-scout",
        description="Surrogate-guided search for diverse failing scenarios of agent environments.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers)
    logger.trace("All commands registered")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command; 0 on success, 1 on validation errors, 2 on runtime errors."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logger.info("Scenario Scout %s: %s", __version__, args.command)
        return args.handler(args)
    except SystemExit as exc:  # --help / --version
        return EXIT_OK if exc.code in (None, 0) else EXIT_VALIDATION
    except ValidationError as exc:
        logger.error("Invalid %s: field '%s': %s", exc.title, first_error_field(exc), exc.errors()[0]["msg"])
        return EXIT_VALIDATION
    except ScenarioScoutError as exc:
        logger.error("%s: %s", type(exc).__name__, exc.detail)
        return exc.exit_code
    except Exception:
        logger.exception("Unexpected failure")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
