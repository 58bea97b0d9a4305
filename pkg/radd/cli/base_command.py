"""
Base Command Class

Provides a standard interface and common functionality for all subcommands:
config resolution, logging, timing, metrics and the exit-code contract.
"""

import argparse
import logging
import time
from abc import ABC, abstractmethod
from typing import Any, Dict, List

from radd.config import RaddSettings, RunConfig, load_run_config, parse_override
from radd.errors import (
    CompatibilityError,
    ConfigError,
    DomainError,
    EmptyCorpusError,
    RaddError,
    ShapeError,
    VerificationFailure,
)
from radd.utils.monitoring import track_command, track_error


EXIT_OK = 0
EXIT_VERIFICATION_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3

_USAGE_ERRORS = (ConfigError, CompatibilityError, EmptyCorpusError, ShapeError, DomainError, FileNotFoundError)


def exit_code_for(error: BaseException) -> int:
    """Map an exception raised inside a command to its exit status."""
    if isinstance(error, VerificationFailure):
        return EXIT_VERIFICATION_FAILED
    if isinstance(error, _USAGE_ERRORS):
        return EXIT_USAGE
    # NumericError and anything unexpected
    return EXIT_NUMERIC


class BaseCommand(ABC):
    """
    Base class for all radd subcommands.

    Provides:
    - Config resolution (file, flag overrides, --set overrides)
    - Logging and timing of the run
    - Command metrics and error counting
    - Mapping of failures to exit codes
    """

    name: str = "command"

    def __init__(self, args: argparse.Namespace, settings: RaddSettings):
        """
        Initialize a command.

        Args:
            args: Parsed command line
            settings: Environment settings (threads, logging, metrics)
        """
        self.args = args
        self.settings = settings
        self.logger = logging.getLogger(f"radd.cli.{self.name}")

    def flag_overrides(self) -> Dict[str, Any]:
        """Config keys set by command-specific flags; --set entries win over these."""
        return {}

    def overrides(self) -> Dict[str, Any]:
        overrides = {key: value for key, value in self.flag_overrides().items() if value is not None}
        if getattr(self.args, "out", None) is not None:
            overrides["out"] = self.args.out
        settings: List[str] = getattr(self.args, "set", None) or []
        for text in settings:
            key, value = parse_override(text)
            overrides[key] = value
        return overrides

    def load_config(self) -> RunConfig:
        return load_run_config(getattr(self.args, "config", None), self.overrides())

    @abstractmethod
    def execute(self, config: RunConfig) -> int:
        """
        Main logic of the command.

        Args:
            config: Validated run config

        Returns:
            Exit status
        """

    def run(self) -> int:
        """
        Wrapper that adds config loading, logging, error handling and metrics.

        Returns:
            Exit status: 0 success, 1 verification failure, 2 usage error,
            3 runtime numeric error
        """
        start_time = time.time()

        try:
            self.logger.info(f"Starting {self.name}")
            config = self.load_config()
            self.logger.debug(f"Resolved config: {config.model_dump(mode='json')}")

            status = self.execute(config)

            duration = time.time() - start_time
            track_command(self.name, "success" if status == EXIT_OK else "failure", duration)
            self.logger.info(f"Completed {self.name} in {duration:.2f}s (exit {status})")
            return status

        except Exception as e:
            duration = time.time() - start_time
            status = exit_code_for(e)
            track_command(self.name, "error", duration)
            track_error(self.name, type(e).__name__)

            if isinstance(e, (RaddError, FileNotFoundError)):
                self.logger.error(f"{self.name} failed: {type(e).__name__}: {e}")
            else:
                self.logger.error(f"Unexpected error in {self.name}: {e}", exc_info=True)
            return status
