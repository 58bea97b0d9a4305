"""
Logging setup: plain text lines or structured JSON.
"""

import logging
import sys
from typing import Optional

from pythonjsonlogger.json import JsonFormatter


TEXT_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
JSON_FIELDS = '%(asctime)s %(name)s %(levelname)s %(message)s'


def setup_logging(level: str = "INFO", json_format: bool = False, stream: Optional[object] = None) -> None:
    """
    Configure the root logger once for a CLI invocation.

    Args:
        level: Log level name
        json_format: Emit one JSON object per record instead of text
        stream: Target stream (stderr by default so stdout stays machine-readable)
    """
    handler = logging.StreamHandler(stream or sys.stderr)
    if json_format:
        handler.setFormatter(JsonFormatter(JSON_FIELDS, rename_fields={"levelname": "level"}))
    else:
        handler.setFormatter(logging.Formatter(TEXT_FORMAT))

    root = logging.getLogger()
    for existing in list(root.handlers):
        root.removeHandler(existing)
    root.addHandler(handler)
    root.setLevel(level.upper())
