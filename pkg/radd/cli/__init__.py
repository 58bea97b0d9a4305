"""
Command line interface: `radd verify|train|sample|eval|enfe`.
"""

from .base_command import BaseCommand, exit_code_for
from .main import build_parser, main

__all__ = ["BaseCommand", "build_parser", "exit_code_for", "main"]
