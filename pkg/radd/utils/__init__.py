"""
Utility modules: logging, metrics and ordered parallel map.
"""

from .logging_setup import setup_logging
from .monitoring import setup_monitoring
from .parallel import ordered_map

__all__ = ["ordered_map", "setup_logging", "setup_monitoring"]
