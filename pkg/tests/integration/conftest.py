"""
Integration Test Configuration and Shared Fixtures

End-to-end runs of the library and the `radd` command line on tiny
synthetic problems. Commands are invoked in-process through main().
"""

import json
import logging
from pathlib import Path
from typing import Any, Callable, Dict, List

import pytest

from radd.cli.main import main


# =====================================================================
# LOGGING ISOLATION
# =====================================================================

@pytest.fixture(autouse=True)
def restore_root_logger():
    """main() reconfigures the root logger; put pytest's handlers back afterwards."""
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    for handler in list(root.handlers):
        root.removeHandler(handler)
    for handler in handlers:
        root.addHandler(handler)
    root.setLevel(level)


# =====================================================================
# RUN CONFIGS
# =====================================================================

@pytest.fixture
def write_config(tmp_path) -> Callable[[str, Dict[str, Any]], Path]:
    """Write a run config document under tmp_path and return its path."""

    def write(name: str, document: Dict[str, Any]) -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(document, indent=2))
        return path

    return write


@pytest.fixture
def synthetic_document(tmp_path) -> Dict[str, Any]:
    """N=3, d=3 mixture table with a short tabular training run."""
    return {
        "schedule": {"kind": "loglinear", "eps": 1e-3},
        "data": {"synthetic": {"kind": "mixture", "n_tokens": 3, "d": 3, "seed": 5}, "monitor_size": 16},
        "model": {"backend": "tabular"},
        "train": {"loss": "ldce", "steps": 150, "batch": 16, "lr": 0.1, "log_every": 50, "monitor_every": 50},
        "sampling": {"method": "tweedie", "steps": 8, "trajectories": 24, "seed": 7},
        "eval": {"loss": "ao", "estimator": "exact", "max_examples": 32, "seed": 1},
        "enfe": {"steps": [2, 8], "lengths": [4], "trajectories": 200, "seed": 0},
        "out": str(tmp_path / "run"),
    }


# =====================================================================
# CLI
# =====================================================================

@pytest.fixture
def run_cli(capsys) -> Callable[[List[str]], Any]:
    """Run main(argv); returns (exit status, captured stdout)."""

    def run(argv: List[str]):
        status = main(argv)
        out = capsys.readouterr().out
        return status, out

    return run
