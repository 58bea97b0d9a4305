"""
radd command line entry point.

    radd verify [--json]
    radd train  --config configs/synthetic_tabular.json [--loss ldce] [--seed 3]
    radd sample --config configs/sample.json [--cache on|off] [--seed 7]
    radd eval   --config configs/eval.json
    radd enfe   [--steps 2,8,32,128] [--lengths 8,64]
"""

import argparse
import logging
import sys
from typing import List, Optional

from radd import __version__
from radd.config import get_settings
from radd.contracts import EstimatorKind, LossKind, SamplerMethod
from radd.utils.logging_setup import setup_logging
from radd.utils.monitoring import setup_monitoring

from .commands import COMMANDS


logger = logging.getLogger(__name__)


def int_list(text: str) -> List[int]:
    """Parse "2,8,32" into [2, 8, 32]."""
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'")
    if not values:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return values


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config")
    common.add_argument("--out", help="Output directory (run config key 'out')")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="Override a config key, e.g. --set train.lr=0.05 (repeatable)")
    common.add_argument("--log-json", action="store_true", help="Structured JSON log lines on stderr")
    common.add_argument("--log-level", help="Log level (default from RADD_LOG_LEVEL)")

    parser = argparse.ArgumentParser(
        prog="radd",
        description="Reparameterized absorbing discrete diffusion: verify, train, sample, evaluate.",
    )
    parser.add_argument("--version", action="version", version=f"radd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    verify = sub.add_parser("verify", parents=[common], help="Run the oracle verification suite")
    verify.add_argument("--json", action="store_true", help="Print the report as JSON")
    verify.add_argument("--only", action="append", metavar="CHECK", help="Run only the named check (repeatable)")
    verify.add_argument("--perturb-score-scale", type=float, default=0.0, help=argparse.SUPPRESS)

    losses = [kind.value for kind in LossKind]
    methods = [method.value for method in SamplerMethod]

    train = sub.add_parser("train", parents=[common], help="Train a conditional model")
    train.add_argument("--loss", choices=losses)
    train.add_argument("--seed", type=int)
    train.add_argument("--steps", type=int, help="Optimizer steps")

    sample = sub.add_parser("sample", parents=[common], help="Generate sequences")
    sample.add_argument("--seed", type=int)
    sample.add_argument("--cache", choices=["on", "off"])
    sample.add_argument("--steps", type=int, help="Uniform grid steps")
    sample.add_argument("--method", choices=methods)
    sample.add_argument("--trajectories", type=int)

    evaluate = sub.add_parser("eval", parents=[common], help="Perplexity and sample quality")
    evaluate.add_argument("--seed", type=int)
    evaluate.add_argument("--loss", choices=losses)
    evaluate.add_argument("--estimator", choices=[kind.value for kind in EstimatorKind])
    evaluate.add_argument("--cache", choices=["on", "off"])
    evaluate.add_argument("--steps", type=int, help="Uniform grid steps for sample-quality draws")

    enfe = sub.add_parser("enfe", parents=[common], help="Expected-NFE sweep")
    enfe.add_argument("--steps", type=int_list, help="Step counts, e.g. 2,8,32,128")
    enfe.add_argument("--lengths", type=int_list, help="Generation lengths, e.g. 8,64")
    enfe.add_argument("--method", choices=[SamplerMethod.TWEEDIE.value, SamplerMethod.EULER.value])
    enfe.add_argument("--seed", type=int)
    enfe.add_argument("--trajectories", type=int, help="Empirical trajectories per cell (0 skips)")

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings = get_settings()

    setup_logging(
        level=args.log_level or settings.log_level,
        json_format=args.log_json or settings.log_format == "json",
    )
    setup_monitoring(settings.metrics_port)
    logger.debug(f"radd {__version__}: command={args.command}, threads={settings.threads}")

    return COMMANDS[args.command](args, settings).run()


if __name__ == "__main__":
    sys.exit(main())
