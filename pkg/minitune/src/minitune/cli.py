"""Command line: ``minitune tune`` (batch job) and ``minitune serve``."""

import argparse
import logging
import sys

from .errors import HarnessError
from .serve import DEFAULT_MAX_CONCURRENCY, run_server
from .tune import TuneConfig, tune

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="minitune",
        description="Tune a tiny causal LM on instruction JSONL and serve it.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    defaults = TuneConfig()

    p_tune = sub.add_parser("tune", help="fit base + adapter, write an artifact")
    p_tune.add_argument("--data", required=True, help="instruction JSONL file")
    p_tune.add_argument("--out", required=True, help="artifact directory")
    p_tune.add_argument("--base-model", default=defaults.base_model)
    p_tune.add_argument("--rank", type=int, default=defaults.rank)
    p_tune.add_argument("--learning-rate", type=float, default=defaults.learning_rate)
    p_tune.add_argument("--batch-size", type=int, default=defaults.batch_size)
    p_tune.add_argument(
        "--epochs", type=int, default=defaults.epochs, help="adapter epochs"
    )
    p_tune.add_argument("--pretrain-epochs", type=int, default=defaults.pretrain_epochs)
    p_tune.add_argument(
        "--holdout-fraction", type=float, default=defaults.holdout_fraction
    )
    p_tune.add_argument("--lora-alpha", type=float, default=defaults.lora_alpha)
    p_tune.add_argument("--max-new-tokens", type=int, default=defaults.max_new_tokens)
    p_tune.add_argument("--seed", type=int, default=defaults.seed)
    p_tune.add_argument("--port", type=int, default=defaults.port)

    p_serve = sub.add_parser("serve", help="serve an artifact over HTTP")
    p_serve.add_argument("--artifact", required=True, help="artifact directory")
    p_serve.add_argument(
        "--port", type=int, default=None, help="override the tuned-in port"
    )
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument(
        "--max-concurrency", type=int, default=DEFAULT_MAX_CONCURRENCY
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        if args.command == "tune":
            config = TuneConfig(
                base_model=args.base_model,
                rank=args.rank,
                learning_rate=args.learning_rate,
                batch_size=args.batch_size,
                epochs=args.epochs,
                port=args.port,
                pretrain_epochs=args.pretrain_epochs,
                holdout_fraction=args.holdout_fraction,
                lora_alpha=args.lora_alpha,
                max_new_tokens=args.max_new_tokens,
                seed=args.seed,
            )
            result = tune(args.data, args.out, config)
            print(
                f"artifact written to {result.artifact_dir} "
                f"(memorization {result.metrics['memorization_rate']:.3f}, "
                f"combined CE {result.metrics['combined_ce_mean']:.4f})"
            )
        else:
            run_server(
                args.artifact,
                port=args.port,
                host=args.host,
                max_concurrency=args.max_concurrency,
            )
    except HarnessError as exc:
        logger.error("%s failed: %s", args.command, exc)
        return 1
    except OSError as exc:
        logger.error("%s failed: %s", args.command, exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
