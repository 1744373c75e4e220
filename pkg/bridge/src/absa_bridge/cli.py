"""Command-line entry points: serve the /v1 protocol or fine-tune a checkpoint."""

from __future__ import annotations

import argparse
import sys

from .config import bridge_config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="absa-bridge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--checkpoint", help="model checkpoint directory or hub name")
        p.add_argument("--device", default=None)
        p.add_argument("--max-length", type=int, default=None)

    p = sub.add_parser("serve", help="serve /v1/score, /v1/next_token and /v1/info")
    common(p)
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.set_defaults(command="serve")

    p = sub.add_parser("finetune", help="teacher-forced NLL fine-tuning on a pairs file")
    common(p)
    p.add_argument("--pairs", required=True, help="input<TAB>target pairs file")
    p.add_argument("--out", required=True, help="output checkpoint directory")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(command="finetune")

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {
        k: getattr(args, k, None)
        for k in ("checkpoint", "device", "max_length", "host", "port", "epochs", "batch_size", "learning_rate")
    }
    try:
        config = bridge_config(args.config, **overrides)
    except (ValueError, OSError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.command == "serve":
        from .service import serve

        serve(config)
        return 0
    from .finetune import finetune

    try:
        result = finetune(config, args.pairs, args.out, seed=args.seed)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"checkpoint: {result.checkpoint}")
    print(f"steps: {len(result.losses)}")
    if result.losses:
        print(f"first loss: {result.losses[0]:.4f}  last loss: {result.losses[-1]:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
