"""Command-line entry points.

    score-trainer train --dataset DIR --out W.dmsc [options]
    score-trainer export --checkpoint W.dmsc.ckpt --out W.dmsc

Exit codes: 0 ok, 1 config error, 2 numeric failure, 3 I/O.
"""

import argparse
import sys

from .errors import ConfigError, FormatError, NumericError
from .train import TrainingConfig, export_checkpoint, train


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _build_parser():
    p = _Parser(prog="score-trainer",
                description="Train interference score networks and export "
                            ".dmsc weights.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run denoising score matching on a "
                                     "directory of .cbin segments")
    t.add_argument("--dataset", required=True,
                   help="directory of equal-length .cbin segments")
    t.add_argument("--out", required=True, help="output .dmsc path")
    t.add_argument("--iterations", type=int, default=20000)
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--beta-min", type=float, default=0.1)
    t.add_argument("--beta-max", type=float, default=20.0)
    t.add_argument("--t-min", type=float, default=0.01)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--width", type=int, default=32)
    t.add_argument("--blocks", type=int, default=8)
    t.add_argument("--kernel", type=int, default=5)
    t.add_argument("--emb-dim", type=int, default=64)
    t.add_argument("--crop", type=int, default=0,
                   help="train on random windows of this length (0 = full)")
    t.add_argument("--ema-decay", type=float, default=0.999)
    t.add_argument("--checkpoint", default="",
                   help="checkpoint path (default: <out>.ckpt)")
    t.add_argument("--checkpoint-every", type=int, default=500)
    t.add_argument("--log-every", type=int, default=500)
    t.add_argument("--quiet", action="store_true")

    e = sub.add_parser("export", help="convert a checkpoint to .dmsc")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--out", required=True)
    return p


def cmd_train(args):
    cfg = TrainingConfig(
        dataset=args.dataset, out=args.out, iterations=args.iterations,
        batch_size=args.batch_size, lr=args.lr, beta_min=args.beta_min,
        beta_max=args.beta_max, t_min=args.t_min, seed=args.seed,
        width=args.width, blocks=args.blocks, kernel=args.kernel,
        emb_dim=args.emb_dim, crop=args.crop, ema_decay=args.ema_decay,
        checkpoint=args.checkpoint, checkpoint_every=args.checkpoint_every,
        log_every=args.log_every, quiet=args.quiet,
    )
    train(cfg)
    if not args.quiet:
        print(f"weights written to {cfg.out}")
    return 0


def cmd_export(args):
    export_checkpoint(args.checkpoint, args.out)
    print(f"weights written to {args.out}")
    return 0


def main(argv=None):
    try:
        args = _build_parser().parse_args(argv)
        if args.command == "train":
            return cmd_train(args)
        return cmd_export(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 2
    except (FormatError, OSError) as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
