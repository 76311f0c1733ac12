"""Command-line interface.

Subcommands: train, eval, predict, synth, gradcheck, info. Exit codes:
0 success, 1 usage/configuration error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import figures
from .checkpoint import load_checkpoint, load_weight_table, save_checkpoint
from .config import build_train_config, load_config_file
from .data import null_augment, save_dataset, synth_generate
from .errors import ConfigurationError, KansegError
from .inference import evaluate, predict
from .model import KanSegNet
from .train import log_to_csv, train
from .verification import all_passed, run_suite


class _Parser(argparse.ArgumentParser):
    """Argparse variant whose usage errors exit 1, not 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> _Parser:
    parser = _Parser(prog="kanseg",
                     description="Dual-encoder spline-bottleneck "
                                 "segmentation: train, evaluate, predict.")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p_train = sub.add_parser("train", help="train a model")
    p_train.add_argument("--config", help="key=value config file")
    p_train.add_argument("--data", help="dataset root (images/ + masks/)")
    p_train.add_argument("--out", help="output directory")
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--batch-size", type=int)
    p_train.add_argument("--lr", type=float)
    p_train.add_argument("--min-lr", type=float)
    p_train.add_argument("--momentum", type=float)
    p_train.add_argument("--weight-decay", type=float)
    p_train.add_argument("--patience", type=int,
                         help="early-stop patience in epochs")
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--train-fraction", type=float)
    p_train.add_argument("--image-size", type=int)
    p_train.add_argument("--width-multiplier", type=float)
    p_train.add_argument("--embed-dim", type=int)
    p_train.add_argument("--patch-size", type=int)
    p_train.add_argument("--no-augment", action="store_true",
                         help="feed both encoders the unmodified image")
    p_train.add_argument("--import-weights",
                         help="parameter table for the residual encoder")
    p_train.set_defaults(handler=cmd_train)

    p_eval = sub.add_parser("eval", help="score a checkpoint on a dataset")
    p_eval.add_argument("--ckpt", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--out", help="directory for report files")
    p_eval.set_defaults(handler=cmd_eval)

    p_pred = sub.add_parser("predict", help="segment one image")
    p_pred.add_argument("--ckpt", required=True)
    p_pred.add_argument("--image", required=True)
    p_pred.add_argument("--out", required=True)
    p_pred.set_defaults(handler=cmd_predict)

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset")
    p_synth.add_argument("--count", type=int, required=True)
    p_synth.add_argument("--size", type=int, default=64)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out", required=True)
    p_synth.set_defaults(handler=cmd_synth)

    p_grad = sub.add_parser("gradcheck",
                            help="finite-difference gradient verification")
    p_grad.add_argument("--tolerance", type=float, default=1e-4)
    p_grad.add_argument("--ops-only", action="store_true",
                        help="skip the end-to-end network check")
    p_grad.set_defaults(handler=cmd_gradcheck)

    p_info = sub.add_parser("info", help="describe a checkpoint")
    p_info.add_argument("--ckpt", required=True)
    p_info.set_defaults(handler=cmd_info)
    return parser


_TRAIN_FLAG_KEYS = {
    "data": "data_root",
    "out": "out_dir",
    "epochs": "epochs",
    "batch_size": "batch_size",
    "lr": "lr",
    "min_lr": "min_lr",
    "momentum": "momentum",
    "weight_decay": "weight_decay",
    "patience": "early_stop_patience",
    "seed": "seed",
    "train_fraction": "train_fraction",
    "image_size": "model.image_size",
    "width_multiplier": "model.width_multiplier",
    "embed_dim": "model.embed_dim",
    "patch_size": "model.patch_size",
}


def cmd_train(args) -> int:
    file_values = load_config_file(args.config) if args.config else {}
    overrides = {}
    for attr, key in _TRAIN_FLAG_KEYS.items():
        value = getattr(args, attr)
        if value is not None:
            overrides[key] = value
    config = build_train_config(file_values, overrides)
    if args.no_augment:
        config.augment = null_augment(config.augment.seed)
    if config.data_root is None:
        raise ConfigurationError("no dataset given: use --data or data_root")
    out_dir = Path(config.out_dir or "runs")
    weights = (load_weight_table(args.import_weights)
               if args.import_weights else None)

    result = train(config, import_weights=weights)

    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / "best.ckpt"
    save_checkpoint(result.checkpoint, ckpt_path)
    log_path = out_dir / "train_log.csv"
    log_path.write_text(log_to_csv(result.log))
    curve_path = figures.save_training_curves(result.log,
                                              out_dir / "training_curves.png")

    best = result.checkpoint
    print(f"trained {len(result.log)} epochs "
          f"({result.model.parameter_count()} parameters)")
    print(f"best epoch {best.epoch}: val loss {best.best_val_loss:.6f}")
    print(f"checkpoint: {ckpt_path}")
    print(f"log: {log_path}")
    print(f"curves: {curve_path}")
    return 0


def cmd_eval(args) -> int:
    state = load_checkpoint(args.ckpt)
    report = evaluate(state, data_root=args.data)
    print(report.to_text())
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "metrics.txt").write_text(report.to_text() + "\n")
        (out_dir / "per_sample.csv").write_text(report.to_csv())
        chart = figures.save_eval_chart(report.rows,
                                        out_dir / "per_sample_dice.png")
        print(f"report files: {out_dir / 'metrics.txt'}, "
              f"{out_dir / 'per_sample.csv'}, {chart}")
    return 0


def cmd_predict(args) -> int:
    state = load_checkpoint(args.ckpt)
    mask_path, overlay_path = predict(state, args.image, args.out)
    print(f"mask: {mask_path}")
    print(f"overlay: {overlay_path}")
    return 0


def cmd_synth(args) -> int:
    pairs = synth_generate(args.count, args.size, args.seed)
    save_dataset(pairs, args.out)
    print(f"wrote {len(pairs)} samples ({args.size}x{args.size}) to {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    results = run_suite(tolerance=args.tolerance,
                        include_end_to_end=not args.ops_only,
                        progress=print)
    n_failed = sum(not r.passed for r in results)
    print(f"{len(results) - n_failed}/{len(results)} checks passed")
    return 0 if all_passed(results) else 3


def cmd_info(args) -> int:
    state = load_checkpoint(args.ckpt)
    model = KanSegNet(state.config)
    for key, value in sorted(state.config.to_dict().items()):
        print(f"{key} = {value}")
    print(f"epoch = {state.epoch}")
    print(f"best_val_loss = {state.best_val_loss}")
    print(f"parameters = {model.parameter_count()}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except KansegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
