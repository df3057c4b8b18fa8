"""Command line: train on an exported dataset, or audit model complexity."""

from __future__ import annotations

import argparse
import configparser
import sys

from . import dataset
from .complexity import (
    SA_MACS_FORMULA,
    SA_PARAMS_FORMULA,
    TFA_MACS_FORMULA,
    TFA_PARAMS_PER_ENCODER_FORMULA,
    count_params,
    estimate_macs,
)
from .model import DceNet, DceNetConfig
from .train import TrainConfig, train

MODEL_KEYS = {
    "d": int,
    "d_ff": int,
    "n_heads": int,
    "n_encoders": int,
    "n_sa_blocks": int,
    "interp_bandwidth": float,
}
GRID_KEYS = {
    "n_rx": int,
    "n_tx": int,
    "n_symbols": int,
    "n_subcarriers": int,
    "k_dmrs": int,
    "n_p_per_symbol": int,
}


def read_config(path) -> dict:
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)
    out: dict = {"model": {}, "grid": {}, "train": {}}
    if parser.has_section("model"):
        for key, cast in MODEL_KEYS.items():
            if parser.has_option("model", key):
                out["model"][key] = cast(parser.get("model", key))
    if parser.has_section("grid"):
        for key, cast in GRID_KEYS.items():
            if parser.has_option("grid", key):
                out["grid"][key] = cast(parser.get("grid", key))
    if parser.has_section("train"):
        for key, cast in (
            ("batch_size", int),
            ("learning_rate", float),
            ("lr_decay_every", int),
            ("lr_decay_gamma", float),
            ("val_fraction", float),
        ):
            if parser.has_option("train", key):
                out["train"][key] = cast(parser.get("train", key))
    return out


def cmd_train(args) -> int:
    overrides = {}
    train_kwargs = {}
    if args.config:
        cfg = read_config(args.config)
        overrides.update(cfg["model"])
        train_kwargs.update(cfg["train"])
    train_cfg = TrainConfig(epochs=args.epochs, seed=args.seed, **train_kwargs)
    try:
        result = train(
            args.data,
            train_cfg=train_cfg,
            out_dir=args.out,
            model_overrides=overrides,
        )
    except dataset.DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for row in result.epochs:
        print(
            f"epoch {row['epoch']:3d}  train_mse {row['train_mse']:.6f}  "
            f"val_mse {row['val_mse']:.6f}"
        )
    print(f"interpolation baseline val_mse {result.baseline_val_mse:.6f}")
    if result.checkpoint_path:
        print(f"checkpoint written to {result.checkpoint_path}")
    improved = result.final_val_mse < result.baseline_val_mse
    print("beats baseline" if improved else "does not beat baseline")
    return 0


def cmd_check_complexity(args) -> int:
    grid = {
        "n_rx": 4, "n_tx": 4, "n_symbols": 14, "n_subcarriers": 12,
        "k_dmrs": 2, "n_p_per_symbol": 3,
    }
    model_kwargs = {}
    if args.config:
        cfg = read_config(args.config)
        grid.update(cfg["grid"])
        model_kwargs.update(cfg["model"])
    config = DceNetConfig(**grid, **model_kwargs)
    model = DceNet(config)
    counts = count_params(model)
    macs = estimate_macs(config)
    print(f"config: d={config.d} d_ff={config.d_ff} L={config.seq_len} "
          f"heads={config.n_heads} encoders={config.n_encoders}")
    print(f"spatial attention params   {counts['sa_documented']:>12,}  "
          f"formula {SA_PARAMS_FORMULA} = {counts['sa_formula']:,}")
    print(f"  gating conv sub-count    {counts['sa_conv']:>12,}")
    print(f"per-encoder params         {counts['tfa_per_encoder_documented']:>12,}  "
          f"formula {TFA_PARAMS_PER_ENCODER_FORMULA} = {counts['tfa_per_encoder_formula']:,}")
    print(f"per-encoder params (full)  {counts['tfa_per_encoder_full']:>12,}")
    print(f"model total params         {counts['total']:>12,}")
    print(f"spatial attention MACs     {macs['sa']:>12,}  formula {SA_MACS_FORMULA}")
    print(f"per-encoder MACs           {macs['tfa_per_encoder']:>12,}  formula {TFA_MACS_FORMULA}")
    ok = (
        counts["sa_documented"] == counts["sa_formula"]
        and counts["tfa_per_encoder_documented"] == counts["tfa_per_encoder_formula"]
    )
    print("counts match formulas" if ok else "COUNTS DO NOT MATCH FORMULAS")
    return 0 if ok else 1


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dcenet", description="dual-attention channel estimator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train on an exported binary dataset")
    p_train.add_argument("--data", required=True, help="dataset path")
    p_train.add_argument("--config", default=None, help="optional ini config")
    p_train.add_argument("--epochs", type=int, default=10)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--out", default=None, help="checkpoint/metrics directory")
    p_train.set_defaults(func=cmd_train)

    p_check = sub.add_parser("check-complexity", help="audit parameter and MAC counts")
    p_check.add_argument("--config", default=None, help="optional ini config")
    p_check.set_defaults(func=cmd_check_complexity)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
