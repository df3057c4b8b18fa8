"""Training loop over exported channel datasets.

Labels are the true channel values on each port's data REs; the loss is the
mean squared error over real and imaginary parts there. The interpolation
baseline (preprocess without any learned refinement) is evaluated on the
validation split for comparison; a freshly initialized network reproduces
it exactly, so validation MSE below the baseline demonstrates learning.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from . import dataset
from .model import DceNet, DceNetConfig


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-3
    lr_decay_every: int = 5
    lr_decay_gamma: float = 0.5
    val_fraction: float = 0.2
    seed: int = 0


@dataclass
class TrainResult:
    epochs: list[dict] = field(default_factory=list)
    baseline_val_mse: float = float("nan")
    checkpoint_path: str | None = None

    @property
    def final_val_mse(self) -> float:
        return self.epochs[-1]["val_mse"] if self.epochs else float("nan")


def _complex_to_ri(x: np.ndarray) -> np.ndarray:
    return np.stack([x.real, x.imag], axis=-1).astype(np.float32)


def prepare_tensors(header, channels, ls, cfg: DceNetConfig):
    """Dataset arrays to model inputs, labels, and the data-RE mask.

    Returns (ls_t, grid_t, mask) with ls_t of shape
    (n, n_rx, n_tx, pilots, 2), grid_t of shape
    (n, n_rx, n_tx, 2, n_symbols, n_subcarriers), and mask of shape
    (n_tx, n_symbols, n_subcarriers) marking each port's data REs.
    """
    n = channels.shape[0]
    ls_t = torch.from_numpy(
        _complex_to_ri(ls.reshape(n, header.n_rx, header.n_tx, header.pilots_per_port))
    )
    grid = channels.reshape(
        n, header.n_rx, header.n_tx, header.n_symbols, header.n_subcarriers
    )
    grid_t = torch.from_numpy(_complex_to_ri(grid)).permute(0, 1, 2, 5, 3, 4)
    layout = cfg.layout()
    mask = torch.ones(header.n_tx, header.n_symbols, header.n_subcarriers, dtype=torch.bool)
    for port in range(header.n_tx):
        for s, c in layout.port_res(port):
            mask[port, s, c] = False
    return ls_t, grid_t.contiguous(), mask


def masked_mse(pred: torch.Tensor, target: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """MSE over real/imag parts restricted to each port's data REs."""
    diff2 = (pred - target) ** 2
    m = mask[None, None, :, None, :, :].to(diff2.dtype)
    return (diff2 * m).sum() / (m.sum() * diff2.shape[0] * diff2.shape[1] * 2)


def train(
    dataset_path,
    model_cfg: DceNetConfig | None = None,
    train_cfg: TrainConfig = TrainConfig(),
    out_dir=None,
    model_overrides: dict | None = None,
) -> TrainResult:
    header, channels, ls, _noise, _seeds = dataset.load(dataset_path)
    if model_cfg is None:
        model_cfg = DceNetConfig.from_header(header, **(model_overrides or {}))
    ls_t, grid_t, mask = prepare_tensors(header, channels, ls, model_cfg)

    torch.manual_seed(train_cfg.seed)
    model = DceNet(model_cfg)

    n = ls_t.shape[0]
    n_val = max(1, int(round(train_cfg.val_fraction * n)))
    val_ls, val_grid = ls_t[n - n_val :], grid_t[n - n_val :]
    tr_ls, tr_grid = ls_t[: n - n_val], grid_t[: n - n_val]
    if len(tr_ls) == 0:
        raise ValueError("dataset too small for the requested validation fraction")

    result = TrainResult()
    with torch.no_grad():
        baseline = model.interpolate_grid(val_ls)
        result.baseline_val_mse = float(masked_mse(baseline, val_grid, mask))

    optimizer = torch.optim.Adam(model.parameters(), lr=train_cfg.learning_rate)
    scheduler = torch.optim.lr_scheduler.StepLR(
        optimizer, step_size=train_cfg.lr_decay_every, gamma=train_cfg.lr_decay_gamma
    )
    order_rng = np.random.default_rng(train_cfg.seed)

    for epoch in range(train_cfg.epochs):
        model.train()
        perm = order_rng.permutation(len(tr_ls))
        total, batches = 0.0, 0
        for start in range(0, len(perm), train_cfg.batch_size):
            idx = perm[start : start + train_cfg.batch_size]
            optimizer.zero_grad()
            pred = model(tr_ls[idx])
            loss = masked_mse(pred, tr_grid[idx], mask)
            loss.backward()
            optimizer.step()
            total += loss.item()
            batches += 1
        scheduler.step()

        model.eval()
        with torch.no_grad():
            val_mse = float(masked_mse(model(val_ls), val_grid, mask))
        result.epochs.append(
            {"epoch": epoch, "train_mse": total / max(batches, 1), "val_mse": val_mse}
        )

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        ckpt = out_dir / "dcenet.pt"
        torch.save({"config": model_cfg, "state_dict": model.state_dict()}, ckpt)
        result.checkpoint_path = str(ckpt)
        with open(out_dir / "metrics.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["epoch", "train_mse", "val_mse"])
            writer.writeheader()
            writer.writerows(result.epochs)
    return result
