"""Dual-attention channel estimation network.

Pipeline, with every named stage shape-asserted at runtime:

1. scatter per-port LS pilot estimates onto the grid and fill data REs by
   Gaussian interpolation; a residual SRCNN refines the grid; pilot REs are
   then overwritten with the raw LS values, giving the combined tensor of
   shape (batch, n_rx, n_tx, 2, n_symbols, n_subcarriers);
2. the last three axes merge to length L = 2 * n_symbols * n_subcarriers, a
   linear layer compresses L -> d, and spatial attention blocks gate the
   (batch, d, n_rx, n_tx) tensor with a sigmoid map pooled over channels;
3. a two-layer feed-forward block and a linear layer recover length L, the
   tensor is rearranged to (L, batch, n_rx, n_tx), compressed over the
   antenna axes to d, positionally encoded, and run through transformer
   encoder blocks;
4. a zero-initialized head projects back to the antenna axes and is added
   to the combined grid, so an untrained network reproduces the
   interpolation baseline exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .dataset import GridHeader, PilotLayout, default_layout


class ShapeError(AssertionError):
    pass


def _expect(tensor: torch.Tensor, shape: tuple[int, ...], stage: str) -> None:
    if tuple(tensor.shape) != shape:
        raise ShapeError(f"{stage}: expected shape {shape}, got {tuple(tensor.shape)}")


@dataclass(frozen=True)
class DceNetConfig:
    """Model and grid geometry; sequence length is 2 * n_symbols * n_subcarriers."""

    n_rx: int
    n_tx: int
    n_symbols: int
    n_subcarriers: int
    k_dmrs: int
    n_p_per_symbol: int
    d: int = 512
    d_ff: int = 512
    n_heads: int = 4
    n_encoders: int = 4
    n_sa_blocks: int = 1
    interp_bandwidth: float = 1.5
    dmrs_symbols: tuple[int, ...] | None = None

    def __post_init__(self):
        for name in ("n_rx", "n_tx", "n_symbols", "n_subcarriers", "k_dmrs",
                     "n_p_per_symbol", "d", "d_ff", "n_heads", "n_encoders", "n_sa_blocks"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.d % self.n_heads != 0:
            raise ValueError(f"d={self.d} must be divisible by n_heads={self.n_heads}")
        if self.interp_bandwidth <= 0:
            raise ValueError("interp_bandwidth must be positive")

    @property
    def seq_len(self) -> int:
        return 2 * self.n_symbols * self.n_subcarriers

    @property
    def n_pairs(self) -> int:
        return self.n_rx * self.n_tx

    @property
    def header(self) -> GridHeader:
        return GridHeader(
            n_samples=0,
            n_rx=self.n_rx,
            n_tx=self.n_tx,
            n_symbols=self.n_symbols,
            n_subcarriers=self.n_subcarriers,
            k_dmrs=self.k_dmrs,
            n_p_per_symbol=self.n_p_per_symbol,
        )

    def layout(self) -> PilotLayout:
        return default_layout(self.header, self.dmrs_symbols)

    @classmethod
    def from_header(cls, header: GridHeader, **overrides) -> "DceNetConfig":
        return cls(
            n_rx=header.n_rx,
            n_tx=header.n_tx,
            n_symbols=header.n_symbols,
            n_subcarriers=header.n_subcarriers,
            k_dmrs=header.k_dmrs,
            n_p_per_symbol=header.n_p_per_symbol,
            **overrides,
        )


def gaussian_interp_weights(cfg: DceNetConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row-normalized Gaussian interpolation weights per transmit port.

    Returns (weights, data_indices, pilot_indices) with weights of shape
    (n_tx, n_data, pilots_per_port): convex combinations over pilot REs by
    Euclidean distance in (symbol, subcarrier) index space.
    """
    layout = cfg.layout()
    n_res = cfg.n_symbols * cfg.n_subcarriers
    n_pil = cfg.k_dmrs * cfg.n_p_per_symbol
    n_dat = n_res - n_pil
    weights = np.empty((cfg.n_tx, n_dat, n_pil))
    data_idx = np.empty((cfg.n_tx, n_dat), dtype=np.int64)
    pilot_idx = np.empty((cfg.n_tx, n_pil), dtype=np.int64)
    coords = np.array([(s, c) for s in range(cfg.n_symbols) for c in range(cfg.n_subcarriers)])
    for port in range(cfg.n_tx):
        p_idx = layout.port_flat_indices(port, cfg.n_subcarriers)
        mask = np.ones(n_res, dtype=bool)
        mask[p_idx] = False
        d_idx = np.nonzero(mask)[0]
        diff = coords[d_idx, None, :] - coords[None, p_idx, :]
        dist2 = np.sum(diff.astype(float) ** 2, axis=-1)
        w = np.exp(-dist2 / (2.0 * cfg.interp_bandwidth**2))
        weights[port] = w / w.sum(axis=1, keepdims=True)
        data_idx[port] = d_idx
        pilot_idx[port] = p_idx
    return weights, data_idx, pilot_idx


class Srcnn(nn.Module):
    """Three-layer convolutional refiner with a zero-initialized residual."""

    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv2d(2, 64, kernel_size=9, padding=4)
        self.conv2 = nn.Conv2d(64, 32, kernel_size=1)
        self.conv3 = nn.Conv2d(32, 2, kernel_size=5, padding=2)
        nn.init.zeros_(self.conv3.weight)
        nn.init.zeros_(self.conv3.bias)

    def forward(self, x):
        y = torch.relu(self.conv1(x))
        y = torch.relu(self.conv2(y))
        return x + self.conv3(y)


class SpatialAttention(nn.Module):
    """Channel-pooled sigmoid gate over the antenna axes."""

    def __init__(self):
        super().__init__()
        self.conv = nn.Conv2d(2, 1, kernel_size=7, padding=3)

    def forward(self, x, collect: dict | None = None):
        b, _, n_rx, n_tx = x.shape
        x_mean = x.mean(dim=1, keepdim=True)
        x_max = x.amax(dim=1, keepdim=True)
        _expect(x_mean, (b, 1, n_rx, n_tx), "sa.x_mean")
        _expect(x_max, (b, 1, n_rx, n_tx), "sa.x_max")
        if collect is not None:
            collect["x_mean"] = tuple(x_mean.shape)
            collect["x_max"] = tuple(x_max.shape)
        pooled = torch.cat([x_mean, x_max], dim=1)
        scale = torch.sigmoid(self.conv(pooled))
        _expect(scale, (b, 1, n_rx, n_tx), "sa.scale")
        return x * scale


class PositionalEncoding(nn.Module):
    """Fixed sinusoidal encoding over the flattened grid sequence."""

    def __init__(self, length: int, d: int):
        super().__init__()
        position = torch.arange(length, dtype=torch.float64).unsqueeze(1)
        half = torch.arange(0, d, 2, dtype=torch.float64)
        div = torch.exp(-half * math.log(10000.0) / d)
        pe = torch.zeros(length, 1, d, dtype=torch.float64)
        pe[:, 0, 0::2] = torch.sin(position * div)
        pe[:, 0, 1::2] = torch.cos(position * div)[:, : pe[:, 0, 1::2].shape[-1]]
        self.register_buffer("pe", pe.to(torch.get_default_dtype()))

    def forward(self, x):
        return x + self.pe.to(x.dtype)


class DceNet(nn.Module):
    """Interpolation, SRCNN, spatial attention, and time-frequency attention."""

    def __init__(self, cfg: DceNetConfig):
        super().__init__()
        self.cfg = cfg
        weights, data_idx, pilot_idx = gaussian_interp_weights(cfg)
        self.register_buffer("interp", torch.from_numpy(weights).float())
        self.register_buffer("data_idx", torch.from_numpy(data_idx))
        self.register_buffer("pilot_idx", torch.from_numpy(pilot_idx))

        self.srcnn = Srcnn()
        self.compress = nn.Linear(cfg.seq_len, cfg.d)
        self.sa_blocks = nn.ModuleList(SpatialAttention() for _ in range(cfg.n_sa_blocks))
        self.ffn = nn.Sequential(
            nn.Linear(cfg.d, cfg.d_ff), nn.ReLU(), nn.Linear(cfg.d_ff, cfg.d)
        )
        self.recover = nn.Linear(cfg.d, cfg.seq_len)
        self.spatial_compress = nn.Linear(cfg.n_pairs, cfg.d)
        self.pos_encoding = PositionalEncoding(cfg.seq_len, cfg.d)
        self.encoders = nn.ModuleList(
            nn.TransformerEncoderLayer(
                d_model=cfg.d,
                nhead=cfg.n_heads,
                dim_feedforward=cfg.d_ff,
                dropout=0.0,
                batch_first=False,
            )
            for _ in range(cfg.n_encoders)
        )
        self.head = nn.Linear(cfg.d, cfg.n_pairs)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    # -- preprocessing ------------------------------------------------------

    def interpolate_grid(self, ls: torch.Tensor) -> torch.Tensor:
        """Scatter LS pilots and fill data REs by Gaussian interpolation.

        ls: (batch, n_rx, n_tx, pilots_per_port, 2) real/imag pairs.
        Returns (batch, n_rx, n_tx, 2, n_symbols, n_subcarriers).
        """
        cfg = self.cfg
        b = ls.shape[0]
        n_res = cfg.n_symbols * cfg.n_subcarriers
        _expect(ls, (b, cfg.n_rx, cfg.n_tx, self.pilot_idx.shape[1], 2), "preprocess.ls")
        grid = ls.new_zeros((b, cfg.n_rx, cfg.n_tx, n_res, 2))
        for port in range(cfg.n_tx):
            port_ls = ls[:, :, port]  # (b, n_rx, n_pil, 2)
            interp = torch.einsum("dp,brpi->brdi", self.interp[port].to(ls.dtype), port_ls)
            grid[:, :, port, self.data_idx[port]] = interp
            grid[:, :, port, self.pilot_idx[port]] = port_ls
        grid = grid.permute(0, 1, 2, 4, 3).reshape(
            b, cfg.n_rx, cfg.n_tx, 2, cfg.n_symbols, cfg.n_subcarriers
        )
        return grid

    def preprocess(self, ls: torch.Tensor, collect: dict | None = None) -> torch.Tensor:
        """Interpolated grid refined by the SRCNN, pilots re-imposed."""
        cfg = self.cfg
        grid = self.interpolate_grid(ls)
        b = grid.shape[0]
        images = grid.reshape(b * cfg.n_pairs, 2, cfg.n_symbols, cfg.n_subcarriers)
        refined = self.srcnn(images).reshape(grid.shape)
        flat = refined.reshape(b, cfg.n_rx, cfg.n_tx, 2, -1).clone()
        for port in range(cfg.n_tx):
            flat[:, :, port, :, self.pilot_idx[port]] = ls[:, :, port].permute(0, 1, 3, 2)
        combined = flat.reshape(grid.shape)
        _expect(
            combined,
            (b, cfg.n_rx, cfg.n_tx, 2, cfg.n_symbols, cfg.n_subcarriers),
            "preprocess.combined",
        )
        if collect is not None:
            collect["h_out_6d"] = tuple(combined.shape)
        return combined

    # -- full forward -------------------------------------------------------

    def forward(self, ls: torch.Tensor, collect: dict | None = None) -> torch.Tensor:
        cfg = self.cfg
        b = ls.shape[0]
        combined = self.preprocess(ls, collect)

        x_bar = combined.reshape(b, cfg.n_rx, cfg.n_tx, cfg.seq_len)
        _expect(x_bar, (b, cfg.n_rx, cfg.n_tx, cfg.seq_len), "sa.x_bar")
        x = self.compress(x_bar).permute(0, 3, 1, 2)
        _expect(x, (b, cfg.d, cfg.n_rx, cfg.n_tx), "sa.x")
        if collect is not None:
            collect["x_bar"] = tuple(x_bar.shape)
            collect["x"] = tuple(x.shape)
        for block in self.sa_blocks:
            x = block(x, collect)
            _expect(x, (b, cfg.d, cfg.n_rx, cfg.n_tx), "sa.out")

        y = x.permute(0, 2, 3, 1)
        y = self.ffn(y)
        y = self.recover(y)
        x_tfa = y.reshape(b, cfg.n_rx, cfg.n_tx, cfg.seq_len).permute(3, 0, 1, 2)
        _expect(x_tfa, (cfg.seq_len, b, cfg.n_rx, cfg.n_tx), "tfa.x_tfa")
        if collect is not None:
            collect["x_tfa"] = tuple(x_tfa.shape)

        z = self.spatial_compress(x_tfa.reshape(cfg.seq_len, b, cfg.n_pairs))
        z = self.pos_encoding(z)
        _expect(z, (cfg.seq_len, b, cfg.d), "tfa.x_bar_tfa")
        if collect is not None:
            collect["x_bar_tfa"] = tuple(z.shape)
        for encoder in self.encoders:
            z = encoder(z)
            _expect(z, (cfg.seq_len, b, cfg.d), "tfa.encoder_out")

        correction = self.head(z)  # (L, b, n_pairs)
        correction = correction.reshape(
            2, cfg.n_symbols, cfg.n_subcarriers, b, cfg.n_rx, cfg.n_tx
        ).permute(3, 4, 5, 0, 1, 2)
        out = combined + correction
        _expect(
            out, (b, cfg.n_rx, cfg.n_tx, 2, cfg.n_symbols, cfg.n_subcarriers), "output"
        )
        if collect is not None:
            collect["output"] = tuple(out.shape)
        return out
