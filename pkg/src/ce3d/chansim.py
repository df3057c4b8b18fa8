"""Correlated channel realizations, pilot observations, and LS estimates.

Sampling applies the eigen square roots of the four correlation factors to
an i.i.d. complex Gaussian tensor, one axis per factor, so the dense
covariance square root is never materialized.

Reproducibility: every operation derives its generator from
(seed, stream tag) through a counter-based Philox stream, so channel,
pilot, and noise draws are independent and order-insensitive.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .corrmodel import CorrelationSet
from .gridmodel import DmrsPattern, GridConfig, selection_matrix_full

STREAM_CHANNEL = 0
STREAM_PILOTS = 1
STREAM_NOISE = 2
STREAM_SNR = 3

_QPSK = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2.0)


def make_stream(*seed_parts: int) -> np.random.Generator:
    """Philox generator keyed on a tuple of integers."""
    ss = np.random.SeedSequence([int(p) & 0xFFFFFFFFFFFFFFFF for p in seed_parts])
    return np.random.Generator(np.random.Philox(ss))


def derive_trial_seed(master_seed: int, trial: int) -> int:
    """Stable 64-bit per-trial seed; independent of execution order."""
    return int(
        np.random.SeedSequence([master_seed, trial]).generate_state(1, dtype=np.uint64)[0]
    )


@dataclass(frozen=True)
class ChannelRealization:
    """One draw of the stacked full-grid channel vector."""

    h: np.ndarray
    seed: int
    grid: GridConfig

    def as_grid(self) -> np.ndarray:
        """View shaped (n_rx, n_tx, n_symbols, n_subcarriers)."""
        g = self.grid
        return self.h.reshape(g.n_rx, g.n_tx, g.n_symbols, g.n_subcarriers)


@dataclass(frozen=True)
class PilotObservation:
    """Received pilot vector, per-port pilot symbols, and the noise level."""

    y: np.ndarray
    pilots: tuple[np.ndarray, ...]
    noise_power: float
    pattern: DmrsPattern
    grid: GridConfig


def draw_channels(corr: CorrelationSet, grid: GridConfig, seed: int, n: int) -> np.ndarray:
    """n stacked channel vectors as rows; E{h h^H} equals the assembled covariance."""
    l_rx, l_tx, l_t, l_f = corr.factor_sqrts
    shape = (n, grid.n_rx, grid.n_tx, grid.n_symbols, grid.n_subcarriers)
    rng = make_stream(seed, STREAM_CHANNEL)
    g = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    g /= np.sqrt(2.0)
    out = np.einsum("ab,nbcde->nacde", l_rx, g)
    out = np.einsum("cb,nabde->nacde", l_tx, out)
    out = np.einsum("db,nacbe->nacde", l_t, out)
    out = np.einsum("eb,nacdb->nacde", l_f, out)
    return out.reshape(n, grid.dim)


def draw_channel(corr: CorrelationSet, grid: GridConfig, seed: int) -> ChannelRealization:
    h = draw_channels(corr, grid, seed, 1)[0]
    return ChannelRealization(h=h, seed=seed, grid=grid)


def generate_pilots(pattern: DmrsPattern, seed: int) -> tuple[np.ndarray, ...]:
    """Unit-modulus QPSK pilot diagonals, one vector per transmit port."""
    rng = make_stream(seed, STREAM_PILOTS)
    count = pattern.pilot_count
    return tuple(_QPSK[rng.integers(0, 4, size=count)] for _ in range(pattern.n_ports))


def observe(
    chan: ChannelRealization,
    pilots: tuple[np.ndarray, ...],
    pattern: DmrsPattern,
    noise_power: float,
    seed: int,
) -> PilotObservation:
    """Pilot-domain received vector: per pair, pilot-modulated channel plus AWGN."""
    if noise_power < 0:
        raise ValueError("noise_power must be nonnegative")
    grid = chan.grid
    sel = selection_matrix_full(pattern, grid)
    h_sel = chan.h[sel.row_to_col]
    pilot_full = np.concatenate(
        [pilots[p % grid.n_tx] for p in range(grid.n_pairs)]
    )
    y = pilot_full * h_sel
    if noise_power > 0:
        rng = make_stream(seed, STREAM_NOISE)
        w = rng.standard_normal(len(y)) + 1j * rng.standard_normal(len(y))
        y = y + np.sqrt(noise_power / 2.0) * w
    return PilotObservation(
        y=y, pilots=pilots, noise_power=float(noise_power), pattern=pattern, grid=grid
    )


def ls_estimate(obs: PilotObservation) -> np.ndarray:
    """Per-pilot least-squares estimate: divide by the known pilot symbol.

    The estimation error is white with variance equal to the observation
    noise power because the pilots have unit modulus.
    """
    grid = obs.grid
    pilot_full = np.concatenate(
        [obs.pilots[p % grid.n_tx] for p in range(grid.n_pairs)]
    )
    if np.any(pilot_full == 0):
        raise ZeroDivisionError("pilot symbols must be nonzero")
    return obs.y / pilot_full


# ---------------------------------------------------------------------------
# Binary dataset format (training export)
# ---------------------------------------------------------------------------
# Little-endian. Header: magic "CE3D", version u32, then seven u32 dims
# (n_samples, n_rx, n_tx, n_symbols, n_subcarriers, k_dmrs, n_p_per_symbol).
# Per sample: full-grid channel as float32 re/im interleaved in the stacking
# order (rx, tx, symbol, subcarrier), LS pilot estimates as float32 re/im
# interleaved (pairs stacked, pilots symbol-major), noise power float32,
# sample seed u64.

DATASET_MAGIC = b"CE3D"
DATASET_VERSION = 1
_HEADER = struct.Struct("<4sI7I")


@dataclass(frozen=True)
class DatasetHeader:
    n_samples: int
    n_rx: int
    n_tx: int
    n_symbols: int
    n_subcarriers: int
    k_dmrs: int
    n_p_per_symbol: int

    @property
    def grid_len(self) -> int:
        return self.n_rx * self.n_tx * self.n_symbols * self.n_subcarriers

    @property
    def ls_len(self) -> int:
        return self.n_rx * self.n_tx * self.k_dmrs * self.n_p_per_symbol

    @property
    def sample_bytes(self) -> int:
        return 8 * self.grid_len + 8 * self.ls_len + 4 + 8


def _interleave(z: np.ndarray) -> np.ndarray:
    out = np.empty(2 * len(z), dtype="<f4")
    out[0::2] = z.real
    out[1::2] = z.imag
    return out


def write_dataset(path, header: DatasetHeader, samples) -> None:
    """Stream (channel, ls, noise_power, seed) tuples to the binary format."""
    count = 0
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                DATASET_MAGIC,
                DATASET_VERSION,
                header.n_samples,
                header.n_rx,
                header.n_tx,
                header.n_symbols,
                header.n_subcarriers,
                header.k_dmrs,
                header.n_p_per_symbol,
            )
        )
        for h, ls, noise_power, seed in samples:
            if len(h) != header.grid_len or len(ls) != header.ls_len:
                raise ValueError("sample shape does not match dataset header")
            fh.write(_interleave(np.asarray(h)).tobytes())
            fh.write(_interleave(np.asarray(ls)).tobytes())
            fh.write(struct.pack("<fQ", float(noise_power), int(seed)))
            count += 1
    if count != header.n_samples:
        raise ValueError(f"wrote {count} samples, header promised {header.n_samples}")


def read_dataset_header(path) -> DatasetHeader:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated dataset header")
    magic, version, *dims = _HEADER.unpack(raw)
    if magic != DATASET_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != DATASET_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    return DatasetHeader(*dims)


def read_dataset(path):
    """Load the whole file: header plus (channels, ls, noise_powers, seeds)."""
    header = read_dataset_header(path)
    channels = np.empty((header.n_samples, header.grid_len), dtype=np.complex64)
    ls = np.empty((header.n_samples, header.ls_len), dtype=np.complex64)
    noise = np.empty(header.n_samples, dtype=np.float32)
    seeds = np.empty(header.n_samples, dtype=np.uint64)
    with open(path, "rb") as fh:
        fh.seek(_HEADER.size)
        for i in range(header.n_samples):
            buf = fh.read(header.sample_bytes)
            if len(buf) < header.sample_bytes:
                raise ValueError(f"{path}: truncated at sample {i}")
            gh = np.frombuffer(buf, dtype="<f4", count=2 * header.grid_len)
            channels[i] = gh[0::2] + 1j * gh[1::2]
            off = 8 * header.grid_len
            gl = np.frombuffer(buf, dtype="<f4", count=2 * header.ls_len, offset=off)
            ls[i] = gl[0::2] + 1j * gl[1::2]
            noise[i], seeds[i] = struct.unpack_from("<fQ", buf, off + 8 * header.ls_len)
    return header, channels, ls, noise, seeds
