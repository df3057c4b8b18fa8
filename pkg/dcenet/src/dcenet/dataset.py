"""Reader for the binary channel dataset exported by the ce3d package.

The format is consumed strictly through its documented byte layout
(little-endian; "CE3D" magic, u32 version, seven u32 dims, then per sample
the interleaved float32 full-grid channel, interleaved float32 LS pilot
estimates, a float32 noise power, and a u64 seed). Pilot placement is not
part of the header, so the default comb convention of the exporter is
reconstructed here: DMRS symbol k_i = floor((i + 0.5) * n_symbols / K),
pilot subcarriers at stride n_subcarriers // n_p with port offset n.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

_HEADER = struct.Struct("<4sI7I")
_MAGIC = b"CE3D"
_VERSION = 1


class DatasetError(ValueError):
    """Malformed dataset file; the message names the offending field."""


@dataclass(frozen=True)
class GridHeader:
    n_samples: int
    n_rx: int
    n_tx: int
    n_symbols: int
    n_subcarriers: int
    k_dmrs: int
    n_p_per_symbol: int

    @property
    def n_pairs(self) -> int:
        return self.n_rx * self.n_tx

    @property
    def n_res(self) -> int:
        return self.n_symbols * self.n_subcarriers

    @property
    def grid_len(self) -> int:
        return self.n_pairs * self.n_res

    @property
    def pilots_per_port(self) -> int:
        return self.k_dmrs * self.n_p_per_symbol

    @property
    def ls_len(self) -> int:
        return self.n_pairs * self.pilots_per_port

    @property
    def sample_bytes(self) -> int:
        return 8 * self.grid_len + 8 * self.ls_len + 4 + 8


@dataclass(frozen=True)
class PilotLayout:
    """Per-port pilot coordinates on the (symbol, subcarrier) grid."""

    dmrs_symbols: tuple[int, ...]
    port_subcarriers: tuple[tuple[int, ...], ...]

    def port_res(self, port: int) -> list[tuple[int, int]]:
        return [(s, c) for s in self.dmrs_symbols for c in self.port_subcarriers[port]]

    def port_flat_indices(self, port: int, n_subcarriers: int) -> np.ndarray:
        return np.array([s * n_subcarriers + c for s, c in self.port_res(port)], dtype=np.int64)


def default_layout(header: GridHeader, dmrs_symbols=None) -> PilotLayout:
    """The exporter's default comb pattern, reconstructed from the header."""
    k, n_p = header.k_dmrs, header.n_p_per_symbol
    if dmrs_symbols is None:
        dmrs_symbols = tuple(int((i + 0.5) * header.n_symbols / k) for i in range(k))
    else:
        dmrs_symbols = tuple(dmrs_symbols)
        if len(dmrs_symbols) != k:
            raise DatasetError(f"dmrs_symbols: expected {k} entries, got {len(dmrs_symbols)}")
    stride = header.n_subcarriers // n_p
    if stride < 1 or header.n_tx > stride:
        raise DatasetError("n_p_per_symbol: comb does not fit the subcarrier count")
    ports = tuple(
        tuple(sorted((n + j * stride) % header.n_subcarriers for j in range(n_p)))
        for n in range(header.n_tx)
    )
    return PilotLayout(dmrs_symbols=dmrs_symbols, port_subcarriers=ports)


def read_header(path) -> GridHeader:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise DatasetError(f"{path}: header: file shorter than {_HEADER.size} bytes")
    magic, version, *dims = _HEADER.unpack(raw)
    if magic != _MAGIC:
        raise DatasetError(f"{path}: magic: expected {_MAGIC!r}, got {magic!r}")
    if version != _VERSION:
        raise DatasetError(f"{path}: version: expected {_VERSION}, got {version}")
    header = GridHeader(*dims)
    for name in ("n_samples", "n_rx", "n_tx", "n_symbols", "n_subcarriers", "k_dmrs",
                 "n_p_per_symbol"):
        if getattr(header, name) < 1:
            raise DatasetError(f"{path}: {name}: must be positive, got {getattr(header, name)}")
    return header


def load(path):
    """Read the whole file into (header, channels, ls, noise_powers, seeds).

    Channel rows follow the exporter's stacking: receive antenna outermost,
    then transmit, then symbol, then subcarrier. LS rows stack antenna pairs
    the same way, pilots symbol-major.
    """
    header = read_header(path)
    channels = np.empty((header.n_samples, header.grid_len), dtype=np.complex64)
    ls = np.empty((header.n_samples, header.ls_len), dtype=np.complex64)
    noise = np.empty(header.n_samples, dtype=np.float32)
    seeds = np.empty(header.n_samples, dtype=np.uint64)
    with open(path, "rb") as fh:
        fh.seek(_HEADER.size)
        for i in range(header.n_samples):
            buf = fh.read(header.sample_bytes)
            if len(buf) < header.sample_bytes:
                raise DatasetError(f"{path}: sample {i}: truncated record")
            g = np.frombuffer(buf, dtype="<f4", count=2 * header.grid_len)
            channels[i] = g[0::2] + 1j * g[1::2]
            off = 8 * header.grid_len
            l = np.frombuffer(buf, dtype="<f4", count=2 * header.ls_len, offset=off)
            ls[i] = l[0::2] + 1j * l[1::2]
            noise[i], seeds[i] = struct.unpack_from("<fQ", buf, off + 8 * header.ls_len)
    return header, channels, ls, noise, seeds
