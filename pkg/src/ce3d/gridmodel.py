"""OFDM resource grid, DMRS pilot patterns, and pilot selection matrices.

Vectorization convention used throughout the package:

* within one OFDM symbol, subcarriers are contiguous (frequency-fastest),
  so RE (symbol s, subcarrier c) sits at index ``s * n_subcarriers + c``;
* antenna pairs (m, n) stack with the transmit index fastest, pair index
  ``p = m * n_tx + n``;
* the full channel vector concatenates the per-pair grid vectors, so the
  global index is ``p * n_res + s * n_subcarriers + c``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class ConfigurationError(ValueError):
    """Raised when grid / pattern parameters are inconsistent."""


class SeparabilityError(ValueError):
    """Raised when a pilot pattern is not a time x frequency product set."""


@dataclass(frozen=True)
class GridConfig:
    """Dimensions and physical spacing of one MIMO-OFDM subframe."""

    n_subcarriers: int
    n_symbols: int
    n_rx: int
    n_tx: int
    subcarrier_spacing_hz: float = 15e3
    symbol_duration_s: float = 1e-3 / 14

    def __post_init__(self):
        for name in ("n_subcarriers", "n_symbols", "n_rx", "n_tx"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.subcarrier_spacing_hz <= 0:
            raise ConfigurationError("subcarrier_spacing_hz must be positive")
        if self.symbol_duration_s <= 0:
            raise ConfigurationError("symbol_duration_s must be positive")

    @property
    def n_res(self) -> int:
        """Resource elements per antenna pair (all symbols, all subcarriers)."""
        return self.n_subcarriers * self.n_symbols

    @property
    def n_pairs(self) -> int:
        return self.n_rx * self.n_tx

    @property
    def dim(self) -> int:
        """Length of the stacked full-grid channel vector."""
        return self.n_res * self.n_pairs

    def symbol_times(self) -> np.ndarray:
        return np.arange(self.n_symbols) * self.symbol_duration_s

    def re_index(self, symbol: int, subcarrier: int) -> int:
        return symbol * self.n_subcarriers + subcarrier

    def pair_index(self, rx: int, tx: int) -> int:
        return rx * self.n_tx + tx


@dataclass(frozen=True)
class DmrsPattern:
    """Per-port DMRS placement on the grid.

    ``per_port_res[n]`` lists the pilot REs of transmit port n as
    (symbol, subcarrier) pairs in symbol-major order (all pilots of the
    first DMRS symbol first, subcarriers ascending within a symbol).
    """

    dmrs_symbols: tuple[int, ...]
    per_port_res: tuple[tuple[tuple[int, int], ...], ...]
    pilots_per_symbol: int
    shared: bool = False

    def __post_init__(self):
        if len(self.dmrs_symbols) == 0:
            raise ConfigurationError("pattern needs at least one DMRS symbol")
        if list(self.dmrs_symbols) != sorted(set(self.dmrs_symbols)):
            raise ConfigurationError("dmrs_symbols must be strictly increasing")
        k = len(self.dmrs_symbols)
        for n, res in enumerate(self.per_port_res):
            if len(res) != k * self.pilots_per_symbol:
                raise ConfigurationError(
                    f"port {n} has {len(res)} pilot REs, expected {k * self.pilots_per_symbol}"
                )
        if not self.shared:
            seen: set[tuple[int, int]] = set()
            for res in self.per_port_res:
                overlap = seen.intersection(res)
                if overlap:
                    raise ConfigurationError(f"ports overlap on REs {sorted(overlap)}")
                seen.update(res)

    @property
    def n_ports(self) -> int:
        return len(self.per_port_res)

    @property
    def k_symbols(self) -> int:
        return len(self.dmrs_symbols)

    @property
    def pilot_count(self) -> int:
        """Pilot REs per port over the K DMRS symbols."""
        return self.k_symbols * self.pilots_per_symbol

    def data_count(self, grid: GridConfig) -> int:
        """Data REs per port (interpolation target size)."""
        return grid.n_res - self.pilot_count

    def port_subcarriers(self, port: int) -> tuple[tuple[int, ...], ...]:
        """Subcarrier sets per DMRS symbol for one port."""
        out = []
        for s in self.dmrs_symbols:
            out.append(tuple(c for (sym, c) in self.per_port_res[port] if sym == s))
        return tuple(out)

    def is_separable(self, port: int) -> bool:
        """True if the port's pilot set is a symbols x subcarriers product."""
        per_symbol = self.port_subcarriers(port)
        return all(cs == per_symbol[0] for cs in per_symbol[1:])


@dataclass(frozen=True)
class SelectionMatrix:
    """A 0/1 matrix with exactly one unit entry per row.

    Stored as the per-row column index; rows are orthonormal by construction.
    """

    rows: int
    cols: int
    row_to_col: np.ndarray = field(repr=False)

    def __post_init__(self):
        rtc = np.asarray(self.row_to_col, dtype=np.int64)
        object.__setattr__(self, "row_to_col", rtc)
        if rtc.shape != (self.rows,):
            raise ConfigurationError("row_to_col length must equal rows")
        if rtc.min(initial=0) < 0 or (self.rows and rtc.max() >= self.cols):
            raise ConfigurationError("row_to_col entries out of range")
        if len(np.unique(rtc)) != self.rows:
            raise ConfigurationError("row_to_col must be injective")

    def as_array(self) -> np.ndarray:
        a = np.zeros((self.rows, self.cols))
        a[np.arange(self.rows), self.row_to_col] = 1.0
        return a

    def select(self, x: np.ndarray) -> np.ndarray:
        """Apply to a vector or to the leading axis of a matrix."""
        return x[self.row_to_col]

    def embed(self, y: np.ndarray) -> np.ndarray:
        """Transpose application: scatter rows back into the column space."""
        shape = (self.cols,) + y.shape[1:]
        out = np.zeros(shape, dtype=y.dtype)
        out[self.row_to_col] = y
        return out


def default_dmrs_symbols(n_symbols: int, k: int) -> tuple[int, ...]:
    """Evenly spread K DMRS symbols; gives {3, 10} for 14 symbols and K=2."""
    return tuple(int((i + 0.5) * n_symbols / k) for i in range(k))


def build_default_pattern(
    grid: GridConfig,
    k_dmrs_symbols: int,
    n_p_per_symbol: int,
    dmrs_symbols: tuple[int, ...] | None = None,
    shared: bool = False,
) -> DmrsPattern:
    """Comb-type DMRS pattern with per-port cyclic frequency offsets.

    Pilot subcarriers are spread with stride ``n_subcarriers // n_p`` and
    port n is offset by n, so the per-port sets are cyclic shifts of each
    other and mutually disjoint. With ``shared=True`` every port reuses the
    port-0 comb (useful for estimators that assume a common pattern).
    """
    if k_dmrs_symbols > grid.n_symbols:
        raise ConfigurationError("more DMRS symbols requested than grid symbols")
    if n_p_per_symbol < 1:
        raise ConfigurationError("need at least one pilot per DMRS symbol")
    stride = grid.n_subcarriers // n_p_per_symbol
    if stride < 1 or (not shared and grid.n_tx > stride) or n_p_per_symbol > grid.n_subcarriers:
        raise ConfigurationError(
            f"{n_p_per_symbol} pilots x {grid.n_tx} ports do not fit in "
            f"{grid.n_subcarriers} subcarriers"
        )
    if dmrs_symbols is None:
        dmrs_symbols = default_dmrs_symbols(grid.n_symbols, k_dmrs_symbols)
    else:
        dmrs_symbols = tuple(dmrs_symbols)
        if len(dmrs_symbols) != k_dmrs_symbols:
            raise ConfigurationError("dmrs_symbols length must equal k_dmrs_symbols")
        if any(s < 0 or s >= grid.n_symbols for s in dmrs_symbols):
            raise ConfigurationError("dmrs_symbols out of range")

    ports = []
    for n in range(grid.n_tx):
        offset = 0 if shared else n
        subcarriers = [(offset + j * stride) % grid.n_subcarriers for j in range(n_p_per_symbol)]
        subcarriers.sort()
        res = tuple((s, c) for s in dmrs_symbols for c in subcarriers)
        ports.append(res)
    return DmrsPattern(
        dmrs_symbols=dmrs_symbols,
        per_port_res=tuple(ports),
        pilots_per_symbol=n_p_per_symbol,
        shared=shared,
    )


def full_pilot_pattern(grid: GridConfig) -> DmrsPattern:
    """Degenerate pattern where every RE of every symbol is a pilot (shared)."""
    symbols = tuple(range(grid.n_symbols))
    res = tuple((s, c) for s in symbols for c in range(grid.n_subcarriers))
    return DmrsPattern(
        dmrs_symbols=symbols,
        per_port_res=tuple(res for _ in range(grid.n_tx)),
        pilots_per_symbol=grid.n_subcarriers,
        shared=True,
    )


def selection_matrix_port(pattern: DmrsPattern, port: int, grid: GridConfig) -> SelectionMatrix:
    """Selection matrix of one transmit port, pilot REs -> full per-pair grid."""
    if port < 0 or port >= pattern.n_ports:
        raise ConfigurationError(f"port {port} out of range [0, {pattern.n_ports})")
    cols = [grid.re_index(s, c) for (s, c) in pattern.per_port_res[port]]
    return SelectionMatrix(rows=len(cols), cols=grid.n_res, row_to_col=np.array(cols))


def selection_matrix_full(pattern: DmrsPattern, grid: GridConfig) -> SelectionMatrix:
    """Block selection over all antenna pairs, transmit index fastest.

    Row block p = m * n_tx + n holds port n's selection shifted into the
    p-th per-pair segment of the stacked channel vector.
    """
    if pattern.n_ports != grid.n_tx:
        raise ConfigurationError("pattern port count must match n_tx")
    per_port = [selection_matrix_port(pattern, n, grid).row_to_col for n in range(grid.n_tx)]
    blocks = []
    for m in range(grid.n_rx):
        for n in range(grid.n_tx):
            p = grid.pair_index(m, n)
            blocks.append(per_port[n] + p * grid.n_res)
    rtc = np.concatenate(blocks)
    return SelectionMatrix(rows=len(rtc), cols=grid.dim, row_to_col=rtc)


def selection_matrices_1d(
    pattern: DmrsPattern, port: int, grid: GridConfig
) -> tuple[SelectionMatrix, SelectionMatrix]:
    """Factor a separable port pattern into time and frequency selections.

    Returns (time selection K x n_symbols, frequency selection N_p x
    n_subcarriers) whose Kronecker product equals the port's 2D selection
    under the symbol-major, frequency-fastest vectorization.
    """
    if not pattern.is_separable(port):
        raise SeparabilityError(
            f"port {port} pilot set is not a Cartesian product of symbols and subcarriers"
        )
    sel_t = SelectionMatrix(
        rows=pattern.k_symbols,
        cols=grid.n_symbols,
        row_to_col=np.array(pattern.dmrs_symbols),
    )
    subcarriers = pattern.port_subcarriers(port)[0]
    sel_f = SelectionMatrix(
        rows=len(subcarriers),
        cols=grid.n_subcarriers,
        row_to_col=np.array(subcarriers),
    )
    return sel_t, sel_f


def render_pattern(pattern: DmrsPattern, grid: GridConfig) -> str:
    """ASCII view of the pattern: rows are subcarriers, columns are symbols.

    Port indices 0-9 mark pilot REs, '.' marks data REs, '*' marks REs
    claimed by more than one port (shared patterns).
    """
    cells = [["." for _ in range(grid.n_symbols)] for _ in range(grid.n_subcarriers)]
    for n, res in enumerate(pattern.per_port_res):
        mark = str(n) if n < 10 else "#"
        for (s, c) in res:
            cells[c][s] = mark if cells[c][s] == "." else "*"
    header = "sc\\sym " + " ".join(f"{s:>2d}" for s in range(grid.n_symbols))
    lines = [header]
    for c in range(grid.n_subcarriers):
        lines.append(f"{c:>6d} " + "  ".join(cells[c]))
    return "\n".join(lines)
