"""Spatial, time, and frequency channel correlation factors.

The stacked channel covariance factors as a Kronecker product of four
matrices: receive-side spatial x transmit-side spatial x time x frequency.
All factors are built with unit diagonal (unit channel power per RE), which
the closed-form noise-power allocation in :mod:`ce3d.estimators` relies on.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from functools import cached_property
from importlib import resources

import numpy as np
from scipy.linalg import toeplitz

from .textconfig import parse_sections

log = logging.getLogger(__name__)

PSD_EIG_TOL = 1e-10
PSD_JITTER = 1e-12


class DecompositionError(ValueError):
    """Raised when a correlation factor is not PSD even after jitter."""


# ---------------------------------------------------------------------------
# Bessel J0 (Cephes-style rational approximations)
# ---------------------------------------------------------------------------
# Interval [0, 5]: (w - r1^2)(w - r2^2) P3(w)/Q8(w) with w = x^2 and r1, r2
# the first two zeros. Interval (5, inf): Hankel asymptotic expansion with
# 6/6 and 7/7 rational functions. Peak error is a few ULP over [0, 50].

_RP = np.array([
    -4.79443220978201773821e9,
    1.95617491946556577543e12,
    -2.49248344360967716204e14,
    9.70862251047306323952e15,
])
_RQ = np.array([  # leading coefficient 1 implied
    4.99563147152651017219e2,
    1.73785401676374683123e5,
    4.84409658339962045305e7,
    1.11855537045356834862e10,
    2.11277520115489217587e12,
    3.10518229857422583814e14,
    3.18121955943204943306e16,
    1.71086294081043136091e18,
])
_PP = np.array([
    7.96936729297347051624e-4,
    8.28352392107440799803e-2,
    1.23953371646414299388e0,
    5.44725003058768775090e0,
    8.74716500199817011941e0,
    5.30324038235394892183e0,
    9.99999999999999997821e-1,
])
_PQ = np.array([
    9.24408810558863637013e-4,
    8.56288474354474431428e-2,
    1.25352743901058953537e0,
    5.47097740330417105182e0,
    8.76190883237069594232e0,
    5.30605288235394617618e0,
    1.00000000000000000218e0,
])
_QP = np.array([
    -1.13663838898469149931e-2,
    -1.28252718670509318512e0,
    -1.95539544257735972385e1,
    -9.32060152123768231369e1,
    -1.77681167980488050595e2,
    -1.47077505154951170175e2,
    -5.14105326766599330220e1,
    -6.05014350600728481186e0,
])
_QQ = np.array([  # leading coefficient 1 implied
    6.43178256118178023184e1,
    8.56430025976980587198e2,
    3.88240183605401609683e3,
    7.24046774195652478189e3,
    5.93072701187316984827e3,
    2.06209331660327847417e3,
    2.42005740240291393179e2,
])
_DR1 = 5.78318596294678452118e0
_DR2 = 3.04712623436620863991e1
_SQ2OPI = 7.9788456080286535587989e-1  # sqrt(2/pi)
_PIO4 = 7.85398163397448309616e-1


def _polevl(x: np.ndarray, coef: np.ndarray) -> np.ndarray:
    ans = np.full_like(x, coef[0])
    for c in coef[1:]:
        ans = ans * x + c
    return ans


def _p1evl(x: np.ndarray, coef: np.ndarray) -> np.ndarray:
    ans = x + coef[0]
    for c in coef[1:]:
        ans = ans * x + c
    return ans


def bessel_j0(x):
    """Zeroth-order Bessel function of the first kind, |error| <= 1e-10 on [0, 50].

    Accepts scalars or arrays; non-finite input raises.
    """
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("bessel_j0 requires finite input")
    scalar = arr.ndim == 0
    ax = np.abs(np.atleast_1d(arr))
    out = np.empty_like(ax)

    small = ax < 1e-5
    mid = (~small) & (ax <= 5.0)
    big = ax > 5.0

    if small.any():
        z = ax[small]
        out[small] = 1.0 - z * z / 4.0
    if mid.any():
        z = ax[mid] ** 2
        p = (z - _DR1) * (z - _DR2)
        out[mid] = p * _polevl(z, _RP) / _p1evl(z, _RQ)
    if big.any():
        xb = ax[big]
        w = 5.0 / xb
        q = 25.0 / (xb * xb)
        p = _polevl(q, _PP) / _polevl(q, _PQ)
        q2 = _polevl(q, _QP) / _p1evl(q, _QQ)
        xn = xb - _PIO4
        out[big] = _SQ2OPI * (p * np.cos(xn) - w * q2 * np.sin(xn)) / np.sqrt(xb)

    return float(out[0]) if scalar else out.reshape(arr.shape)


# ---------------------------------------------------------------------------
# Configuration types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpatialCorrConfig:
    """Exponential antenna correlation, one coefficient per link end."""

    alpha_tx: float = 0.0
    alpha_rx: float = 0.0

    def __post_init__(self):
        for name in ("alpha_tx", "alpha_rx"):
            a = getattr(self, name)
            if not 0.0 <= a < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {a}")


@dataclass(frozen=True)
class DopplerConfig:
    max_doppler_hz: float = 0.0

    def __post_init__(self):
        if self.max_doppler_hz < 0:
            raise ValueError("max_doppler_hz must be nonnegative")


@dataclass(frozen=True)
class PowerDelayProfile:
    """Multipath taps as (delay seconds, linear power) pairs.

    ``normalized()`` rescales tap powers to sum to one so that the derived
    frequency correlation has unit diagonal.
    """

    taps: tuple[tuple[float, float], ...]
    name: str = "custom"

    def __post_init__(self):
        if not self.taps:
            raise ValueError("pdp needs at least one tap")
        delays = [t[0] for t in self.taps]
        if any(d < 0 for d in delays) or any(p < 0 for _, p in self.taps):
            raise ValueError("tap delays and powers must be nonnegative")
        if delays != sorted(delays):
            raise ValueError("tap delays must be nondecreasing")
        if sum(p for _, p in self.taps) <= 0:
            raise ValueError("total tap power must be positive")

    @property
    def delays(self) -> np.ndarray:
        return np.array([t[0] for t in self.taps])

    @property
    def powers(self) -> np.ndarray:
        return np.array([t[1] for t in self.taps])

    @property
    def is_normalized(self) -> bool:
        return abs(float(self.powers.sum()) - 1.0) <= 1e-12

    def normalized(self) -> "PowerDelayProfile":
        total = float(self.powers.sum())
        taps = tuple((d, p / total) for d, p in self.taps)
        return PowerDelayProfile(taps=taps, name=self.name)

    @classmethod
    def from_db(cls, delays_ns, powers_db, name: str = "custom") -> "PowerDelayProfile":
        delays = np.asarray(delays_ns, dtype=float) * 1e-9
        powers = 10.0 ** (np.asarray(powers_db, dtype=float) / 10.0)
        taps = tuple(zip(delays.tolist(), powers.tolist()))
        return cls(taps=taps, name=name).normalized()

    @classmethod
    def from_preset(cls, name: str) -> "PowerDelayProfile":
        presets = load_pdp_presets()
        key = name.lower()
        if key not in presets:
            raise KeyError(f"unknown pdp preset {name!r}; available: {sorted(presets)}")
        return presets[key]


def load_pdp_presets() -> dict[str, PowerDelayProfile]:
    """Parse the tap tables shipped with the package (delays ns, powers dB)."""
    text = resources.files("ce3d.data").joinpath("pdp_presets.cfg").read_text()
    sections = parse_sections(text)
    presets: dict[str, PowerDelayProfile] = {}
    for section, entries in sections.items():
        delays = [float(v) for v in entries["delays_ns"].value.split()]
        powers = [float(v) for v in entries["powers_db"].value.split()]
        if len(delays) != len(powers):
            raise ValueError(f"preset {section}: delay/power count mismatch")
        presets[section] = PowerDelayProfile.from_db(delays, powers, name=section)
    return presets


# ---------------------------------------------------------------------------
# Factor builders
# ---------------------------------------------------------------------------

def spatial_corr(alpha: float, n: int) -> np.ndarray:
    """Exponential correlation matrix with entries alpha**|i-j|."""
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    if n < 1:
        raise ValueError("n must be >= 1")
    idx = np.arange(n)
    return alpha ** np.abs(idx[:, None] - idx[None, :])


def time_corr(doppler: DopplerConfig | float, symbol_times) -> np.ndarray:
    """Jakes time correlation: J0(2 pi f_d |t_i - t_j|)."""
    f_d = doppler.max_doppler_hz if isinstance(doppler, DopplerConfig) else float(doppler)
    if f_d < 0:
        raise ValueError("doppler frequency must be nonnegative")
    t = np.asarray(symbol_times, dtype=float)
    if t.ndim != 1 or (len(t) > 1 and np.any(np.diff(t) <= 0)):
        raise ValueError("symbol_times must be a strictly increasing 1D sequence")
    dt = np.abs(t[:, None] - t[None, :])
    return bessel_j0(2.0 * np.pi * f_d * dt)


def freq_corr(pdp: PowerDelayProfile, subcarrier_spacing_hz: float, n_c: int) -> np.ndarray:
    """Frequency correlation from the power delay profile.

    Entry (i, j) is sum_l p_l * exp(-1j * 2 pi * tau_l * (i - j) * delta_f),
    a Hermitian Toeplitz matrix with unit diagonal for a normalized profile.
    """
    if n_c < 1:
        raise ValueError("n_c must be >= 1")
    if subcarrier_spacing_hz <= 0:
        raise ValueError("subcarrier spacing must be positive")
    if not pdp.is_normalized:
        log.info("pdp %r powers sum to %.6g; normalizing", pdp.name, float(pdp.powers.sum()))
        pdp = pdp.normalized()
    lags = np.arange(n_c)
    phase = np.exp(-2j * np.pi * np.outer(lags, pdp.delays) * subcarrier_spacing_hz)
    col = phase @ pdp.powers  # correlation at lag i - j = lags
    return toeplitz(col, col.conj())


def min_eigenvalue(mat: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(mat).min())


def _psd_guard(mat: np.ndarray, label: str) -> np.ndarray:
    """Return mat, with diagonal jitter only if the PSD check fails."""
    if min_eigenvalue(mat) >= -PSD_EIG_TOL:
        return mat
    log.warning("factor %s failed PSD check; adding %.0e diagonal jitter", label, PSD_JITTER)
    return mat + PSD_JITTER * np.eye(mat.shape[0], dtype=mat.dtype)


def kron_all(*mats: np.ndarray) -> np.ndarray:
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


# ---------------------------------------------------------------------------
# Assembled correlation set
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CorrelationSet:
    """The four correlation factors plus lazy Kronecker assemblies.

    Grid indices decompose as pair p = m * n_tx + n (transmit fastest),
    RE g = symbol * n_subcarriers + subcarrier, global = p * n_res + g;
    the assembled covariance entry is the product of factor entries.
    """

    r_s_rx: np.ndarray
    r_s_tx: np.ndarray
    r_t: np.ndarray
    r_f: np.ndarray

    def __post_init__(self):
        for name in ("r_s_rx", "r_s_tx", "r_t", "r_f"):
            mat = np.asarray(getattr(self, name))
            if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
                raise ValueError(f"{name} must be square")
            if np.linalg.norm(mat - mat.conj().T) != 0.0:
                raise ValueError(f"{name} must be exactly Hermitian")
            object.__setattr__(self, name, _psd_guard(mat, name))

    @property
    def n_rx(self) -> int:
        return self.r_s_rx.shape[0]

    @property
    def n_tx(self) -> int:
        return self.r_s_tx.shape[0]

    @property
    def n_symbols(self) -> int:
        return self.r_t.shape[0]

    @property
    def n_subcarriers(self) -> int:
        return self.r_f.shape[0]

    @property
    def dim(self) -> int:
        return self.n_rx * self.n_tx * self.n_symbols * self.n_subcarriers

    @cached_property
    def r_s(self) -> np.ndarray:
        return np.kron(self.r_s_rx, self.r_s_tx)

    @cached_property
    def r_tf(self) -> np.ndarray:
        return np.kron(self.r_t, self.r_f)

    @cached_property
    def r_3d(self) -> np.ndarray:
        return np.kron(self.r_s, self.r_tf)

    @cached_property
    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for mat in (self.r_s_rx, self.r_s_tx, self.r_t, self.r_f):
            h.update(np.ascontiguousarray(mat).tobytes())
            h.update(str(mat.shape).encode())
        return h.hexdigest()[:16]

    def split_global(self, indices: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Decompose global channel indices into (pair, symbol, subcarrier)."""
        n_res = self.n_symbols * self.n_subcarriers
        pair, g = np.divmod(np.asarray(indices, dtype=np.int64), n_res)
        sym, sc = np.divmod(g, self.n_subcarriers)
        return pair, sym, sc

    def cov_block(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """Covariance sub-block for arbitrary global index sets.

        Uses the factored entry product; never materializes the full matrix.
        """
        pr, sr, cr = self.split_global(rows)
        pc, sc_, cc = self.split_global(cols)
        return (
            self.r_s[np.ix_(pr, pc)]
            * self.r_t[np.ix_(sr, sc_)].astype(complex)
            * self.r_f[np.ix_(cr, cc)]
        )

    def cov_cols(self, cols: np.ndarray) -> np.ndarray:
        """All rows of the assembled covariance at the given columns."""
        pc, sc_, cc = self.split_global(cols)
        block = np.einsum(
            "pj,sj,cj->pscj",
            self.r_s[:, pc].astype(complex),
            self.r_t[:, sc_].astype(complex),
            self.r_f[:, cc],
        )
        return block.reshape(self.dim, len(cols))

    @cached_property
    def factor_sqrts(self) -> tuple[np.ndarray, ...]:
        """Eigen square roots of the factors, for Kronecker-structured sampling."""
        roots = []
        for name in ("r_s_rx", "r_s_tx", "r_t", "r_f"):
            mat = getattr(self, name)
            vals, vecs = np.linalg.eigh(mat)
            if vals.min() < -PSD_EIG_TOL:
                raise DecompositionError(
                    f"factor {name} has eigenvalue {vals.min():.3e} below tolerance"
                )
            roots.append(vecs * np.sqrt(np.clip(vals, 0.0, None)))
        return tuple(roots)


def assemble(
    grid,
    spatial: SpatialCorrConfig,
    pdp: PowerDelayProfile,
    doppler: DopplerConfig,
) -> CorrelationSet:
    """Build all four factors for a grid and channel configuration.

    The time factor covers all grid symbols; restriction to DMRS symbols
    happens downstream through pilot selection indices.
    """
    return CorrelationSet(
        r_s_rx=spatial_corr(spatial.alpha_rx, grid.n_rx),
        r_s_tx=spatial_corr(spatial.alpha_tx, grid.n_tx),
        r_t=time_corr(doppler, grid.symbol_times()),
        r_f=freq_corr(pdp if pdp.is_normalized else pdp.normalized(),
                      grid.subcarrier_spacing_hz, grid.n_subcarriers),
    )
