"""LMMSE channel estimation filters and their Kronecker decompositions.

Four filter families are built here:

* ``OPT3D``: the jointly optimal filter over space, time, and frequency,
  solving one Hermitian system in the stacked pilot domain.
* ``TWO_PLUS_ONE_D``: a per-pair time-frequency Wiener interpolator
  followed by spatial mixing, with the observation noise power split
  between the two stages.
* ``THREE_X_ONE_D``: the time-frequency stage further factored into
  separate time and frequency interpolators (separable patterns only).
* ``GENIE2D``: the per-pair time-frequency filter with the full noise
  power and no spatial processing, used as the baseline.

The noise split obeys  sigma_w^2 = sigma_s^2 + sigma_tf^2
+ sigma_s^2 * sigma_tf^2,  which matches the traces of the exact and the
factored pilot-domain Gram matrices when all correlation factors have unit
diagonal. The equal-split solution is  sigma^2 = sqrt(sigma_w^2 + 1) - 1.

All inversions are Hermitian positive-definite solves; if a Gram matrix is
numerically singular (for example at zero noise on a rank-deficient
correlation), a diagonal jitter of 1e-10 is added and the filter is flagged.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .corrmodel import CorrelationSet
from .gridmodel import (
    DmrsPattern,
    GridConfig,
    SelectionMatrix,
    selection_matrices_1d,
    selection_matrix_full,
    selection_matrix_port,
)

SOLVE_JITTER = 1e-10


class FilterKind(enum.Enum):
    OPT3D = "opt3d"
    TWO_PLUS_ONE_D = "2d1d"
    THREE_X_ONE_D = "3x1d"
    GENIE2D = "genie2d"


@dataclass(frozen=True)
class NoiseSplit:
    """Allocation of the observation noise power across filter stages."""

    sigma_w2: float
    sigma_s2: float
    sigma_tf2: float
    sigma_t2: float | None = None
    sigma_f2: float | None = None

    def __post_init__(self):
        for name in ("sigma_w2", "sigma_s2", "sigma_tf2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


def split_noise_equal(noise_power: float) -> float:
    """Equal two-way split that matches the pilot-domain Gram traces."""
    if noise_power < 0:
        raise ValueError("noise_power must be nonnegative")
    return float(np.sqrt(noise_power + 1.0) - 1.0)


def split_residual(split: NoiseSplit) -> float:
    """Budget violation: sigma_s^2 + sigma_tf^2 + sigma_s^2 sigma_tf^2 - sigma_w^2."""
    return split.sigma_s2 + split.sigma_tf2 + split.sigma_s2 * split.sigma_tf2 - split.sigma_w2


def solve_tf_budget(sigma_w2: float, sigma_s2: float) -> float:
    """The time-frequency share that balances the budget for a given spatial share."""
    if sigma_s2 < 0 or sigma_s2 > sigma_w2:
        raise ValueError("sigma_s2 must lie in [0, sigma_w2]")
    return (sigma_w2 - sigma_s2) / (1.0 + sigma_s2)


def make_split(policy: str, sigma_w2: float) -> NoiseSplit:
    """Named split policies used by the sweep harness.

    ``equal``   both stages get sqrt(sigma_w^2 + 1) - 1 (budget-exact);
    ``naive``   both stages get the full sigma_w^2;
    ``small-s`` full sigma_w^2 in time-frequency, a tenth in space;
    ``family:T``  spatial share T * sigma_w^2, time-frequency share from
    the budget. The time/frequency sub-split reuses the same relation on
    sigma_tf^2 (equal for every policy except ``naive``).
    """
    if policy == "equal":
        s = split_noise_equal(sigma_w2)
        sub = split_noise_equal(s)
        return NoiseSplit(sigma_w2, s, s, sub, sub)
    if policy == "naive":
        return NoiseSplit(sigma_w2, sigma_w2, sigma_w2, sigma_w2, sigma_w2)
    if policy == "small-s":
        sub = split_noise_equal(sigma_w2)
        return NoiseSplit(sigma_w2, 0.1 * sigma_w2, sigma_w2, sub, sub)
    if policy.startswith("family:"):
        frac = float(policy.split(":", 1)[1])
        if not 0.0 <= frac <= 1.0:
            raise ValueError("family fraction must lie in [0, 1]")
        s = frac * sigma_w2
        tf = solve_tf_budget(sigma_w2, s)
        sub = split_noise_equal(tf)
        return NoiseSplit(sigma_w2, s, tf, sub, sub)
    raise ValueError(f"unknown split policy {policy!r}")


# ---------------------------------------------------------------------------
# Hermitian solves
# ---------------------------------------------------------------------------

def _solve_gram(gram: np.ndarray, rhs_cols: np.ndarray) -> tuple[np.ndarray, bool]:
    """Compute rhs_cols @ gram^-1 via Cholesky; jitter fallback on failure.

    Returns the filter block and whether jitter regularization was needed.
    """
    gram = np.asarray(gram, dtype=complex)
    try:
        factor = cho_factor(gram, lower=True)
        jittered = False
    except LinAlgError:
        bumped = gram + SOLVE_JITTER * np.eye(gram.shape[0])
        factor = cho_factor(bumped, lower=True)
        jittered = True
    x = cho_solve(factor, rhs_cols.conj().T)
    return x.conj().T, jittered


def wiener_interp_filter(
    r: np.ndarray, sel: SelectionMatrix, sigma2: float
) -> tuple[np.ndarray, bool]:
    """Wiener interpolator from observed entries to the full index set.

    Filter = R[:, obs] (R[obs, obs] + sigma2 I)^-1 for the observation
    index set of the selection matrix.
    """
    if sigma2 < 0:
        raise ValueError("noise share must be nonnegative")
    idx = sel.row_to_col
    rhs = np.asarray(r, dtype=complex)[:, idx]
    gram = np.asarray(r, dtype=complex)[np.ix_(idx, idx)] + sigma2 * np.eye(len(idx))
    return _solve_gram(gram, rhs)


def build_w_s(r_s: np.ndarray, sigma_s2: float) -> np.ndarray:
    """Spatial stage: R_s (R_s + sigma_s^2 I)^-1."""
    if sigma_s2 < 0:
        raise ValueError("sigma_s2 must be nonnegative")
    gram = np.asarray(r_s, dtype=complex) + sigma_s2 * np.eye(r_s.shape[0])
    w, _ = _solve_gram(gram, np.asarray(r_s, dtype=complex))
    return w


def build_w_tf(r_tf: np.ndarray, sel_port: SelectionMatrix, sigma_tf2: float) -> np.ndarray:
    """Time-frequency stage: full-grid interpolator from one port's pilots."""
    w, _ = wiener_interp_filter(r_tf, sel_port, sigma_tf2)
    return w


def build_w_1d(r_1d: np.ndarray, sel_1d: SelectionMatrix, sigma2: float) -> np.ndarray:
    """One-dimensional stage (time or frequency) of the fully separated filter."""
    w, _ = wiener_interp_filter(r_1d, sel_1d, sigma2)
    return w


def apply_2d1d(ls: np.ndarray, w_s: np.ndarray, w_tf: np.ndarray) -> np.ndarray:
    """Factored filter application, identical to kron(w_s, w_tf) @ ls.

    ls is column-unstacked to (pilot index, pair index), filtered on both
    sides, and column-stacked back.
    """
    n_pairs = w_s.shape[1]
    n_obs = w_tf.shape[1]
    if len(ls) != n_pairs * n_obs:
        raise ValueError(
            f"ls length {len(ls)} incompatible with {n_pairs} pairs x {n_obs} pilots"
        )
    x = ls.reshape(n_pairs, n_obs).T
    out = w_tf @ x @ w_s.T
    return out.T.reshape(-1)


# ---------------------------------------------------------------------------
# Filter objects
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EstimatorFilter:
    """A built linear estimator, factored or dense, with its noise split."""

    kind: FilterKind
    grid: GridConfig
    pattern: DmrsPattern
    split: NoiseSplit
    w_dense: np.ndarray | None = None
    w_s: np.ndarray | None = None
    w_tf_ports: tuple[np.ndarray, ...] | None = None
    jittered: bool = False

    @property
    def n_obs_per_pair(self) -> int:
        return self.pattern.pilot_count

    def as_dense(self) -> np.ndarray:
        """Expand to the full map from stacked LS estimates to the full grid."""
        if self.w_dense is not None:
            return self.w_dense
        grid = self.grid
        n = grid.n_res
        k = self.n_obs_per_pair
        p_cnt = grid.n_pairs
        w = np.zeros((grid.dim, k * p_cnt), dtype=complex)
        for p in range(p_cnt):
            for q in range(p_cnt):
                coeff = self.w_s[p, q]
                if coeff == 0:
                    continue
                block = self.w_tf_ports[q % grid.n_tx]
                w[p * n : (p + 1) * n, q * k : (q + 1) * k] = coeff * block
        return w

    def apply(self, ls: np.ndarray) -> np.ndarray:
        """Estimate the full stacked channel vector from stacked LS pilots."""
        if self.w_dense is not None:
            return self.w_dense @ ls
        grid = self.grid
        k = self.n_obs_per_pair
        x = ls.reshape(grid.n_pairs, k)
        cols = np.empty((grid.n_res, grid.n_pairs), dtype=complex)
        for p in range(grid.n_pairs):
            cols[:, p] = self.w_tf_ports[p % grid.n_tx] @ x[p]
        out = cols @ self.w_s.T
        return out.T.reshape(-1)


def build_w3d(
    corr: CorrelationSet,
    sel: SelectionMatrix,
    noise_power: float,
    grid: GridConfig,
    pattern: DmrsPattern,
) -> EstimatorFilter:
    """Jointly optimal filter: R A^T (A R A^T + sigma_w^2 I)^-1, dense."""
    if noise_power < 0:
        raise ValueError("noise_power must be nonnegative")
    idx = sel.row_to_col
    rhs = corr.cov_cols(idx)
    gram = corr.cov_block(idx, idx) + noise_power * np.eye(len(idx))
    w, jittered = _solve_gram(gram, rhs)
    return EstimatorFilter(
        kind=FilterKind.OPT3D,
        grid=grid,
        pattern=pattern,
        split=NoiseSplit(noise_power, 0.0, 0.0),
        w_dense=w,
        jittered=jittered,
    )


def build_two_plus_one_d(
    corr: CorrelationSet,
    pattern: DmrsPattern,
    grid: GridConfig,
    split: NoiseSplit,
) -> EstimatorFilter:
    """Per-port time-frequency interpolation followed by spatial mixing.

    With a shared pattern all ports reuse one interpolator and the dense
    expansion equals kron(w_s, w_tf).
    """
    w_s = build_w_s(corr.r_s, split.sigma_s2)
    ports = []
    jittered = False
    for n in range(grid.n_tx):
        sel_n = selection_matrix_port(pattern, n, grid)
        w_tf, j = wiener_interp_filter(corr.r_tf, sel_n, split.sigma_tf2)
        ports.append(w_tf)
        jittered |= j
    return EstimatorFilter(
        kind=FilterKind.TWO_PLUS_ONE_D,
        grid=grid,
        pattern=pattern,
        split=split,
        w_s=w_s,
        w_tf_ports=tuple(ports),
        jittered=jittered,
    )


def build_three_x_one_d(
    corr: CorrelationSet,
    pattern: DmrsPattern,
    grid: GridConfig,
    split: NoiseSplit,
) -> EstimatorFilter:
    """Fully separated filter: per-port time and frequency interpolators.

    The per-port time-frequency stage is the Kronecker product of the two
    1D stages; requires a separable pattern.
    """
    if split.sigma_t2 is None or split.sigma_f2 is None:
        raise ValueError("three-way split needs sigma_t2 and sigma_f2")
    w_s = build_w_s(corr.r_s, split.sigma_s2)
    ports = []
    jittered = False
    for n in range(grid.n_tx):
        sel_t, sel_f = selection_matrices_1d(pattern, n, grid)
        w_t, jt = wiener_interp_filter(corr.r_t, sel_t, split.sigma_t2)
        w_f, jf = wiener_interp_filter(corr.r_f, sel_f, split.sigma_f2)
        ports.append(np.kron(w_t, w_f))
        jittered |= jt or jf
    return EstimatorFilter(
        kind=FilterKind.THREE_X_ONE_D,
        grid=grid,
        pattern=pattern,
        split=split,
        w_s=w_s,
        w_tf_ports=tuple(ports),
        jittered=jittered,
    )


def build_genie_2d(
    corr: CorrelationSet,
    pattern: DmrsPattern,
    grid: GridConfig,
    noise_power: float,
) -> EstimatorFilter:
    """Per-pair time-frequency filter with full noise power, no spatial stage."""
    ports = []
    jittered = False
    for n in range(grid.n_tx):
        sel_n = selection_matrix_port(pattern, n, grid)
        w_tf, j = wiener_interp_filter(corr.r_tf, sel_n, noise_power)
        ports.append(w_tf)
        jittered |= j
    return EstimatorFilter(
        kind=FilterKind.GENIE2D,
        grid=grid,
        pattern=pattern,
        split=NoiseSplit(noise_power, 0.0, noise_power),
        w_s=np.eye(grid.n_pairs, dtype=complex),
        w_tf_ports=tuple(ports),
        jittered=jittered,
    )


def build_estimator(
    kind: FilterKind,
    policy: str,
    corr: CorrelationSet,
    pattern: DmrsPattern,
    grid: GridConfig,
    noise_power: float,
) -> EstimatorFilter:
    """Construct any filter kind from a split policy name."""
    if kind is FilterKind.OPT3D:
        sel = selection_matrix_full(pattern, grid)
        return build_w3d(corr, sel, noise_power, grid, pattern)
    if kind is FilterKind.GENIE2D:
        return build_genie_2d(corr, pattern, grid, noise_power)
    split = make_split(policy, noise_power)
    if kind is FilterKind.TWO_PLUS_ONE_D:
        return build_two_plus_one_d(corr, pattern, grid, split)
    if kind is FilterKind.THREE_X_ONE_D:
        return build_three_x_one_d(corr, pattern, grid, split)
    raise ValueError(f"unhandled filter kind {kind}")


def analytic_mse(
    flt: EstimatorFilter | np.ndarray,
    corr: CorrelationSet,
    sel: SelectionMatrix,
    noise_power: float,
) -> float:
    """Exact per-RE mean squared error of a linear filter.

    trace(R - W A R - R A^T W^H + W (A R A^T + sigma_w^2 I) W^H) / dim,
    evaluated from the factored covariance without forming the full R.
    """
    w = flt.as_dense() if isinstance(flt, EstimatorFilter) else np.asarray(flt)
    idx = sel.row_to_col
    if w.shape != (corr.dim, len(idx)):
        raise ValueError(f"filter shape {w.shape} does not match ({corr.dim}, {len(idx)})")
    rhs = corr.cov_cols(idx)  # R A^T
    gram = corr.cov_block(idx, idx) + noise_power * np.eye(len(idx))
    cross = np.sum(w * rhs.conj()).real  # trace(W A R), real part
    quad = np.sum((w @ gram) * w.conj()).real  # trace(W G W^H)
    return float((corr.dim - 2.0 * cross + quad) / corr.dim)
