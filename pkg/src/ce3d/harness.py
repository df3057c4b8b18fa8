"""SNR sweeps: analytic and Monte Carlo MSE per estimator, CSV reports.

A sweep row is produced per (SNR point, estimator spec). Monte Carlo trials
draw a fresh channel, pilot set, and noise realization per trial from
order-independent substreams, so results are reproducible and identical
whether trials run serially or across threads. Trial channels are shared
by all estimators at one SNR point, which both saves work and pairs the
comparison.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import chansim, estimators
from .corrmodel import CorrelationSet, DopplerConfig, PowerDelayProfile, SpatialCorrConfig, assemble
from .estimators import EstimatorFilter, FilterKind
from .gridmodel import DmrsPattern, GridConfig, selection_matrix_full

CSV_HEADER = (
    "snr_db,estimator,split_policy,analytic_mse,analytic_mse_db,"
    "mc_mse,mc_stderr,trials,wall_time_s"
)

DEFAULT_ESTIMATORS = (
    "opt3d",
    "2d1d:equal",
    "2d1d:naive",
    "2d1d:small-s",
    "3x1d:equal",
    "genie2d",
)


def snr_db_to_noise_power(snr_db: float) -> float:
    """Unit channel and pilot power, so noise power is 10^(-SNR/10)."""
    return 10.0 ** (-snr_db / 10.0)


def mse_to_db(mse: float) -> float:
    return 10.0 * np.log10(mse) if mse > 0 else float("-inf")


@dataclass(frozen=True)
class EstimatorSpec:
    """Estimator kind plus split policy, parsed from 'kind[:policy]'."""

    kind: FilterKind
    policy: str

    @property
    def label(self) -> str:
        return self.kind.value

    @classmethod
    def parse(cls, text: str) -> "EstimatorSpec":
        name, _, policy = text.strip().partition(":")
        try:
            kind = FilterKind(name)
        except ValueError:
            raise ValueError(
                f"unknown estimator {name!r}; expected one of "
                f"{[k.value for k in FilterKind]}"
            ) from None
        if kind in (FilterKind.OPT3D, FilterKind.GENIE2D):
            if policy:
                raise ValueError(f"{name} takes no split policy, got {policy!r}")
            policy = "none"
        elif not policy:
            policy = "equal"
        return cls(kind=kind, policy=policy)


@dataclass(frozen=True)
class SweepConfig:
    grid: GridConfig
    pattern: DmrsPattern
    spatial: SpatialCorrConfig
    pdp: PowerDelayProfile
    doppler: DopplerConfig
    snr_db_points: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0)
    estimators: tuple[str, ...] = DEFAULT_ESTIMATORS
    n_trials: int = 1000
    seed: int = 1

    def __post_init__(self):
        if not self.snr_db_points:
            raise ValueError("snr_db_points must be nonempty")
        if self.n_trials < 0:
            raise ValueError("n_trials must be nonnegative")

    def specs(self) -> list[EstimatorSpec]:
        return [EstimatorSpec.parse(s) for s in self.estimators]


@dataclass(frozen=True)
class SweepRow:
    snr_db: float
    estimator: str
    split_policy: str
    analytic_mse: float
    mc_mse: float
    mc_stderr: float
    trials: int
    wall_time_s: float
    error: str | None = None

    @property
    def analytic_mse_db(self) -> float:
        return mse_to_db(self.analytic_mse)

    @property
    def mc_consistent(self) -> bool:
        """Monte Carlo mean within four standard errors of the analytic value."""
        if self.error is not None or not self.trials or self.mc_stderr == 0.0:
            return True
        return abs(self.mc_mse - self.analytic_mse) <= 4.0 * self.mc_stderr

    def to_csv(self) -> str:
        if self.error is not None:
            return (
                f"{self.snr_db:.6g},{self.estimator},{self.split_policy},"
                f"error,error,error,error,0,{self.wall_time_s:.3f}"
            )
        mc = f"{self.mc_mse:.12e}" if self.trials else ""
        se = f"{self.mc_stderr:.12e}" if self.trials else ""
        return (
            f"{self.snr_db:.6g},{self.estimator},{self.split_policy},"
            f"{self.analytic_mse:.12e},{self.analytic_mse_db:.6f},"
            f"{mc},{se},{self.trials},{self.wall_time_s:.3f}"
        )


@dataclass
class SweepReport:
    rows: list[SweepRow] = field(default_factory=list)

    @property
    def has_errors(self) -> bool:
        return any(r.error is not None for r in self.rows)

    def to_csv(self) -> str:
        return "\n".join([CSV_HEADER] + [r.to_csv() for r in self.rows]) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_csv())

    def find(self, snr_db: float, estimator: str, policy: str | None = None) -> SweepRow:
        for r in self.rows:
            if r.snr_db == snr_db and r.estimator == estimator:
                if policy is None or r.split_policy == policy:
                    return r
        raise KeyError(f"no row for snr={snr_db} estimator={estimator} policy={policy}")


def worker_count() -> int:
    """Thread cap from CE3D_THREADS; defaults to serial execution."""
    raw = os.environ.get("CE3D_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _mc_errors(
    filters: dict[str, EstimatorFilter],
    corr: CorrelationSet,
    cfg: SweepConfig,
    noise_power: float,
) -> dict[str, np.ndarray]:
    """Per-trial squared error per estimator; trial t uses substream (seed, t)."""
    grid, pattern = cfg.grid, cfg.pattern
    out = {label: np.empty(cfg.n_trials) for label in filters}
    denom = grid.dim

    def run_trial(t: int) -> None:
        ts = chansim.derive_trial_seed(cfg.seed, t)
        chan = chansim.draw_channel(corr, grid, ts)
        pilots = chansim.generate_pilots(pattern, ts)
        obs = chansim.observe(chan, pilots, pattern, noise_power, ts)
        ls = chansim.ls_estimate(obs)
        for label, flt in filters.items():
            err = flt.apply(ls) - chan.h
            out[label][t] = np.vdot(err, err).real / denom

    n_workers = worker_count()
    if n_workers == 1 or cfg.n_trials < 2 * n_workers:
        for t in range(cfg.n_trials):
            run_trial(t)
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            list(pool.map(run_trial, range(cfg.n_trials)))
    return out


def _build_filter(
    spec: EstimatorSpec,
    corr: CorrelationSet,
    cfg: SweepConfig,
    noise_power: float,
    cache: dict,
) -> EstimatorFilter:
    key = (corr.fingerprint, cfg.pattern, spec.kind, spec.policy, noise_power)
    if key not in cache:
        cache[key] = estimators.build_estimator(
            spec.kind, spec.policy, corr, cfg.pattern, cfg.grid, noise_power
        )
    return cache[key]


def run_sweep(cfg: SweepConfig, corr: CorrelationSet | None = None) -> SweepReport:
    """Analytic plus Monte Carlo MSE for every (SNR, estimator) pair.

    A failed estimator yields an error-marked row instead of aborting the
    sweep.
    """
    if corr is None:
        corr = assemble(cfg.grid, cfg.spatial, cfg.pdp, cfg.doppler)
    sel = selection_matrix_full(cfg.pattern, cfg.grid)
    report = SweepReport()
    cache: dict = {}
    for snr_db in cfg.snr_db_points:
        noise_power = snr_db_to_noise_power(snr_db)
        filters: dict[str, tuple[EstimatorSpec, EstimatorFilter]] = {}
        build_time: dict[str, float] = {}
        for spec in cfg.specs():
            t0 = time.perf_counter()
            try:
                flt = _build_filter(spec, corr, cfg, noise_power, cache)
            except Exception as exc:  # noqa: BLE001 - error rows, not aborts
                report.rows.append(
                    SweepRow(
                        snr_db=snr_db,
                        estimator=spec.label,
                        split_policy=spec.policy,
                        analytic_mse=float("nan"),
                        mc_mse=float("nan"),
                        mc_stderr=float("nan"),
                        trials=0,
                        wall_time_s=time.perf_counter() - t0,
                        error=f"{type(exc).__name__}: {exc}",
                    )
                )
                continue
            key = f"{spec.label}:{spec.policy}"
            filters[key] = (spec, flt)
            build_time[key] = time.perf_counter() - t0

        t_mc = time.perf_counter()
        mc = (
            _mc_errors({k: f for k, (_, f) in filters.items()}, corr, cfg, noise_power)
            if cfg.n_trials and filters
            else {}
        )
        mc_share = (time.perf_counter() - t_mc) / len(filters) if filters else 0.0
        for key, (spec, flt) in filters.items():
            t0 = time.perf_counter()
            analytic = estimators.analytic_mse(flt, corr, sel, noise_power)
            if cfg.n_trials:
                errs = mc[key]
                mc_mse = float(np.sum(errs) / cfg.n_trials)
                mc_stderr = float(errs.std(ddof=1) / np.sqrt(cfg.n_trials)) if cfg.n_trials > 1 else 0.0
            else:
                mc_mse = float("nan")
                mc_stderr = float("nan")
            report.rows.append(
                SweepRow(
                    snr_db=snr_db,
                    estimator=spec.label,
                    split_policy=spec.policy,
                    analytic_mse=analytic,
                    mc_mse=mc_mse,
                    mc_stderr=mc_stderr,
                    trials=cfg.n_trials,
                    wall_time_s=build_time[key] + mc_share + (time.perf_counter() - t0),
                )
            )
    return report


def noise_split_study(
    cfg: SweepConfig,
    family_points: int = 21,
    corr: CorrelationSet | None = None,
) -> SweepReport:
    """Analytic MSE of the (2D+1D) filter across noise split policies.

    Covers the named policies plus the one-parameter budget-consistent
    family (spatial share from 0 to the full noise power).
    """
    if corr is None:
        corr = assemble(cfg.grid, cfg.spatial, cfg.pdp, cfg.doppler)
    sel = selection_matrix_full(cfg.pattern, cfg.grid)
    policies = ["naive", "equal", "small-s"] + [
        f"family:{t:.3f}" for t in np.linspace(0.0, 1.0, family_points)
    ]
    report = SweepReport()
    for snr_db in cfg.snr_db_points:
        noise_power = snr_db_to_noise_power(snr_db)
        for policy in policies:
            t0 = time.perf_counter()
            try:
                split = estimators.make_split(policy, noise_power)
                flt = estimators.build_two_plus_one_d(corr, cfg.pattern, cfg.grid, split)
                analytic = estimators.analytic_mse(flt, corr, sel, noise_power)
            except Exception as exc:  # noqa: BLE001
                report.rows.append(
                    SweepRow(
                        snr_db=snr_db,
                        estimator="2d1d",
                        split_policy=policy,
                        analytic_mse=float("nan"),
                        mc_mse=float("nan"),
                        mc_stderr=float("nan"),
                        trials=0,
                        wall_time_s=time.perf_counter() - t0,
                        error=f"{type(exc).__name__}: {exc}",
                    )
                )
                continue
            report.rows.append(
                SweepRow(
                    snr_db=snr_db,
                    estimator="2d1d",
                    split_policy=policy,
                    analytic_mse=analytic,
                    mc_mse=float("nan"),
                    mc_stderr=float("nan"),
                    trials=0,
                    wall_time_s=time.perf_counter() - t0,
                )
            )
    return report


def best_split_rows(report: SweepReport) -> dict[float, SweepRow]:
    """Lowest-MSE row per SNR point (split study post-processing)."""
    best: dict[float, SweepRow] = {}
    for row in report.rows:
        if row.error is not None:
            continue
        cur = best.get(row.snr_db)
        if cur is None or row.analytic_mse < cur.analytic_mse:
            best[row.snr_db] = row
    return best


def export_dataset(
    cfg: SweepConfig,
    path,
    n_samples: int,
    snr_db_range: tuple[float, float] = (0.0, 20.0),
    corr: CorrelationSet | None = None,
) -> chansim.DatasetHeader:
    """Write training samples in the binary dataset format.

    Each sample draws a uniform random SNR from the range and records the
    resulting noise power; the per-sample seed makes samples reproducible.
    """
    if corr is None:
        corr = assemble(cfg.grid, cfg.spatial, cfg.pdp, cfg.doppler)
    grid, pattern = cfg.grid, cfg.pattern
    header = chansim.DatasetHeader(
        n_samples=n_samples,
        n_rx=grid.n_rx,
        n_tx=grid.n_tx,
        n_symbols=grid.n_symbols,
        n_subcarriers=grid.n_subcarriers,
        k_dmrs=pattern.k_symbols,
        n_p_per_symbol=pattern.pilots_per_symbol,
    )
    lo, hi = snr_db_range
    snr_rng = chansim.make_stream(cfg.seed, chansim.STREAM_SNR)

    def samples():
        for i in range(n_samples):
            seed = chansim.derive_trial_seed(cfg.seed, i)
            snr_db = float(snr_rng.uniform(lo, hi))
            noise_power = snr_db_to_noise_power(snr_db)
            chan = chansim.draw_channel(corr, grid, seed)
            pilots = chansim.generate_pilots(pattern, seed)
            obs = chansim.observe(chan, pilots, pattern, noise_power, seed)
            ls = chansim.ls_estimate(obs)
            yield chan.h, ls, noise_power, seed

    chansim.write_dataset(path, header, samples())
    return header
