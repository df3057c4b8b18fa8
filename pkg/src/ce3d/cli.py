"""Command-line interface: sweep, noise-split, export, and validate.

Configuration is a plain-text file with ``[section]`` headers and
``key = value`` lines; unknown sections or keys are rejected with their
line number. Flags override config values. Exit codes: 0 success,
1 configuration or usage error, 2 estimator failure during a sweep.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass

from . import harness
from .corrmodel import DopplerConfig, PowerDelayProfile, SpatialCorrConfig
from .estimators import make_split
from .gridmodel import (
    ConfigurationError,
    DmrsPattern,
    GridConfig,
    build_default_pattern,
    render_pattern,
)
from .harness import SweepConfig
from .textconfig import ConfigParseError, parse_sections

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_ESTIMATOR = 2

DESK_PAIR_LIMIT = 4  # antenna pairs beyond this need --large

_SCHEMA: dict[str, dict[str, str]] = {
    "grid": {
        "n_subcarriers": "int",
        "n_symbols": "int",
        "n_rx": "int",
        "n_tx": "int",
        "subcarrier_spacing_hz": "float",
        "symbol_duration_s": "float",
    },
    "pattern": {
        "dmrs_symbols": "int_list",
        "pilots_per_symbol": "int",
        "shared": "bool",
    },
    "channel": {
        "profile": "str",
        "doppler_hz": "float",
        "alpha_tx": "float",
        "alpha_rx": "float",
        "delays_ns": "float_list",
        "powers_db": "float_list",
    },
    "sweep": {
        "snr_db_points": "float_list",
        "estimators": "str_list",
        "n_trials": "int",
        "seed": "int",
    },
    "export": {
        "samples": "int",
        "snr_min_db": "float",
        "snr_max_db": "float",
    },
}

_CASTS = {
    "int": int,
    "float": float,
    "str": str,
    "bool": lambda v: {"true": True, "false": False, "1": True, "0": False}[v.lower()],
    "int_list": lambda v: tuple(int(x) for x in v.replace(",", " ").split()),
    "float_list": lambda v: tuple(float(x) for x in v.replace(",", " ").split()),
    "str_list": lambda v: tuple(x for x in v.replace(",", " ").split()),
}


class CliError(Exception):
    def __init__(self, message: str, exit_code: int = EXIT_CONFIG):
        super().__init__(message)
        self.exit_code = exit_code


@dataclass
class CliConfig:
    """Validated, typed view of the config file plus flag overrides."""

    values: dict[tuple[str, str], object]

    def get(self, section: str, key: str, default=None):
        return self.values.get((section, key), default)


def load_config(path) -> CliConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        sections = parse_sections(text)
    except ConfigParseError as exc:
        raise CliError(f"{path}: {exc}") from exc
    values: dict[tuple[str, str], object] = {}
    for section, entries in sections.items():
        if section not in _SCHEMA:
            first = min(v.line_no for v in entries.values()) if entries else 0
            raise CliError(f"{path}: line {first}: unknown section [{section}]")
        for key, cv in entries.items():
            if key not in _SCHEMA[section]:
                raise CliError(f"{path}: line {cv.line_no}: unknown key {key!r} in [{section}]")
            cast = _CASTS[_SCHEMA[section][key]]
            try:
                values[(section, key)] = cast(cv.value)
            except (ValueError, KeyError) as exc:
                raise CliError(
                    f"{path}: line {cv.line_no}: bad value {cv.value!r} for {key}: {exc}"
                ) from exc
    return CliConfig(values=values)


def build_grid(cfg: CliConfig) -> GridConfig:
    kwargs = dict(
        n_subcarriers=cfg.get("grid", "n_subcarriers", 12),
        n_symbols=cfg.get("grid", "n_symbols", 14),
        n_rx=cfg.get("grid", "n_rx", 2),
        n_tx=cfg.get("grid", "n_tx", 2),
    )
    for opt in ("subcarrier_spacing_hz", "symbol_duration_s"):
        val = cfg.get("grid", opt)
        if val is not None:
            kwargs[opt] = val
    try:
        return GridConfig(**kwargs)
    except ConfigurationError as exc:
        raise CliError(f"bad grid configuration: {exc}") from exc


def build_pattern(cfg: CliConfig, grid: GridConfig) -> DmrsPattern:
    symbols = cfg.get("pattern", "dmrs_symbols", (3, 10) if grid.n_symbols == 14 else None)
    n_p = cfg.get("pattern", "pilots_per_symbol", 3)
    shared = cfg.get("pattern", "shared", False)
    try:
        return build_default_pattern(
            grid,
            k_dmrs_symbols=len(symbols) if symbols else 2,
            n_p_per_symbol=n_p,
            dmrs_symbols=symbols,
            shared=shared,
        )
    except ConfigurationError as exc:
        raise CliError(f"bad pattern configuration: {exc}") from exc


def build_channel(cfg: CliConfig) -> tuple[SpatialCorrConfig, PowerDelayProfile, DopplerConfig]:
    profile = str(cfg.get("channel", "profile", "etu")).lower()
    if profile == "custom":
        delays = cfg.get("channel", "delays_ns")
        powers = cfg.get("channel", "powers_db")
        if delays is None or powers is None:
            raise CliError("custom profile needs channel.delays_ns and channel.powers_db")
        try:
            pdp = PowerDelayProfile.from_db(delays, powers, name="custom")
        except ValueError as exc:
            raise CliError(f"bad custom pdp: {exc}") from exc
    else:
        try:
            pdp = PowerDelayProfile.from_preset(profile)
        except KeyError as exc:
            raise CliError(str(exc.args[0])) from exc
    try:
        spatial = SpatialCorrConfig(
            alpha_tx=cfg.get("channel", "alpha_tx", 0.3),
            alpha_rx=cfg.get("channel", "alpha_rx", 0.3),
        )
        doppler = DopplerConfig(cfg.get("channel", "doppler_hz", 100.0))
    except ValueError as exc:
        raise CliError(f"bad channel configuration: {exc}") from exc
    return spatial, pdp, doppler


def build_sweep_config(cfg: CliConfig, args) -> SweepConfig:
    grid = build_grid(cfg)
    if grid.n_pairs > DESK_PAIR_LIMIT and not args.large:
        raise CliError(
            f"{grid.n_rx}x{grid.n_tx} MIMO exceeds the desk-scale default; rerun with --large"
        )
    pattern = build_pattern(cfg, grid)
    spatial, pdp, doppler = build_channel(cfg)
    try:
        return SweepConfig(
            grid=grid,
            pattern=pattern,
            spatial=spatial,
            pdp=pdp,
            doppler=doppler,
            snr_db_points=tuple(cfg.get("sweep", "snr_db_points", (0.0, 5.0, 10.0, 15.0, 20.0))),
            estimators=tuple(cfg.get("sweep", "estimators", harness.DEFAULT_ESTIMATORS)),
            n_trials=args.trials if args.trials is not None else cfg.get("sweep", "n_trials", 1000),
            seed=args.seed if args.seed is not None else cfg.get("sweep", "seed", 1),
        )
    except ValueError as exc:
        raise CliError(f"bad sweep configuration: {exc}") from exc


def _gain_summary(report: harness.SweepReport) -> str:
    """Analytic-MSE dB gain of each estimator over the genie-2D baseline."""
    lines = ["estimator gains vs genie2d baseline (positive = better), analytic dB:"]
    snrs = sorted({r.snr_db for r in report.rows})
    labels: list[tuple[str, str]] = []
    for r in report.rows:
        if (r.estimator, r.split_policy) not in labels:
            labels.append((r.estimator, r.split_policy))
    header = "  snr_db " + " ".join(f"{e}:{p:<8s}"[:18].rjust(18) for e, p in labels)
    lines.append(header)
    for snr in snrs:
        try:
            base = report.find(snr, "genie2d").analytic_mse_db
        except KeyError:
            lines.append(f"  {snr:6.1f}  (no genie2d row; gains unavailable)")
            continue
        cells = []
        for est_label, policy in labels:
            try:
                row = report.find(snr, est_label, policy)
                cells.append(
                    f"{base - row.analytic_mse_db:18.3f}" if row.error is None else f"{'error':>18s}"
                )
            except KeyError:
                cells.append(f"{'-':>18s}")
        lines.append(f"  {snr:6.1f} " + " ".join(cells))
    return "\n".join(lines)


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    sweep_cfg = build_sweep_config(cfg, args)
    report = harness.run_sweep(sweep_cfg)
    report.write_csv(args.out)
    print(f"wrote {len(report.rows)} rows to {args.out}")
    print(_gain_summary(report))
    for row in report.rows:
        if not row.mc_consistent:
            print(
                f"warning: snr={row.snr_db} {row.estimator}:{row.split_policy} "
                f"Monte Carlo mean is more than 4 standard errors from the "
                f"analytic value ({row.mc_mse:.6g} vs {row.analytic_mse:.6g})"
            )
    if report.has_errors:
        for row in report.rows:
            if row.error is not None:
                print(f"estimator error at snr={row.snr_db}: {row.estimator}: {row.error}")
        return EXIT_ESTIMATOR
    return EXIT_OK


def cmd_noise_split(args) -> int:
    cfg = load_config(args.config)
    sweep_cfg = build_sweep_config(cfg, args)
    report = harness.noise_split_study(sweep_cfg)
    if args.out:
        report.write_csv(args.out)
        print(f"wrote {len(report.rows)} rows to {args.out}")
    best = harness.best_split_rows(report)
    print("noise split study, 2d1d analytic MSE (dB); * marks the best split per SNR:")
    for snr in sorted({r.snr_db for r in report.rows}):
        noise_power = harness.snr_db_to_noise_power(snr)
        print(f"  snr {snr:5.1f} dB (noise power {noise_power:.6g}):")
        for row in report.rows:
            if row.snr_db != snr:
                continue
            if row.error is not None:
                print(f"    {row.split_policy:>14s}: error: {row.error}")
                continue
            split = make_split(row.split_policy, noise_power)
            mark = " *" if best.get(snr) is row else ""
            print(
                f"    {row.split_policy:>14s}: mse={row.analytic_mse_db:9.4f} dB"
                f"  (sigma_s2={split.sigma_s2:.6g}, sigma_tf2={split.sigma_tf2:.6g}){mark}"
            )
        eq = next(
            (r for r in report.rows if r.snr_db == snr and r.split_policy == "equal"), None
        )
        nv = next(
            (r for r in report.rows if r.snr_db == snr and r.split_policy == "naive"), None
        )
        if eq and nv and eq.error is None and nv.error is None:
            print(
                f"    equal-split gain over naive: "
                f"{nv.analytic_mse_db - eq.analytic_mse_db:+.3f} dB"
            )
    if report.has_errors:
        return EXIT_ESTIMATOR
    return EXIT_OK


def cmd_export(args) -> int:
    cfg = load_config(args.config)
    sweep_cfg = build_sweep_config(cfg, args)
    n_samples = args.samples if args.samples is not None else cfg.get("export", "samples", 512)
    lo = cfg.get("export", "snr_min_db", 0.0)
    hi = cfg.get("export", "snr_max_db", 20.0)
    try:
        header = harness.export_dataset(sweep_cfg, args.out, n_samples, (lo, hi))
    except OSError as exc:
        raise CliError(f"cannot write dataset {args.out}: {exc.strerror}") from exc
    print(
        f"wrote {header.n_samples} samples to {args.out}: "
        f"{header.n_rx}x{header.n_tx} MIMO, {header.n_symbols}x{header.n_subcarriers} grid, "
        f"{header.k_dmrs} DMRS symbols x {header.n_p_per_symbol} pilots"
    )
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    grid = build_grid(cfg)
    pattern = build_pattern(cfg, grid)
    build_channel(cfg)  # validates the channel block too
    print(
        f"grid: {grid.n_subcarriers} subcarriers x {grid.n_symbols} symbols, "
        f"{grid.n_rx}x{grid.n_tx} MIMO"
    )
    print(
        f"pattern: DMRS symbols {list(pattern.dmrs_symbols)}, "
        f"{pattern.pilots_per_symbol} pilots/symbol/port, "
        f"{pattern.pilot_count} pilots per port"
        + (", shared across ports" if pattern.shared else "")
    )
    print(render_pattern(pattern, grid))
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ce3d",
        description="Channel-estimation lab for correlated MIMO-OFDM grids",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_out: bool):
        p.add_argument("--config", required=True, help="path to the text config file")
        p.add_argument("--seed", type=int, default=None, help="override sweep.seed")
        p.add_argument("--trials", type=int, default=None, help="override sweep.n_trials")
        p.add_argument("--large", action="store_true", help="allow beyond desk-scale MIMO")
        if needs_out:
            p.add_argument("--out", required=True, help="output file path")

    p_sweep = sub.add_parser("sweep", help="run the SNR sweep and write a CSV report")
    add_common(p_sweep, needs_out=True)
    p_sweep.set_defaults(func=cmd_sweep)

    p_split = sub.add_parser("noise-split", help="compare noise split policies for 2d1d")
    add_common(p_split, needs_out=False)
    p_split.add_argument("--out", default=None, help="optional CSV output path")
    p_split.set_defaults(func=cmd_noise_split)

    p_export = sub.add_parser("export", help="export a training dataset")
    add_common(p_export, needs_out=True)
    p_export.add_argument("--samples", type=int, default=None, help="sample count")
    p_export.set_defaults(func=cmd_export)

    p_val = sub.add_parser("validate", help="validate the config and print the pattern")
    p_val.add_argument("--config", required=True, help="path to the text config file")
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; the contract here is 1
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
