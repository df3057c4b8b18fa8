import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from ce3d.chansim import read_dataset_header
from ce3d.cli import main

CONFIG = """
[grid]
n_subcarriers = 6
n_symbols = 8
n_rx = 2
n_tx = 2

[pattern]
dmrs_symbols = 2, 6
pilots_per_symbol = 2

[channel]
profile = etu
doppler_hz = 100
alpha_tx = 0.3
alpha_rx = 0.3

[sweep]
snr_db_points = 0, 10
estimators = opt3d, 2d1d:equal, 2d1d:naive, genie2d
n_trials = 40
seed = 5
"""


@pytest.fixture
def config_path(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text(CONFIG)
    return p


def strip_wall_time(csv_text: str) -> list[str]:
    return [",".join(line.split(",")[:-1]) for line in csv_text.splitlines()]


class TestSweepCommand:
    def test_writes_rows_per_snr_estimator(self, config_path, tmp_path, capsys):
        out = tmp_path / "r.csv"
        rc = main(["sweep", "--config", str(config_path), "--out", str(out)])
        assert rc == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("snr_db,estimator,split_policy,analytic_mse")
        assert len(lines) == 1 + 2 * 4  # 2 SNRs x 4 estimators
        assert "gains vs genie2d" in capsys.readouterr().out

    def test_missing_config_exits_1_naming_path(self, tmp_path, capsys):
        missing = tmp_path / "nope.cfg"
        rc = main(["sweep", "--config", str(missing), "--out", str(tmp_path / "r.csv")])
        assert rc == 1
        assert str(missing) in capsys.readouterr().err

    def test_seed_flag_reproducible(self, config_path, tmp_path):
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["sweep", "--config", str(config_path), "--out", str(out1), "--seed", "7"]) == 0
        assert main(["sweep", "--config", str(config_path), "--out", str(out2), "--seed", "7"]) == 0
        assert strip_wall_time(out1.read_text()) == strip_wall_time(out2.read_text())

    def test_unknown_key_reports_line_number(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("[grid]\nn_subcarriers = 6\nbogus_key = 1\n")
        rc = main(["sweep", "--config", str(bad), "--out", str(tmp_path / "r.csv")])
        assert rc == 1
        err = capsys.readouterr().err
        assert "line 3" in err and "bogus_key" in err

    def test_large_gate(self, tmp_path, capsys):
        big = tmp_path / "big.cfg"
        big.write_text("[grid]\nn_rx = 4\nn_tx = 4\n[sweep]\nn_trials = 1\nsnr_db_points = 10\nestimators = genie2d\n")
        rc = main(["sweep", "--config", str(big), "--out", str(tmp_path / "r.csv")])
        assert rc == 1
        assert "--large" in capsys.readouterr().err
        rc = main(["sweep", "--config", str(big), "--out", str(tmp_path / "r.csv"), "--large"])
        assert rc == 0

    def test_estimator_failure_exits_2(self, tmp_path, capsys):
        cfg = tmp_path / "sep.cfg"
        # 3x1d on a one-pilot-per-symbol staggered layout cannot fail via the
        # default comb builder, so force a failing spec instead: negative
        # family fraction is rejected at build time
        cfg.write_text(
            "[grid]\nn_subcarriers = 6\nn_symbols = 8\n"
            "[sweep]\nn_trials = 2\nsnr_db_points = 10\nestimators = opt3d, 2d1d:family:1.5\n"
        )
        rc = main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "r.csv")])
        assert rc == 2
        assert "estimator error" in capsys.readouterr().out


class TestNoiseSplitCommand:
    def test_table_with_best_marker_and_gain(self, config_path, capsys):
        rc = main(["noise-split", "--config", str(config_path)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "*" in out
        assert "equal-split gain over naive" in out
        # sigma_w2 = 1 at 0 dB shows the closed-form equal share
        assert "0.414214" in out

    def test_gain_niceness_nonnegative(self, config_path, capsys):
        rc = main(["noise-split", "--config", str(config_path)])
        assert rc == 0
        out = capsys.readouterr().out
        for line in out.splitlines():
            if "equal-split gain over naive" in line:
                gain = float(line.rsplit(" ", 2)[-2])
                assert gain >= 0.0


class TestExportCommand:
    def test_export_header_matches(self, config_path, tmp_path, capsys):
        out = tmp_path / "d.ce3d"
        rc = main(["export", "--config", str(config_path), "--out", str(out), "--samples", "12"])
        assert rc == 0
        header = read_dataset_header(out)
        assert header.n_samples == 12
        assert (header.n_rx, header.n_tx) == (2, 2)
        assert (header.n_symbols, header.n_subcarriers) == (8, 6)
        assert "wrote 12 samples" in capsys.readouterr().out


class TestValidateCommand:
    def test_prints_grid_with_pilot_counts(self, config_path, capsys):
        rc = main(["validate", "--config", str(config_path)])
        assert rc == 0
        out = capsys.readouterr().out
        grid_lines = [l for l in out.splitlines() if l.strip() and l.lstrip()[0].isdigit()]
        assert len(grid_lines) == 6  # one per subcarrier
        digits = sum(ch in "01" for line in grid_lines for ch in line[7:])
        assert digits == 2 * 2 * 2  # ports x DMRS symbols x pilots per symbol

    def test_desk_reference_config_validates(self, capsys):
        desk = Path(__file__).parent.parent / "configs" / "desk.cfg"
        rc = main(["validate", "--config", str(desk)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "12 subcarriers x 14 symbols" in out


class TestUsage:
    def test_help_exits_zero(self):
        proc = subprocess.run(
            [sys.executable, "-m", "ce3d.cli", "--help"], capture_output=True, text=True
        )
        assert proc.returncode == 0
        assert "sweep" in proc.stdout

    def test_invalid_flag_exits_one(self):
        rc = main(["sweep", "--bogus"])
        assert rc == 1

    def test_console_script_entry(self):
        proc = subprocess.run(["ce3d", "--help"], capture_output=True, text=True)
        assert proc.returncode == 0
