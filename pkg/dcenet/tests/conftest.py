import subprocess
import sys

import pytest

EXPORT_CONFIG = """
[grid]
n_subcarriers = 12
n_symbols = 14
n_rx = 2
n_tx = 2

[pattern]
dmrs_symbols = 3, 10
pilots_per_symbol = 3

[channel]
profile = etu
doppler_hz = 100
alpha_tx = 0.3
alpha_rx = 0.3

[export]
snr_min_db = 5
snr_max_db = 15

[sweep]
seed = 99
"""


@pytest.fixture(scope="session")
def exported_dataset(tmp_path_factory):
    """A 512-sample desk-grid dataset produced by the ce3d exporter CLI."""
    root = tmp_path_factory.mktemp("export")
    cfg = root / "export.cfg"
    cfg.write_text(EXPORT_CONFIG)
    out = root / "train.ce3d"
    proc = subprocess.run(
        [
            sys.executable, "-m", "ce3d.cli", "export",
            "--config", str(cfg), "--out", str(out), "--samples", "512",
        ],
        capture_output=True,
        text=True,
    )
    if proc.returncode != 0:
        pytest.fail(
            "ce3d exporter unavailable; install the primary package first "
            f"(pip install -e ..): {proc.stderr.strip()}"
        )
    return out
