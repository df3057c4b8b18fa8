import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ce3d.corrmodel import DopplerConfig, PowerDelayProfile, SpatialCorrConfig, assemble
from ce3d.gridmodel import GridConfig, build_default_pattern


@pytest.fixture(scope="session")
def desk_grid():
    return GridConfig(n_subcarriers=12, n_symbols=14, n_rx=2, n_tx=2)


@pytest.fixture(scope="session")
def desk_pattern(desk_grid):
    return build_default_pattern(desk_grid, k_dmrs_symbols=2, n_p_per_symbol=3)


@pytest.fixture(scope="session")
def desk_corr(desk_grid):
    return assemble(
        desk_grid,
        SpatialCorrConfig(alpha_tx=0.3, alpha_rx=0.3),
        PowerDelayProfile.from_preset("etu"),
        DopplerConfig(100.0),
    )
