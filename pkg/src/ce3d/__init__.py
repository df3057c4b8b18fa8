"""Channel-estimation laboratory for correlated MIMO-OFDM grids."""

from .chansim import (
    ChannelRealization,
    PilotObservation,
    draw_channel,
    draw_channels,
    generate_pilots,
    ls_estimate,
    observe,
    read_dataset,
    read_dataset_header,
    write_dataset,
)
from .corrmodel import (
    CorrelationSet,
    DopplerConfig,
    PowerDelayProfile,
    SpatialCorrConfig,
    assemble,
    bessel_j0,
    freq_corr,
    spatial_corr,
    time_corr,
)
from .estimators import (
    EstimatorFilter,
    FilterKind,
    NoiseSplit,
    analytic_mse,
    apply_2d1d,
    build_genie_2d,
    build_three_x_one_d,
    build_two_plus_one_d,
    build_w3d,
    build_w_1d,
    build_w_s,
    build_w_tf,
    make_split,
    split_noise_equal,
    split_residual,
)
from .gridmodel import (
    DmrsPattern,
    GridConfig,
    SelectionMatrix,
    build_default_pattern,
    full_pilot_pattern,
    selection_matrices_1d,
    selection_matrix_full,
    selection_matrix_port,
)
from .harness import SweepConfig, SweepReport, export_dataset, noise_split_study, run_sweep

__version__ = "0.1.0"
