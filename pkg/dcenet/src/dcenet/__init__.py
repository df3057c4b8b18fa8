"""Dual-attention channel estimation network over exported channel datasets."""

from .complexity import count_params, estimate_macs, eval_formula
from .dataset import DatasetError, GridHeader, PilotLayout, default_layout, load, read_header
from .model import DceNet, DceNetConfig, PositionalEncoding, SpatialAttention, Srcnn
from .train import TrainConfig, TrainResult, masked_mse, prepare_tensors, train

__version__ = "0.1.0"
