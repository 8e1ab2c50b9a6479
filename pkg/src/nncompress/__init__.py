"""Lossy compression of 4D geophysical fields by overfitting a coordinate network."""

from .artifact import CompressedArtifact, compression_ratio, dequantize, deserialize, quantize, serialize
from .decoder import eval_points, reconstruct_grid, stats
from .features import FourierBasis, encode, make_basis
from .gridfield import GridField4D, GridSpec, error_report, latitude_weights, load_field, sample_value, store_field
from .network import ModelConfig, ModelParams, ScalingTable, init_params
from .synth import SynthSpec, ablation_spec, desk_spec, synth_field
from .trainer import TrainConfig, train

__version__ = "0.1.0"
