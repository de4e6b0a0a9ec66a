"""Rate-targeted lattice quantization of linear-layer weights with per-column spacing."""

from .container import decode_container, dequantize, encode_container
from .covariance import CovarianceSet
from .errors import WaterSICError
from .pipeline import PipelineConfig, QuantizedLayer, quantize_layer, quantize_layer_at_rate, quantize_model
from .theory import Spectrum, waterfill_rate

__version__ = "0.1.0"

__all__ = [
    "CovarianceSet",
    "PipelineConfig",
    "QuantizedLayer",
    "Spectrum",
    "WaterSICError",
    "decode_container",
    "dequantize",
    "encode_container",
    "quantize_layer",
    "quantize_layer_at_rate",
    "quantize_model",
    "waterfill_rate",
]
