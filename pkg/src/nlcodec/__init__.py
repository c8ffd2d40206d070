"""Nested latent variable image codec.

Forward neural transforms, discretized logistic/Gaussian entropy models, a
range-ANS coder, a self-describing bitstream container, image quality
metrics, and an enumeration-scale autoregressive-equivalence checker.
"""

from .codec import (LatentStack, RdPoint, analyze, compress,
                    compress_with_report, container_info, decompress,
                    evaluate, quantize, reconstruct)
from .entropy import (BinGrid, ConditionalGaussian, LogisticPrior,
                      QuantizedCdfTable, ScaleTable, bin_pmf,
                      default_scale_table, estimate_rate_bits, gaussian_cdf,
                      logistic_cdf, pmf_array, quantize_cdf, quantize_sigma)
from .errors import CorruptStreamError, ResourceLimitError, WrongModelError
from .metrics import QualityReport, ms_ssim, psnr
from .nn import (LayerSpec, NetworkSpec, conv2d, deconv2d,
                 default_network_spec, gdn, relu, run_stack)
from .weights import WeightStore

__version__ = "0.1.0"

__all__ = [
    "BinGrid", "ConditionalGaussian", "CorruptStreamError", "LatentStack",
    "LayerSpec", "LogisticPrior", "NetworkSpec", "QualityReport",
    "QuantizedCdfTable", "RdPoint", "ResourceLimitError", "ScaleTable",
    "WeightStore", "WrongModelError", "analyze", "bin_pmf", "compress",
    "compress_with_report", "container_info", "conv2d", "decompress",
    "deconv2d", "default_network_spec", "default_scale_table",
    "estimate_rate_bits", "evaluate", "gaussian_cdf", "gdn", "logistic_cdf",
    "ms_ssim", "pmf_array", "psnr", "quantize", "quantize_cdf",
    "quantize_sigma", "reconstruct", "relu", "run_stack",
]
