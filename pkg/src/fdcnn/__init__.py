"""Frequency-domain convolutional neural networks.

Convolution and pooling layers that operate on half-spectrum images, a
matched spatial-domain reference engine, a small training stack, model
builders, fundus-style image preprocessing, benchmark sweeps, and run
reports.

Submodules are imported lazily so that the command-line entry point can
pin BLAS thread counts before numpy first loads.  ``import fdcnn`` is
therefore cheap; attribute access triggers the real import.
"""

from __future__ import annotations

import importlib

__version__ = "0.1.0"

_SUBMODULES = (
    "architectures",
    "bench",
    "cli",
    "fdlayers",
    "imaging",
    "nn",
    "reports",
    "spatial",
    "spectral",
    "stats",
    "tensors",
)

# name -> submodule holding it
_EXPORTS = {
    "Shape": "tensors",
    "RealTensor": "tensors",
    "ComplexTensor": "tensors",
    "hadamard": "tensors",
    "concat_channels": "tensors",
    "crop_region": "tensors",
    "zero_pad": "tensors",
    "rfft2": "spectral",
    "irfft2": "spectral",
    "rfft_shift": "spectral",
    "reduced_width": "spectral",
    "pad_kernel_to_image": "spectral",
    "ConvConfig": "spatial",
    "KernelBank": "spatial",
    "OpCounter": "spatial",
    "conv2d_valid": "spatial",
    "conv_over_volume": "spatial",
    "weight_count_cov": "spatial",
    "FdcLayer": "fdlayers",
    "FdpLayer": "fdlayers",
    "weight_count_cic": "fdlayers",
    "kaiming_init": "fdlayers",
    "fdc_forward": "fdlayers",
    "fdc_backward": "fdlayers",
    "full_fdc_forward": "fdlayers",
    "full_fdc_backward": "fdlayers",
    "fdp_forward": "fdlayers",
    "fdp_backward": "fdlayers",
    "remove_artifacts": "fdlayers",
    "TrainConfig": "nn",
    "Metrics": "nn",
    "EpochLoss": "nn",
    "ParameterStore": "nn",
    "adam_step": "nn",
    "train": "nn",
    "evaluate": "nn",
    "gradient_check": "nn",
    "LayerSpec": "architectures",
    "ModelSpec": "architectures",
    "Model": "architectures",
    "shape_trace": "architectures",
    "count_parameters": "architectures",
    "conv_weight_count": "architectures",
    "build_fdcnn": "architectures",
    "build_cnn_equivalent": "architectures",
    "build_vgg16_variant": "architectures",
    "instantiate": "architectures",
    "LabeledImage": "imaging",
    "Dataset": "imaging",
    "preprocess": "imaging",
    "augment": "imaging",
    "load_dataset": "imaging",
    "synth_dataset": "imaging",
    "wilcoxon_signed_rank": "stats",
    "WilcoxonResult": "stats",
    "auc_score": "stats",
    "BenchRecord": "bench",
    "sweep_conv": "bench",
    "sweep_pool": "bench",
    "RunReport": "reports",
    "run_training": "reports",
    "compare_reports": "reports",
    "save_weights": "reports",
    "load_weights": "reports",
}

__all__ = sorted((*_SUBMODULES, *_EXPORTS, "__version__"))


def __getattr__(name: str):
    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    if name in _EXPORTS:
        module = importlib.import_module(f".{_EXPORTS[name]}", __name__)
        return getattr(module, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return __all__
