"""LFRA-Net: lightweight retinal-vessel segmentation with focal and
region-aware attention, built on a self-contained reverse-mode autodiff core.

The hot spatial kernels run through a compiled extension when available (see
:mod:`lfranet.backend`); a NumPy fallback with bit-identical results is
selected automatically otherwise.
"""

from .autodiff import Parameter, Tensor, no_grad
from .backend import BACKEND_NAME, available_backends
from .checkpoint import load_checkpoint, save_checkpoint
from .data import DATASET_SPECS, DatasetSpec, Sample, augment, load_dataset, preprocess, split_train_val
from .evaluation import (
    ConfusionCounts,
    MetricsReport,
    binarize,
    confusion_counts,
    evaluate_dataset,
    overlay_render,
    segmentation_metrics,
)
from .gradcheck import finite_diff_check
from .model import (
    ABLATION_PRESETS,
    LFRANet,
    ModelConfig,
    ablation_variant,
    build_model,
    flops_estimate,
    param_count,
)
from .training import Adam, TrainConfig, TrainLog, dice_loss, fit

__version__ = "0.1.0"

__all__ = [
    "ABLATION_PRESETS",
    "Adam",
    "BACKEND_NAME",
    "ConfusionCounts",
    "DATASET_SPECS",
    "DatasetSpec",
    "LFRANet",
    "MetricsReport",
    "ModelConfig",
    "Parameter",
    "Sample",
    "Tensor",
    "TrainConfig",
    "TrainLog",
    "ablation_variant",
    "augment",
    "available_backends",
    "binarize",
    "build_model",
    "confusion_counts",
    "dice_loss",
    "evaluate_dataset",
    "finite_diff_check",
    "fit",
    "flops_estimate",
    "load_checkpoint",
    "load_dataset",
    "no_grad",
    "overlay_render",
    "param_count",
    "preprocess",
    "save_checkpoint",
    "segmentation_metrics",
    "split_train_val",
]
