"""Guided-residual manipulation-trace extraction and dual-stream detection.

The pipeline: an edge-preserving filter smooths an image while keeping
structure, the absolute difference to the input isolates high-frequency
manipulation traces, and a two-stream classifier fuses color and residual
evidence through channel attention with loss-adaptive stream weighting.
"""

from .image import Image, IntegralImage, box_mean, load_image, save_image
from .guided_filter import GuidedFilterParams, guided_filter
from .residuals import (HIGHPASS_KERNEL, ResidualImage, extract_guided_residual,
                        extract_highpass_residual, region_contrast,
                        visualize_residual)
from .fusion import StreamWeights, channel_attention, fuse, stream_weights
from .metrics import accuracy, auc_rank, confusion_matrix, per_class_accuracy
from .data import (SCENARIOS, TRACE_KINDS, DatasetConfig, DatasetManifest,
                   build_dataset, degrade_jpeg_like, degrade_mean_filter,
                   generate_base, generate_split, inject_trace, load_manifest)
from .model import (DualStreamModel, EvalReport, ModelConfig, TrainSettings,
                    TrainingDiverged, evaluate, train)
from .checkpoint import load_model, read_checkpoint, save_checkpoint
from .experiment import (DataCache, RunResult, RunSpec, ablation_grid,
                         extract_stream, fusion_grid, run_experiment)

__version__ = "0.1.0"

__all__ = [
    "Image", "IntegralImage", "box_mean", "load_image", "save_image",
    "GuidedFilterParams", "guided_filter",
    "HIGHPASS_KERNEL", "ResidualImage", "extract_guided_residual",
    "extract_highpass_residual", "region_contrast", "visualize_residual",
    "StreamWeights", "channel_attention", "fuse", "stream_weights",
    "accuracy", "auc_rank", "confusion_matrix", "per_class_accuracy",
    "SCENARIOS", "TRACE_KINDS", "DatasetConfig", "DatasetManifest",
    "build_dataset", "degrade_jpeg_like", "degrade_mean_filter",
    "generate_base", "generate_split", "inject_trace", "load_manifest",
    "DualStreamModel", "EvalReport", "ModelConfig", "TrainSettings",
    "TrainingDiverged", "evaluate", "train",
    "load_model", "read_checkpoint", "save_checkpoint",
    "DataCache", "RunResult", "RunSpec", "ablation_grid", "extract_stream",
    "fusion_grid", "run_experiment",
    "__version__",
]
