"""Patch-based transformer for ECGs whose leads are only partly recorded.

Records are split into per-lead patches with a missingness marker, fully
missing patches are discarded, and a small transformer classifies the rest.
"""
from ._accel import backend
from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .data import LEADS, VOCAB, DataFormatError, Dataset, LabeledRecord, Signal, load_dataset, save_dataset, synth_dataset, synth_record
from .layouts import CATALOG, LayoutError, apply_mask, layout_mask, random_mask, resolve_layout
from .metrics import FocalConfig, MetricsReport, auroc, focal_loss, metrics_report
from .model import ModelConfig, PatchECG
from .patching import PatchKind, segment
from .training import TrainConfig, evaluate, key_patches, load_model, train

__version__ = "0.1.0"

__all__ = [
    "backend", "Checkpoint", "CheckpointError", "load_checkpoint", "save_checkpoint",
    "LEADS", "VOCAB", "DataFormatError", "Dataset", "LabeledRecord", "Signal", "load_dataset",
    "save_dataset", "synth_dataset", "synth_record", "CATALOG", "LayoutError", "apply_mask",
    "layout_mask", "random_mask", "resolve_layout", "FocalConfig", "MetricsReport", "auroc",
    "focal_loss", "metrics_report", "ModelConfig", "PatchECG", "PatchKind", "segment",
    "TrainConfig", "evaluate", "key_patches", "load_model", "train",
]
