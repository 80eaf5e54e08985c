"""clids: a CNN-LSTM intrusion-detection toolkit for IoT network flows.

Trains a dual-head binary classifier (benign vs. malicious) on flow
feature CSVs with a self-contained tensor/layer/optimizer engine whose
gradients are verified against finite differences.
"""

__version__ = "1.0.0"

from .data import FlowDataset, NormStats, SplitSpec, synth_generate
from .model import ModelConfig, ModelGraph, Prediction, build_model
from .optim import TrainConfig, TrainReport, train
from .tensor import Tensor, matmul, reduce

__all__ = [
    "Tensor",
    "matmul",
    "reduce",
    "FlowDataset",
    "NormStats",
    "SplitSpec",
    "synth_generate",
    "ModelConfig",
    "ModelGraph",
    "Prediction",
    "build_model",
    "TrainConfig",
    "TrainReport",
    "train",
    "__version__",
]
