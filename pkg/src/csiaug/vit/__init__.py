"""SimpleViTFi classifier, its training loop and confusion metrics."""
from .metrics import ClassifierMetrics, plot_confusion
from .model import SimpleViTFi, ViTConfig, downsample, parameter_count, patchify, predict
from .train import TrainedClassifier, evaluate, load_classifier, save_classifier, train_classifier

__all__ = [
    "ClassifierMetrics",
    "SimpleViTFi",
    "TrainedClassifier",
    "ViTConfig",
    "downsample",
    "evaluate",
    "load_classifier",
    "parameter_count",
    "patchify",
    "plot_confusion",
    "predict",
    "save_classifier",
    "train_classifier",
]
