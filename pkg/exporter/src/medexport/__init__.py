"""Export MedMNIST ResNet18 probabilities for conformal calibration."""

__version__ = "0.1.0"

from .datasets import DatasetInfo, ExportError, REGISTRY, dataset_info, load_split
from .export import ExportSpec, export_probabilities
from .resnet import build_model, load_checkpoint, resnet18_28, resnet18_224

__all__ = [
    "DatasetInfo",
    "ExportError",
    "ExportSpec",
    "REGISTRY",
    "build_model",
    "dataset_info",
    "export_probabilities",
    "load_checkpoint",
    "load_split",
    "resnet18_28",
    "resnet18_224",
]
