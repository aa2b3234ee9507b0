"""MedMNIST dataset registry and npz split loading.

The five supported classification benchmarks, their class counts, image
channels, and official validation/test split sizes. Split sizes are
authoritative: an npz whose arrays disagree is rejected rather than
silently exported.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np


class ExportError(RuntimeError):
    """Fatal export problem: bad inputs, bad weights, or bad data."""


@dataclass(frozen=True)
class DatasetInfo:
    name: str
    npz_name: str
    n_classes: int
    channels: int
    n_val: int
    n_test: int

    def expected_rows(self, split: str) -> int:
        return self.n_val if split == "val" else self.n_test


REGISTRY = {
    "organa": DatasetInfo("organa", "organamnist.npz", 11, 1, 6491, 17778),
    "organc": DatasetInfo("organc", "organcmnist.npz", 11, 1, 2392, 8268),
    "organs": DatasetInfo("organs", "organsmnist.npz", 11, 1, 2452, 8829),
    "blood": DatasetInfo("blood", "bloodmnist.npz", 8, 3, 1712, 3421),
    "derma": DatasetInfo("derma", "dermamnist.npz", 7, 3, 1003, 2005),
}

_SPLIT_ALIASES = {"val": "val", "validation": "val", "test": "test"}


def dataset_info(name: str) -> DatasetInfo:
    try:
        return REGISTRY[name.lower()]
    except KeyError:
        raise ExportError(
            f"unknown dataset {name!r}; expected one of {sorted(REGISTRY)}"
        ) from None


def normalize_split(split: str) -> str:
    try:
        return _SPLIT_ALIASES[split.lower()]
    except KeyError:
        raise ExportError(f"unknown split {split!r}; expected val or test") from None


def load_split(
    npz_path: Union[str, Path], info: DatasetInfo, split: str
) -> tuple[np.ndarray, np.ndarray]:
    """Images (N, H, W[, C]) uint8 and 0-based labels (N,) for one split.

    Validates array presence, row counts against the registry, label range,
    and channel count.
    """
    npz_path = Path(npz_path)
    if not npz_path.exists():
        raise ExportError(f"dataset file not found: {npz_path}")
    with np.load(npz_path) as npz:
        img_key, lab_key = f"{split}_images", f"{split}_labels"
        if img_key not in npz or lab_key not in npz:
            raise ExportError(
                f"{npz_path}: missing arrays {img_key}/{lab_key}"
            )
        images = np.asarray(npz[img_key])
        labels = np.asarray(npz[lab_key]).reshape(-1)
    if images.shape[0] != labels.shape[0]:
        raise ExportError(
            f"{npz_path}: {images.shape[0]} images but {labels.shape[0]} labels"
        )
    expected = info.expected_rows(split)
    if images.shape[0] != expected:
        raise ExportError(
            f"{npz_path}: {split} split has {images.shape[0]} rows, expected "
            f"{expected} for {info.name}"
        )
    channels = 1 if images.ndim == 3 else images.shape[-1]
    if channels != info.channels:
        raise ExportError(
            f"{npz_path}: images have {channels} channel(s), expected "
            f"{info.channels} for {info.name}"
        )
    if labels.min() < 0 or labels.max() >= info.n_classes:
        raise ExportError(
            f"{npz_path}: labels outside 0..{info.n_classes - 1}"
        )
    return images, labels.astype(np.int64)
