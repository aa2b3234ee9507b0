"""Run a pretrained classifier over one benchmark split and export softmax
probabilities in the conformal toolkit's probability-file format.

Output files are named ``{dataset}_{split}.csv`` with a ``.sha256`` sidecar
that records the file digest and the checkpoint identifier, so downstream
benchmark runs can validate provenance.
"""

from __future__ import annotations

import hashlib
import logging
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import torch

from .datasets import ExportError, dataset_info, load_split, normalize_split
from .resnet import build_model, load_checkpoint

logger = logging.getLogger(__name__)

# all MedMNIST release models were trained with this normalization
NORM_MEAN = 0.5
NORM_STD = 0.5


@dataclass(frozen=True)
class ExportSpec:
    """One export job: dataset split, checkpoint, and output location."""

    dataset: str
    split: str
    weights: Union[str, Path]
    data: Union[str, Path]
    out_dir: Union[str, Path]
    device: str = "cpu"
    batch_size: int = 256
    input_size: int = 28
    weights_sha256: Optional[str] = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ExportError("batch size must be positive")


def sha256_of(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _preprocess(images: np.ndarray, input_size: int) -> torch.Tensor:
    """uint8 (N, H, W[, C]) -> normalized float32 (N, C, H, W)."""
    x = torch.from_numpy(np.ascontiguousarray(images)).float().div_(255.0)
    if x.ndim == 3:
        x = x.unsqueeze(-1)
    x = x.permute(0, 3, 1, 2)
    if input_size != x.shape[-1]:
        x = torch.nn.functional.interpolate(
            x, size=(input_size, input_size), mode="bilinear", align_corners=False
        )
    return (x - NORM_MEAN) / NORM_STD


def _write_probability_file(
    path: Path, probs: np.ndarray, labels: np.ndarray
) -> None:
    """The toolkit's probability-file format: `K,n` header, 17-digit floats,
    1-based labels; written atomically."""
    n, k = probs.shape
    lines = [f"{k},{n}"]
    for i in range(n):
        fields = [format(v, ".17g") for v in probs[i]]
        fields.append(str(int(labels[i]) + 1))
        lines.append(",".join(fields))
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def export_probabilities(spec: ExportSpec) -> Path:
    """Export one split; returns the written csv path.

    Inference runs in eval mode with no augmentation, so the output is
    deterministic for fixed weights. Top-1 accuracy is logged as a sanity
    anchor against the published benchmark numbers; it is not asserted.
    """
    info = dataset_info(spec.dataset)
    split = normalize_split(spec.split)

    weights = Path(spec.weights)
    if not weights.exists():
        raise ExportError(f"weights file not found: {weights}")
    weights_digest = sha256_of(weights)
    if spec.weights_sha256 is not None:
        if weights_digest.lower() != spec.weights_sha256.lower():
            raise ExportError(
                f"{weights}: sha256 mismatch (have {weights_digest}, "
                f"expected {spec.weights_sha256})"
            )

    images, labels = load_split(spec.data, info, split)

    device = torch.device(spec.device)
    model = build_model(spec.input_size, info.channels, info.n_classes)
    load_checkpoint(model, weights)
    model.to(device).eval()

    prob_rows = []
    with torch.no_grad():
        for start in range(0, images.shape[0], spec.batch_size):
            batch = _preprocess(images[start : start + spec.batch_size], spec.input_size)
            logits = model(batch.to(device)).double()
            prob_rows.append(torch.softmax(logits, dim=1).cpu().numpy())
    probs = np.concatenate(prob_rows, axis=0)

    accuracy = float((probs.argmax(axis=1) == labels).mean())
    logger.info(
        "%s %s: %d rows, K=%d, top-1 accuracy %.4f",
        info.name, split, probs.shape[0], info.n_classes, accuracy,
    )

    out_dir = Path(spec.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / f"{info.name}_{split}.csv"
    _write_probability_file(out_path, probs, labels)

    sidecar = Path(str(out_path) + ".sha256")
    sidecar.write_text(
        f"{sha256_of(out_path)}  {out_path.name}\n"
        f"# checkpoint: {weights.name} sha256={weights_digest}\n"
        f"# dataset: {info.name} split={split} input_size={spec.input_size}\n"
        f"# top1_accuracy: {accuracy:.6f}\n",
        encoding="utf-8",
    )
    return out_path
