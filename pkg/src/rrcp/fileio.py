"""File formats: probability tables, serialized models, and report rendering.

Probability files are comma-separated text with a one-line header so they
stay hand-editable and interoperable with external exporters. Model files
are a small self-describing binary with a version byte; thresholds must
round-trip bit-exactly, which text floats would not guarantee.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .baselines import ApsCpModel, ClassicCpModel
from .core import (
    Dataset,
    RenormalizationWarning,
    ValidationError,
    check_label,
    validate_probabilities,
)
from .reliability import RrcpModel

MAGIC = b"CPMF"
FORMAT_VERSION = 1
_METHOD_CODES = {"classic": 1, "aps": 2, "rrcp": 3}
_METHOD_NAMES = {v: k for k, v in _METHOD_CODES.items()}

AnyModel = Union[ClassicCpModel, ApsCpModel, RrcpModel]


class FileFormatError(ValidationError):
    """A file does not conform to its documented format."""


@dataclass(frozen=True)
class ProbabilityFileData:
    """Parsed probability file: validated matrix plus optional labels/names."""

    probs: np.ndarray
    labels: Optional[np.ndarray]
    class_names: Optional[tuple[str, ...]]

    @property
    def n_classes(self) -> int:
        return self.probs.shape[1]

    @property
    def n_rows(self) -> int:
        return self.probs.shape[0]

    @property
    def labeled(self) -> bool:
        return self.labels is not None

    def dataset(self) -> Dataset:
        if self.labels is None:
            raise ValidationError("file carries no label column")
        return Dataset.from_arrays(self.probs, self.labels)


def atomic_write_bytes(path: Union[str, Path], data: bytes) -> None:
    """Write via a temp file in the target directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Union[str, Path], text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


# -- probability files --------------------------------------------------------


def save_probability_file(
    path: Union[str, Path],
    probs: np.ndarray,
    labels: Optional[Sequence[int]] = None,
    class_names: Optional[Sequence[str]] = None,
) -> None:
    """Write an (n, K) matrix, optional 1-based labels, and optional names.

    Probabilities are written with 17 significant digits, enough to
    round-trip float64 losslessly.
    """
    probs = np.asarray(probs, dtype=np.float64)
    n, k = probs.shape
    header = [str(k), str(n)]
    if class_names is not None:
        if len(class_names) != k:
            raise ValidationError(f"expected {k} class names, got {len(class_names)}")
        for name in class_names:
            if "," in name or "\n" in name:
                raise ValidationError(f"class name {name!r} contains a delimiter")
        header.extend(class_names)
    lines = [",".join(header)]
    if labels is not None and len(labels) != n:
        raise ValidationError("labels length must match the number of rows")
    for i in range(n):
        fields = [format(v, ".17g") for v in probs[i]]
        if labels is not None:
            fields.append(str(int(labels[i])))
        lines.append(",".join(fields))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_probability_file(
    path: Union[str, Path],
    require_labels: bool = False,
    renorm_tolerance: float = 1e-3,
) -> ProbabilityFileData:
    """Parse and validate a probability file.

    Each format violation raises :class:`FileFormatError` naming the
    offending data row. Rows renormalized under the tolerance policy are
    reported once through a single :class:`RenormalizationWarning`.
    """
    path = Path(path)
    raw = path.read_text(encoding="utf-8").splitlines()
    if not raw:
        raise FileFormatError(f"{path}: empty file")
    head = raw[0].split(",")
    if len(head) < 2:
        raise FileFormatError(f"{path}: header needs at least 'K,n'")
    try:
        k, n = int(head[0]), int(head[1])
    except ValueError:
        raise FileFormatError(f"{path}: malformed header {raw[0]!r}") from None
    if k < 2 or n < 1:
        raise FileFormatError(f"{path}: header K={k}, n={n} out of range")
    names: Optional[tuple[str, ...]] = None
    if len(head) > 2:
        if len(head) != 2 + k:
            raise FileFormatError(
                f"{path}: header lists {len(head) - 2} class names, expected {k}"
            )
        names = tuple(head[2:])
    body = [line for line in raw[1:] if line.strip()]
    if len(body) != n:
        raise FileFormatError(f"{path}: header says n={n} but found {len(body)} rows")

    labeled: Optional[bool] = None
    rows = np.empty((n, k), dtype=np.float64)
    labels = np.empty(n, dtype=np.int64)
    renormalized = 0
    first_renorm_row = 0
    for i, line in enumerate(body, start=1):
        fields = line.split(",")
        if labeled is None:
            labeled = len(fields) == k + 1
        if len(fields) != k + (1 if labeled else 0):
            raise FileFormatError(
                f"{path}: row {i} has {len(fields)} fields, expected "
                f"{k + (1 if labeled else 0)}"
            )
        try:
            vec = np.array([float(v) for v in fields[:k]], dtype=np.float64)
        except ValueError:
            raise FileFormatError(f"{path}: row {i} has a non-numeric probability") from None
        try:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", RenormalizationWarning)
                rows[i - 1] = validate_probabilities(vec, renorm_tolerance)
            if caught:
                renormalized += 1
                if renormalized == 1:
                    first_renorm_row = i
        except ValidationError as exc:
            raise FileFormatError(f"{path}: row {i}: {exc}") from None
        if labeled:
            try:
                label = int(fields[k])
            except ValueError:
                raise FileFormatError(f"{path}: row {i} has a non-integer label") from None
            try:
                check_label(label, k)
            except ValidationError as exc:
                raise FileFormatError(f"{path}: row {i}: {exc}") from None
            labels[i - 1] = label
    if require_labels and not labeled:
        raise FileFormatError(f"{path}: a labeled file is required here")
    if renormalized:
        warnings.warn(
            f"{path}: renormalized {renormalized} row(s) whose probabilities "
            f"summed off 1 (first: row {first_renorm_row})",
            RenormalizationWarning,
            stacklevel=2,
        )
    return ProbabilityFileData(
        probs=rows, labels=labels if labeled else None, class_names=names
    )


# -- model files ---------------------------------------------------------------


def save_model(path: Union[str, Path], model: AnyModel, n_classes: int) -> None:
    """Serialize a calibrated model; numeric payloads round-trip bit-exactly."""
    if n_classes < 2:
        raise ValidationError(f"n_classes {n_classes} out of range")
    if isinstance(model, RrcpModel):
        if model.n_classes != n_classes:
            raise ValidationError(
                f"model covers {model.n_classes} classes, file header says {n_classes}"
            )
        method = "rrcp"
    elif isinstance(model, ClassicCpModel):
        method = "classic"
    elif isinstance(model, ApsCpModel):
        method = "aps"
    else:
        raise ValidationError(f"cannot serialize {type(model).__name__}")
    out = bytearray()
    out += struct.pack(
        "<4sBBIId",
        MAGIC,
        FORMAT_VERSION,
        _METHOD_CODES[method],
        n_classes,
        model.n_cali,
        model.alpha,
    )
    if isinstance(model, RrcpModel):
        out += struct.pack("<IQ", model.bootstrap_rounds, model.seed)
        for t in model.thresholds:
            out += struct.pack("<Bd", 0 if t is None else 1, 0.0 if t is None else t)
    else:
        out += struct.pack("<d", model.q_alpha)
    atomic_write_bytes(path, bytes(out))


@dataclass(frozen=True)
class ModelEnvelope:
    """A deserialized model plus the file-level metadata around it."""

    method: str
    n_classes: int
    model: AnyModel


def load_model(path: Union[str, Path]) -> ModelEnvelope:
    data = Path(path).read_bytes()
    head_size = struct.calcsize("<4sBBIId")
    if len(data) < head_size:
        raise FileFormatError(f"{path}: truncated model file")
    magic, version, method_code, k, n_cali, alpha = struct.unpack(
        "<4sBBIId", data[:head_size]
    )
    if magic != MAGIC:
        raise FileFormatError(f"{path}: not a model file (bad magic)")
    if version != FORMAT_VERSION:
        raise FileFormatError(f"{path}: unsupported format version {version}")
    method = _METHOD_NAMES.get(method_code)
    if method is None:
        raise FileFormatError(f"{path}: unknown method code {method_code}")
    rest = data[head_size:]
    try:
        if method == "rrcp":
            rounds, seed = struct.unpack_from("<IQ", rest, 0)
            offset = struct.calcsize("<IQ")
            thresholds: list[Optional[float]] = []
            for _ in range(k):
                flag, value = struct.unpack_from("<Bd", rest, offset)
                offset += struct.calcsize("<Bd")
                thresholds.append(value if flag else None)
            if offset != len(rest):
                raise FileFormatError(f"{path}: trailing bytes in model file")
            model: AnyModel = RrcpModel(
                thresholds=tuple(thresholds),
                alpha=alpha,
                bootstrap_rounds=rounds,
                seed=seed,
                n_cali=n_cali,
            )
        else:
            (q_alpha,) = struct.unpack_from("<d", rest, 0)
            if len(rest) != struct.calcsize("<d"):
                raise FileFormatError(f"{path}: trailing bytes in model file")
            cls = ClassicCpModel if method == "classic" else ApsCpModel
            model = cls(q_alpha=q_alpha, alpha=alpha, n_cali=n_cali)
    except struct.error:
        raise FileFormatError(f"{path}: truncated model file") from None
    return ModelEnvelope(method=method, n_classes=k, model=model)


# -- reports -------------------------------------------------------------------


def render_report_text(payload: dict) -> str:
    """Flatten a report dict into stable `key=value` lines."""
    lines = []
    for key, value in _flatten(payload):
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"


def _flatten(payload: dict, prefix: str = ""):
    for key in sorted(payload):
        value = payload[key]
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            yield from _flatten(value, prefix=f"{name}.")
        elif isinstance(value, (list, tuple)):
            yield name, ",".join(str(v) for v in value)
        else:
            yield name, value


def render_report(payload: dict, fmt: str) -> str:
    if fmt == "structured":
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if fmt == "text":
        return render_report_text(payload)
    raise ValidationError(f"unknown report format {fmt!r}")


# -- provenance sidecars ---------------------------------------------------------


def sha256_of(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def verify_sidecar(path: Union[str, Path]) -> Optional[bool]:
    """Check `<path>.sha256` if present; None when there is no sidecar.

    The sidecar's first line starts with the hex digest; anything after it
    (filenames, checkpoint identifiers) is provenance metadata.
    """
    sidecar = Path(str(path) + ".sha256")
    if not sidecar.exists():
        return None
    first = sidecar.read_text(encoding="utf-8").splitlines()
    if not first:
        raise FileFormatError(f"{sidecar}: empty checksum file")
    expected = first[0].split()[0].strip().lower()
    return sha256_of(path) == expected
