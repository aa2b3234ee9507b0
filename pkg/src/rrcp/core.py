"""Domain types and per-sample computations shared by every conformal method.

Everything downstream works on classifier probability outputs only: a
probability vector per sample, optionally paired with a 1-based true label.
This module owns validation of those vectors, descending-probability
sorting, top-w prediction sets, and the cumulative set-confidence scores.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

# Vectors whose sum deviates from 1 by more than SUM_TOLERANCE but at most
# RENORM_TOLERANCE are renormalized with a warning; larger deviations are
# rejected. Exported softmax outputs carry float round-off, hence the split.
SUM_TOLERANCE = 1e-6
RENORM_TOLERANCE = 1e-3


class ValidationError(ValueError):
    """Input data violates a documented invariant."""


class RenormalizationWarning(UserWarning):
    """A probability vector was renormalized to sum to 1."""


def validate_probabilities(
    probs: Sequence[float] | np.ndarray,
    renorm_tolerance: float = RENORM_TOLERANCE,
) -> np.ndarray:
    """Validate a class-probability vector and return it as float64.

    Accepts vectors summing to 1 within ``SUM_TOLERANCE`` as-is; sums off by
    at most ``renorm_tolerance`` are renormalized with a
    ``RenormalizationWarning``; anything else raises.

    Raises:
        ValidationError: fewer than 2 entries, an entry outside [0, 1],
            a non-finite entry, or a sum violation beyond tolerance.
    """
    arr = np.asarray(probs, dtype=np.float64)
    if arr.ndim != 1:
        raise ValidationError(f"probability vector must be 1-D, got shape {arr.shape}")
    if arr.size < 2:
        raise ValidationError(f"need at least 2 classes, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("probability vector contains non-finite values")
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValidationError("probabilities must lie in [0, 1]")
    total = float(arr.sum())
    # a few ulps of slack keep boundary sums like 0.999 inside the policy
    boundary_eps = 4.0 * np.finfo(np.float64).eps
    if abs(total - 1.0) > SUM_TOLERANCE + boundary_eps:
        if abs(total - 1.0) <= renorm_tolerance + boundary_eps:
            warnings.warn(
                f"probability vector sums to {total:.6f}; renormalizing",
                RenormalizationWarning,
                stacklevel=2,
            )
            arr = arr / total
        else:
            raise ValidationError(
                f"probability vector sums to {total:.6f}, beyond tolerance "
                f"{renorm_tolerance}"
            )
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ProbabilityVector:
    """Class probabilities for one sample. Classes are 1-based everywhere."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", validate_probabilities(self.probs))

    @property
    def n_classes(self) -> int:
        return self.probs.size

    def prob_of(self, label: int) -> float:
        """Probability of a 1-based class label."""
        check_label(label, self.n_classes)
        return float(self.probs[label - 1])


@dataclass(frozen=True)
class LabeledSample:
    probs: ProbabilityVector
    label: int

    def __post_init__(self):
        check_label(self.label, self.probs.n_classes)


@dataclass(frozen=True)
class Dataset:
    """A collection of labeled samples sharing one class count."""

    samples: tuple[LabeledSample, ...]
    n_classes: int

    def __post_init__(self):
        if len(self.samples) < 1:
            raise ValidationError("dataset must contain at least one sample")
        for i, s in enumerate(self.samples):
            if s.probs.n_classes != self.n_classes:
                raise ValidationError(
                    f"sample {i} has {s.probs.n_classes} classes, expected "
                    f"{self.n_classes}"
                )

    def __len__(self) -> int:
        return len(self.samples)

    @classmethod
    def from_arrays(cls, probs: np.ndarray, labels: Sequence[int]) -> "Dataset":
        """Build a dataset from an (n, K) probability matrix and 1-based labels."""
        probs = np.asarray(probs, dtype=np.float64)
        if probs.ndim != 2:
            raise ValidationError(f"expected (n, K) matrix, got shape {probs.shape}")
        labels = np.asarray(labels)
        if labels.shape != (probs.shape[0],):
            raise ValidationError("labels length must match the number of rows")
        samples = tuple(
            LabeledSample(ProbabilityVector(row), int(lab))
            for row, lab in zip(probs, labels)
        )
        return cls(samples=samples, n_classes=probs.shape[1])

    def prob_matrix(self) -> np.ndarray:
        """(n, K) float64 matrix of the validated probabilities."""
        return np.vstack([s.probs.probs for s in self.samples])

    def label_array(self) -> np.ndarray:
        """(n,) array of 1-based labels."""
        return np.array([s.label for s in self.samples], dtype=np.int64)


@dataclass(frozen=True)
class SortedPrediction:
    """A sample's classes sorted by descending probability.

    ``perm`` holds 1-based class indices; ties are broken by the smaller
    class index, so the ordering is deterministic across runs and platforms.
    """

    perm: np.ndarray
    sorted_probs: np.ndarray

    def __post_init__(self):
        perm = np.asarray(self.perm, dtype=np.int64)
        sorted_probs = np.asarray(self.sorted_probs, dtype=np.float64)
        if perm.shape != sorted_probs.shape or perm.ndim != 1:
            raise ValidationError("perm and sorted_probs must be matching 1-D arrays")
        if not np.array_equal(np.sort(perm), np.arange(1, perm.size + 1)):
            raise ValidationError("perm must be a permutation of 1..K")
        if np.any(np.diff(sorted_probs) > 0.0):
            raise ValidationError("sorted_probs must be non-increasing")
        object.__setattr__(self, "perm", perm)
        object.__setattr__(self, "sorted_probs", sorted_probs)

    @property
    def n_classes(self) -> int:
        return self.perm.size

    def rank_of(self, label: int) -> int:
        """1-based position of a class in the descending order."""
        check_label(label, self.n_classes)
        return int(np.nonzero(self.perm == label)[0][0]) + 1

    def cumulative(self) -> np.ndarray:
        """Running sums of the sorted probabilities (confidence at each size)."""
        return np.cumsum(self.sorted_probs)


@dataclass(frozen=True)
class PredictionSet:
    """An ordered, non-empty set of candidate 1-based class labels."""

    labels: tuple[int, ...]

    def __post_init__(self):
        if len(self.labels) == 0:
            raise ValidationError("prediction set must be non-empty")
        if len(set(self.labels)) != len(self.labels):
            raise ValidationError("prediction set labels must be distinct")

    @property
    def size(self) -> int:
        return len(self.labels)

    def __contains__(self, label: int) -> bool:
        return label in self.labels

    def __iter__(self):
        return iter(self.labels)


def check_label(label: int, n_classes: int) -> None:
    if not 1 <= label <= n_classes:
        raise ValidationError(f"label {label} out of range 1..{n_classes}")


def check_size(w: int, n_classes: int) -> None:
    if not 1 <= w <= n_classes:
        raise ValueError(f"set size {w} out of range 1..{n_classes}")


def sort_probabilities(p: ProbabilityVector) -> SortedPrediction:
    """Sort classes by descending probability, ties by ascending class index."""
    perm0, sorted_probs = sort_matrix(p.probs[None, :])
    return SortedPrediction(perm=perm0[0] + 1, sorted_probs=sorted_probs[0])


def prediction_set(s: SortedPrediction, w: int) -> PredictionSet:
    """The top-w classes of a sorted prediction, in descending-probability order."""
    check_size(w, s.n_classes)
    return PredictionSet(labels=tuple(int(k) for k in s.perm[:w]))


def set_confidence(s: SortedPrediction, w: int) -> float:
    """Total probability mass of the top-w classes.

    Accumulation runs left to right in float64, matching the cumulative
    rows used by the table/eval paths bit for bit.
    """
    check_size(w, s.n_classes)
    return float(s.cumulative()[w - 1])


def classic_score(p: ProbabilityVector, y: int) -> float:
    """Split-CP nonconformity score: one minus the true label's probability."""
    return 1.0 - p.prob_of(y)


def aps_score(p: ProbabilityVector, y: int) -> float:
    """Cumulative sorted probability up to and including the true label's rank."""
    s = sort_probabilities(p)
    return set_confidence(s, s.rank_of(y))


# -- vectorized counterparts ------------------------------------------------
#
# The scalar operations above delegate to these, so both paths share one
# definition of ordering and accumulation. Class values inside returned
# arrays are 0-based here; callers add 1 at the type boundary.


def sort_matrix(probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise descending sort of an (n, K) matrix.

    Returns (perm, sorted_probs) where perm holds 0-based column indices.
    Stable sort on the negated values breaks ties by ascending class index.
    """
    perm = np.argsort(-probs, axis=1, kind="stable")
    return perm, np.take_along_axis(probs, perm, axis=1)


def cumulative_confidences(sorted_probs: np.ndarray) -> np.ndarray:
    """Row-wise running sums: entry (i, w-1) is the top-w confidence."""
    return np.cumsum(sorted_probs, axis=1)


def label_ranks(perm: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """1-based rank of each sample's true label within its descending order."""
    hits = perm == (np.asarray(labels)[:, None] - 1)
    return hits.argmax(axis=1) + 1
