"""Split conformal prediction baselines: classic score and cumulative score.

Both methods calibrate a single score quantile on held-out data and turn it
into per-sample prediction sets. They are the comparison points for the
reliable-region method in :mod:`rrcp.reliability`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    Dataset,
    PredictionSet,
    ProbabilityVector,
    ValidationError,
    cumulative_confidences,
    sort_matrix,
)


@dataclass(frozen=True)
class ClassicCpModel:
    """Calibrated classic split CP: include class k iff p[k] >= 1 - q_alpha."""

    q_alpha: float
    alpha: float
    n_cali: int

    def __post_init__(self):
        _check_alpha(self.alpha)
        if not 0.0 <= self.q_alpha <= 1.0:
            raise ValidationError(f"q_alpha {self.q_alpha} outside [0, 1]")


@dataclass(frozen=True)
class ApsCpModel:
    """Calibrated cumulative-score CP: emit the shortest sorted prefix reaching q_alpha."""

    q_alpha: float
    alpha: float
    n_cali: int

    def __post_init__(self):
        _check_alpha(self.alpha)
        if not 0.0 <= self.q_alpha <= 1.0:
            raise ValidationError(f"q_alpha {self.q_alpha} outside [0, 1]")


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")


def finite_sample_quantile(scores: np.ndarray, alpha: float) -> float:
    """The ceil((n+1)(1-alpha))-th smallest score, clamped to 1.0.

    This is the finite-sample corrected quantile that makes the split-CP
    coverage guarantee hold. When the index exceeds n (alpha too small for
    the sample size) the threshold saturates at the maximum possible score
    of 1, which admits every class.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.size
    if n == 0:
        raise ValidationError("cannot take a quantile of zero scores")
    _check_alpha(alpha)
    k = math.ceil((n + 1) * (1.0 - alpha))
    if k > n:
        return 1.0
    return float(np.sort(scores)[k - 1])


def calibrate_classic(cali: Dataset, alpha: float) -> ClassicCpModel:
    """Fit the classic-score quantile on a calibration set."""
    probs = cali.prob_matrix()
    labels = cali.label_array()
    scores = 1.0 - probs[np.arange(len(cali)), labels - 1]
    return ClassicCpModel(
        q_alpha=finite_sample_quantile(scores, alpha), alpha=alpha, n_cali=len(cali)
    )


def calibrate_aps(cali: Dataset, alpha: float) -> ApsCpModel:
    """Fit the cumulative-score quantile on a calibration set."""
    probs = cali.prob_matrix()
    labels = cali.label_array()
    perm, sorted_probs = sort_matrix(probs)
    conf = cumulative_confidences(sorted_probs)
    ranks = (perm == (labels[:, None] - 1)).argmax(axis=1)  # 0-based rank
    scores = conf[np.arange(len(cali)), ranks]
    return ApsCpModel(
        q_alpha=finite_sample_quantile(scores, alpha), alpha=alpha, n_cali=len(cali)
    )


def predict_classic(p: ProbabilityVector, m: ClassicCpModel) -> PredictionSet:
    """Classes whose probability reaches 1 - q_alpha, ascending class order.

    An empty selection falls back to the argmax singleton (first index on
    ties); use :func:`predict_classic_detailed` to observe the fallback.
    """
    return predict_classic_detailed(p, m)[0]


def predict_classic_detailed(
    p: ProbabilityVector, m: ClassicCpModel
) -> tuple[PredictionSet, bool]:
    """Like :func:`predict_classic`, also reporting whether the fallback fired."""
    keep = np.nonzero(p.probs >= 1.0 - m.q_alpha)[0]
    if keep.size == 0:
        return PredictionSet(labels=(int(np.argmax(p.probs)) + 1,)), True
    return PredictionSet(labels=tuple(int(k) + 1 for k in keep)), False


def predict_aps(p: ProbabilityVector, m: ApsCpModel) -> PredictionSet:
    """Shortest descending-probability prefix whose mass reaches q_alpha.

    Falls back to the full set when even the total mass stays below
    q_alpha (possible through float round-off when q_alpha is 1).
    """
    perm, sorted_probs = sort_matrix(p.probs[None, :])
    conf = cumulative_confidences(sorted_probs)[0]
    reached = np.nonzero(conf >= m.q_alpha)[0]
    w = int(reached[0]) + 1 if reached.size else p.n_classes
    return PredictionSet(labels=tuple(int(k) + 1 for k in perm[0, :w]))


# -- batch outcome helpers for the evaluation harness ------------------------
#
# These reproduce the scalar predict functions row-wise on an (n, K) matrix;
# the scalar paths remain the reference and the test suite checks agreement.


def predict_classic_batch_outcomes(
    probs: np.ndarray, labels: np.ndarray, m: ClassicCpModel
) -> tuple[np.ndarray, np.ndarray, int]:
    """(covered, set sizes, fallback count) of classic sets on a matrix."""
    keep = probs >= 1.0 - m.q_alpha
    sizes = keep.sum(axis=1)
    empty = sizes == 0
    n_fallback = int(empty.sum())
    rows = np.arange(probs.shape[0])
    covered = keep[rows, labels - 1]
    if n_fallback:
        argmax = probs.argmax(axis=1)
        covered = np.where(empty, argmax == labels - 1, covered)
        sizes = np.where(empty, 1, sizes)
    return covered, sizes.astype(np.int64), n_fallback


def predict_aps_batch_outcomes(
    probs: np.ndarray, labels: np.ndarray, m: ApsCpModel
) -> tuple[np.ndarray, np.ndarray, int]:
    """(covered, set sizes, fallback count) of cumulative-score sets on a matrix."""
    perm, sorted_probs = sort_matrix(probs)
    conf = cumulative_confidences(sorted_probs)
    reached = conf >= m.q_alpha
    any_reached = reached.any(axis=1)
    sizes = np.where(any_reached, reached.argmax(axis=1) + 1, probs.shape[1])
    ranks = (perm == (labels[:, None] - 1)).argmax(axis=1) + 1
    return ranks <= sizes, sizes.astype(np.int64), 0
