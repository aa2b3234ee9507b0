"""Reliable-region estimation and inference.

For every set size w the calibration data induces a confidence value per
sample (mass of its top-w classes) and a correctness flag (true label inside
the top-w set). A candidate region [t, 1] is certified *reliable* when, in a
bootstrap over the calibration set, the fraction of resamples in which every
in-region sample is correct reaches 1 - alpha. The per-size threshold is the
lowest certified candidate, which makes the region as large (and the
inferred sets as small) as the reliability criterion allows. Inference then
emits, for each test sample, the smallest set size whose confidence clears
its threshold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .core import (
    Dataset,
    PredictionSet,
    ProbabilityVector,
    ValidationError,
    check_size,
    cumulative_confidences,
    label_ranks,
    prediction_set,
    sort_matrix,
    sort_probabilities,
)

RngLike = Union[int, np.random.SeedSequence, np.random.Generator]


@dataclass(frozen=True)
class ConfidenceTable:
    """Per-sample, per-size confidences and correctness flags.

    ``confidences[i, w-1]`` is sample i's top-w probability mass;
    ``correct[i, w-1]`` says whether the true label sits within the top w.
    """

    confidences: np.ndarray
    correct: np.ndarray

    def __post_init__(self):
        conf = np.asarray(self.confidences, dtype=np.float64)
        corr = np.asarray(self.correct, dtype=bool)
        if conf.ndim != 2 or conf.shape != corr.shape:
            raise ValidationError(
                f"confidences {conf.shape} and correct {corr.shape} must be "
                "matching 2-D arrays"
            )
        if np.any(np.diff(conf, axis=1) < 0.0):
            raise ValidationError("confidence rows must be non-decreasing")
        if not corr[:, -1].all():
            raise ValidationError("the full-size set must always be correct")
        if np.any(np.diff(corr.astype(np.int8), axis=1) < 0):
            raise ValidationError("correctness must be monotone in the set size")
        object.__setattr__(self, "confidences", conf)
        object.__setattr__(self, "correct", corr)

    @property
    def n_samples(self) -> int:
        return self.confidences.shape[0]

    @property
    def n_classes(self) -> int:
        return self.confidences.shape[1]


@dataclass(frozen=True)
class ReliabilityVerdict:
    """Outcome of one bootstrap certification of a candidate region."""

    reliable: bool
    success_fraction: float
    region_count: int


@dataclass(frozen=True)
class RrcpModel:
    """Estimated per-size thresholds; ``None`` marks a size with no reliable region."""

    thresholds: tuple[Optional[float], ...]
    alpha: float
    bootstrap_rounds: int
    seed: int
    n_cali: int

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.bootstrap_rounds < 1:
            raise ValueError("bootstrap_rounds must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit an unsigned 64-bit integer")
        for w, t in enumerate(self.thresholds, start=1):
            if t is not None and not 0.0 < t <= 1.0:
                raise ValidationError(f"threshold for size {w} outside (0, 1]: {t}")

    @property
    def n_classes(self) -> int:
        return len(self.thresholds)

    def usable_sizes(self) -> tuple[int, ...]:
        return tuple(
            w for w, t in enumerate(self.thresholds, start=1) if t is not None
        )


@dataclass(frozen=True)
class RrcpPrediction:
    """One inferred set plus the size decision behind it."""

    labels: PredictionSet
    size: int
    confidence: float
    fallback: bool


def build_confidence_table(cali: Dataset) -> ConfidenceTable:
    """Confidences and correctness flags for every calibration sample and size."""
    probs = cali.prob_matrix()
    labels = cali.label_array()
    perm, sorted_probs = sort_matrix(probs)
    conf = cumulative_confidences(sorted_probs)
    ranks = label_ranks(perm, labels)
    sizes = np.arange(1, cali.n_classes + 1)
    correct = sizes[None, :] >= ranks[:, None]
    return ConfidenceTable(confidences=conf, correct=correct)


def candidate_stream(seed: int, w: int, rank: int) -> np.random.Generator:
    """The bootstrap RNG stream for a (size, candidate-rank) pair.

    Streams are derived independently per pair, so certification verdicts do
    not depend on scan order or on other sizes.
    """
    if seed < 0:
        raise ValueError("seed must be non-negative")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(w, rank))
    return np.random.default_rng(ss)


def _as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def check_region(
    table: ConfidenceTable,
    w: int,
    threshold: float,
    alpha: float,
    bootstrap_rounds: int,
    rng: RngLike,
) -> ReliabilityVerdict:
    """Bootstrap-certify the region of size-w confidences at or above ``threshold``.

    Draws ``bootstrap_rounds`` resamples of n indices with replacement; a
    resample succeeds when every resampled sample inside the region is
    correct (an empty region succeeds vacuously). The region is reliable
    when the success fraction reaches 1 - alpha.

    When no in-region calibration sample is incorrect, every resample would
    succeed whatever is drawn, so the resampling is skipped and the success
    fraction is exactly 1.
    """
    check_size(w, table.n_classes)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if bootstrap_rounds < 1:
        raise ValueError("bootstrap_rounds must be at least 1")
    conf = table.confidences[:, w - 1]
    in_region = conf >= threshold
    bad = in_region & ~table.correct[:, w - 1]
    if not bad.any():
        success = 1.0
    else:
        n = table.n_samples
        draws = _as_generator(rng).integers(0, n, size=(bootstrap_rounds, n))
        success = float(np.mean(~bad[draws].any(axis=1)))
    return ReliabilityVerdict(
        reliable=success >= 1.0 - alpha,
        success_fraction=success,
        region_count=int(in_region.sum()),
    )


def estimate_thresholds(
    cali: Dataset,
    alpha: float,
    bootstrap_rounds: int = 1000,
    seed: int = 0,
    early_stop: bool = False,
) -> RrcpModel:
    """Estimate the per-size reliable-region thresholds from calibration data.

    For each size the distinct observed confidences are scanned in
    descending order; every candidate is bootstrap-certified on its own
    stream and the lowest reliable one becomes the threshold. A size where
    no candidate certifies is marked unusable. With ``early_stop`` the scan
    stops at the first failed candidate; all remaining candidates are
    smaller and in practice only certify through bootstrap flukes, but the
    full scan is the default since it is the literal procedure.
    """
    table = build_confidence_table(cali)
    thresholds: list[Optional[float]] = []
    for w in range(1, table.n_classes + 1):
        distinct = np.unique(table.confidences[:, w - 1])[::-1]
        best: Optional[float] = None
        for rank, t in enumerate(distinct):
            verdict = check_region(
                table, w, float(t), alpha, bootstrap_rounds,
                candidate_stream(seed, w, rank),
            )
            if verdict.reliable:
                best = float(t)  # descending scan: the last hit is min(L)
            elif early_stop:
                break
        thresholds.append(best)
    return RrcpModel(
        thresholds=tuple(thresholds),
        alpha=alpha,
        bootstrap_rounds=bootstrap_rounds,
        seed=seed,
        n_cali=len(cali),
    )


def rrcp_predict(p: ProbabilityVector, m: RrcpModel) -> PredictionSet:
    """The smallest reliable prediction set for one sample."""
    return rrcp_predict_detailed(p, m).labels


def rrcp_predict_detailed(p: ProbabilityVector, m: RrcpModel) -> RrcpPrediction:
    """Scan sizes ascending; emit the first whose confidence clears its threshold.

    A sample clearing no usable threshold falls back to the full set, which
    contains the true label by construction.
    """
    if p.n_classes != m.n_classes:
        raise ValidationError(
            f"sample has {p.n_classes} classes but model expects {m.n_classes}"
        )
    if not m.usable_sizes():
        raise ValidationError("model has no usable thresholds")
    s = sort_probabilities(p)
    conf = s.cumulative()
    for w in range(1, m.n_classes + 1):
        t = m.thresholds[w - 1]
        if t is not None and conf[w - 1] >= t:
            return RrcpPrediction(
                labels=prediction_set(s, w),
                size=w,
                confidence=float(conf[w - 1]),
                fallback=False,
            )
    k = m.n_classes
    return RrcpPrediction(
        labels=prediction_set(s, k),
        size=k,
        confidence=float(conf[k - 1]),
        fallback=True,
    )


def rrcp_predict_batch(
    probs: np.ndarray, m: RrcpModel
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized size selection for an (n, K) probability matrix.

    Returns (sizes, fallback) where sizes holds the chosen set size per row.
    Matches :func:`rrcp_predict_detailed` row for row; the scalar path stays
    the reference.
    """
    if probs.shape[1] != m.n_classes:
        raise ValidationError(
            f"matrix has {probs.shape[1]} classes but model expects {m.n_classes}"
        )
    if not m.usable_sizes():
        raise ValidationError("model has no usable thresholds")
    _, sorted_probs = sort_matrix(probs)
    conf = cumulative_confidences(sorted_probs)
    thr = np.array(
        [np.inf if t is None else t for t in m.thresholds], dtype=np.float64
    )
    ok = conf >= thr[None, :]
    any_ok = ok.any(axis=1)
    sizes = np.where(any_ok, ok.argmax(axis=1) + 1, m.n_classes)
    return sizes.astype(np.int64), ~any_ok


def threshold_summary(m: RrcpModel) -> list[dict]:
    """Per-size threshold report used by the CLI calibrate command."""
    return [
        {"size": w, "usable": t is not None, "threshold": t}
        for w, t in enumerate(m.thresholds, start=1)
    ]
