"""Metrics and the experiment harness.

Measures actual error rate (AER) and mean prediction-set size (PSS) for any
of the three methods, and checks empirical coverage against the methods'
finite-sample bounds on freshly drawn synthetic classifier outputs. The
synthetic generator draws labels from the emitted probability vectors, so it
is calibrated by construction and the conformal guarantees are exercisable
without any trained model.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from . import baselines, reliability
from .core import Dataset, PredictionSet, ValidationError, label_ranks, sort_matrix

METHODS = ("classic", "aps", "rrcp")

# 99% two-sided normal quantile; all binomial slack in this module uses it.
SLACK_Z = 2.576

# Synthetic classifier mixture: most samples get a strong logit boost on the
# intended class (confident stratum), the rest a weak one (ambiguous
# stratum). Errors then concentrate in the low-confidence range, as they do
# for real classifiers.
AMBIGUOUS_FRACTION = 0.3
CONFIDENT_BOOST = 6.0


@dataclass(frozen=True)
class EvaluationReport:
    """AER/PSS summary of one method on one labeled test set."""

    method: str
    alpha: float
    aer: float
    pss: float
    size_histogram: tuple[int, ...]
    fallback_count: int
    n_test: int

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}")
        if not 0.0 <= self.aer <= 1.0:
            raise ValidationError(f"aer {self.aer} outside [0, 1]")
        k = len(self.size_histogram)
        if not 1.0 <= self.pss <= k:
            raise ValidationError(f"pss {self.pss} outside [1, {k}]")
        if sum(self.size_histogram) != self.n_test:
            raise ValidationError("size histogram must sum to n_test")

    @property
    def coverage(self) -> float:
        return 1.0 - self.aer

    def aer_percent(self) -> float:
        """AER in percent, the unit used for display."""
        return 100.0 * self.aer

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "alpha": self.alpha,
            "aer": self.aer,
            "aer_percent": round(self.aer_percent(), 2),
            "pss": self.pss,
            "size_histogram": list(self.size_histogram),
            "fallback_count": self.fallback_count,
            "n_test": self.n_test,
        }


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the calibrated synthetic classifier-output generator."""

    n_classes: int
    n_samples: int
    temperature: float
    noise: float
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValidationError("need at least 2 classes")
        if self.n_samples < 1:
            raise ValidationError("need at least 1 sample")
        if not self.temperature > 0.0:
            raise ValidationError("temperature must be positive")
        if not 0.0 <= self.noise <= 1.0:
            raise ValidationError("noise must lie in [0, 1]")


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def generate_synthetic(
    spec: SyntheticSpec, rng: Optional[np.random.Generator] = None
) -> Dataset:
    """Draw a dataset of probability vectors with labels sampled from them.

    Lower temperature sharpens the vectors (one-hot in the limit); noise
    mixes in the uniform vector. Two calls with equal seeds produce
    identical datasets.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    k, n = spec.n_classes, spec.n_samples
    intended = rng.integers(0, k, size=n)
    boost = np.where(rng.random(n) < AMBIGUOUS_FRACTION, 1.0, CONFIDENT_BOOST)
    z = rng.standard_normal((n, k))
    z[np.arange(n), intended] += boost / spec.temperature
    probs = _softmax(z)
    probs = (1.0 - spec.noise) * probs + spec.noise / k
    u = rng.random(n)
    labels = np.minimum((u[:, None] > np.cumsum(probs, axis=1)).sum(axis=1), k - 1)
    return Dataset.from_arrays(probs, labels + 1)


def actual_error_rate(
    sets: Sequence[PredictionSet], labels: Sequence[int]
) -> float:
    """Fraction of samples whose prediction set misses the true label."""
    if len(sets) == 0:
        raise ValidationError("need at least one prediction set")
    if len(sets) != len(labels):
        raise ValidationError(
            f"{len(sets)} sets but {len(labels)} labels"
        )
    misses = sum(1 for ps, y in zip(sets, labels) if y not in ps)
    return misses / len(sets)


def mean_set_size(sets: Sequence[PredictionSet]) -> float:
    """Arithmetic mean of the emitted set sizes."""
    if len(sets) == 0:
        raise ValidationError("need at least one prediction set")
    return sum(ps.size for ps in sets) / len(sets)


def _histogram(sizes: np.ndarray, k: int) -> tuple[int, ...]:
    return tuple(int(c) for c in np.bincount(sizes, minlength=k + 1)[1:])


def run_experiment(
    cali: Dataset,
    test: Dataset,
    method: str,
    alpha: float,
    bootstrap_rounds: int = 1000,
    seed: int = 0,
    early_stop: bool = False,
) -> EvaluationReport:
    """Calibrate one method on ``cali`` and score it on ``test``."""
    if cali.n_classes != test.n_classes:
        raise ValidationError(
            f"calibration has {cali.n_classes} classes, test has {test.n_classes}"
        )
    if method not in METHODS:
        raise ValidationError(f"unknown method {method!r}")
    probs = test.prob_matrix()
    labels = test.label_array()
    if method == "classic":
        model = baselines.calibrate_classic(cali, alpha)
        covered, sizes, fallbacks = baselines.predict_classic_batch_outcomes(
            probs, labels, model
        )
    elif method == "aps":
        model = baselines.calibrate_aps(cali, alpha)
        covered, sizes, fallbacks = baselines.predict_aps_batch_outcomes(
            probs, labels, model
        )
    else:
        model = reliability.estimate_thresholds(
            cali, alpha, bootstrap_rounds=bootstrap_rounds, seed=seed,
            early_stop=early_stop,
        )
        covered, sizes, fallbacks = rrcp_batch_outcomes(probs, labels, model)
    return EvaluationReport(
        method=method,
        alpha=alpha,
        aer=float(1.0 - covered.mean()),
        pss=float(sizes.mean()),
        size_histogram=_histogram(sizes, test.n_classes),
        fallback_count=int(fallbacks),
        n_test=len(test),
    )


def rrcp_batch_outcomes(
    probs: np.ndarray, labels: np.ndarray, model: reliability.RrcpModel
) -> tuple[np.ndarray, np.ndarray, int]:
    """(covered, sizes, fallback count) of reliable-region sets on a matrix."""
    sizes, fallback = reliability.rrcp_predict_batch(probs, model)
    perm, _ = sort_matrix(probs)
    ranks = label_ranks(perm, labels)
    return ranks <= sizes, sizes, int(fallback.sum())


@dataclass(frozen=True)
class CoverageSummary:
    """Empirical coverage of repeated fresh calibrate/test draws vs. bounds.

    The lower bound is asserted by callers (minus the per-trial binomial
    slack at 99%); the upper bound is advisory: for the reliable-region
    method it reflects a best-case argument, not a per-run guarantee.
    """

    method: str
    alpha: float
    trials: int
    n_cali: int
    n_test: int
    per_trial_coverage: tuple[float, ...]
    lower_bound: float
    upper_bound: float
    per_trial_slack: float
    reports: tuple[EvaluationReport, ...]

    @property
    def mean_coverage(self) -> float:
        return float(np.mean(self.per_trial_coverage))

    @property
    def violations(self) -> int:
        """Trials whose coverage fell below the slack-adjusted lower bound."""
        floor = self.lower_bound - self.per_trial_slack
        return int(sum(c < floor for c in self.per_trial_coverage))

    @property
    def mean_pss(self) -> float:
        return float(np.mean([r.pss for r in self.reports]))

    @property
    def mean_aer(self) -> float:
        return float(np.mean([r.aer for r in self.reports]))

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "alpha": self.alpha,
            "trials": self.trials,
            "n_cali": self.n_cali,
            "n_test": self.n_test,
            "mean_coverage": self.mean_coverage,
            "lower_bound": self.lower_bound,
            "upper_bound": self.upper_bound,
            "per_trial_slack": self.per_trial_slack,
            "violations": self.violations,
            "per_trial_coverage": list(self.per_trial_coverage),
        }


def trial_datasets(
    spec: SyntheticSpec, n_test: int, trial: int
) -> tuple[Dataset, Dataset, int]:
    """Fresh calibration/test draws plus a model seed for one trial.

    Streams depend only on (spec.seed, trial), never on the method, so
    different methods evaluated on the same spec see identical data.
    """
    cali_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=spec.seed, spawn_key=(trial, 0))
    )
    test_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=spec.seed, spawn_key=(trial, 1))
    )
    cali = generate_synthetic(spec, rng=cali_rng)
    test = generate_synthetic(replace(spec, n_samples=n_test), rng=test_rng)
    model_seed = int(
        np.random.SeedSequence(entropy=spec.seed, spawn_key=(trial, 2))
        .generate_state(1, np.uint64)[0]
    )
    return cali, test, model_seed


def _coverage_trial(
    spec: SyntheticSpec,
    n_test: int,
    method: str,
    alpha: float,
    bootstrap_rounds: int,
    early_stop: bool,
    trial: int,
) -> EvaluationReport:
    cali, test, model_seed = trial_datasets(spec, n_test, trial)
    return run_experiment(
        cali, test, method, alpha,
        bootstrap_rounds=bootstrap_rounds, seed=model_seed, early_stop=early_stop,
    )


def coverage_bound_check(
    trials: int,
    spec: SyntheticSpec,
    method: str,
    alpha: float,
    n_test: Optional[int] = None,
    bootstrap_rounds: int = 1000,
    early_stop: bool = False,
    n_jobs: int = 1,
) -> CoverageSummary:
    """Run repeated fresh-draw trials and summarize coverage against bounds.

    Each trial owns its seeded generator streams, so trials may run in
    parallel (``n_jobs``) without affecting the result.
    """
    if trials < 1:
        raise ValidationError("need at least one trial")
    if method not in METHODS:
        raise ValidationError(f"unknown method {method!r}")
    if n_test is None:
        n_test = spec.n_samples
    reports = Parallel(n_jobs=n_jobs)(
        delayed(_coverage_trial)(
            spec, n_test, method, alpha, bootstrap_rounds, early_stop, t
        )
        for t in range(trials)
    )
    if method == "rrcp":
        upper = 1.0 - alpha / spec.n_samples
    else:
        upper = 1.0 - alpha + 1.0 / (spec.n_samples + 1)
    return CoverageSummary(
        method=method,
        alpha=alpha,
        trials=trials,
        n_cali=spec.n_samples,
        n_test=n_test,
        per_trial_coverage=tuple(r.coverage for r in reports),
        lower_bound=1.0 - alpha,
        upper_bound=upper,
        per_trial_slack=SLACK_Z * np.sqrt(alpha * (1.0 - alpha) / n_test),
        reports=tuple(reports),
    )
