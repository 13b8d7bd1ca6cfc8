from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterator, Mapping, Optional, Sequence

import numpy as np

from ptdi.errors import IngestionError
from ptdi.schemas import EstimatorKind, ScoredSample

UNLABELED = -1


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


# ----------------------------------------------------
# SAMPLE POOL
# ----------------------------------------------------
@dataclass(frozen=True, eq=False)
class SamplePool:
    """
    Ordered, immutable collection of scored samples.
    Scores and labels are kept as read-only numpy arrays; a missing label is -1.
    """

    ids: tuple[str, ...]
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        if len(self.ids) != len(self.scores) or len(self.ids) != len(self.labels):
            raise ValueError("ids, scores and labels must have equal length")

    @classmethod
    def from_samples(cls, samples: Sequence[ScoredSample]) -> "SamplePool":
        seen: set[str] = set()
        for sample in samples:
            if sample.id in seen:
                raise IngestionError(f"duplicate id {sample.id!r}")
            seen.add(sample.id)
        scores = np.array([s.score for s in samples], dtype=np.float64)
        labels = np.array(
            [UNLABELED if s.member is None else s.member for s in samples], dtype=np.int8
        )
        return cls._build(tuple(s.id for s in samples), scores, labels)

    @classmethod
    def from_arrays(
        cls,
        ids: Sequence[str],
        scores: np.ndarray,
        labels: Optional[np.ndarray] = None,
    ) -> "SamplePool":
        ids = tuple(ids)
        if len(set(ids)) != len(ids):
            raise IngestionError("duplicate id in pool")
        scores = np.asarray(scores, dtype=np.float64)
        if not np.all(np.isfinite(scores)):
            raise IngestionError("non-finite score in pool")
        if labels is None:
            labels = np.full(len(ids), UNLABELED, dtype=np.int8)
        return cls._build(ids, scores.copy(), np.asarray(labels, dtype=np.int8).copy())

    @classmethod
    def _build(cls, ids: tuple[str, ...], scores: np.ndarray, labels: np.ndarray) -> "SamplePool":
        return cls(ids=ids, scores=_readonly(scores), labels=_readonly(labels))

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self) -> Iterator[ScoredSample]:
        return iter(self.samples)

    @property
    def samples(self) -> list[ScoredSample]:
        return [
            ScoredSample(id=i, score=float(s), member=None if l == UNLABELED else int(l))
            for i, s, l in zip(self.ids, self.scores, self.labels)
        ]

    @property
    def fully_labeled(self) -> bool:
        return bool(np.all(self.labels != UNLABELED))

    @property
    def member_count(self) -> int:
        return int(np.count_nonzero(self.labels == 1))

    @property
    def nonmember_count(self) -> int:
        return int(np.count_nonzero(self.labels == 0))

    def take(self, indices: Sequence[int] | np.ndarray) -> "SamplePool":
        """Sub-pool in the order of indices; ids stay unique since indices are."""
        idx = np.asarray(indices, dtype=np.int64)
        return SamplePool._build(
            tuple(self.ids[i] for i in idx), self.scores[idx].copy(), self.labels[idx].copy()
        )

    def members_only(self) -> "SamplePool":
        return self.take(np.flatnonzero(self.labels == 1))

    def nonmembers_only(self) -> "SamplePool":
        return self.take(np.flatnonzero(self.labels == 0))

    def labels_by_index(self) -> Dict[int, int]:
        return {i: int(l) for i, l in enumerate(self.labels) if l != UNLABELED}

    def same_as(self, other: "SamplePool") -> bool:
        return (
            self.ids == other.ids
            and np.array_equal(self.scores, other.scores)
            and np.array_equal(self.labels, other.labels)
        )


# ----------------------------------------------------
# P-VALUES AND ESTIMATES
# ----------------------------------------------------
@dataclass(frozen=True, eq=False)
class PValueVector:
    values: np.ndarray
    n_cal: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _readonly(np.array(self.values, dtype=np.float64)))

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class ProportionEstimate:
    kind: EstimatorKind
    pi_hat: float
    diagnostics: Mapping[str, float] = field(default_factory=dict)
    fallback_used: bool = False
    eta: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.pi_hat < 1.0:
            raise ValueError(f"pi_hat must be < 1, got {self.pi_hat}")

    @property
    def scale_factor(self) -> float:
        return 1.0 - self.pi_hat


NO_ESTIMATE = ProportionEstimate(kind=EstimatorKind.NONE, pi_hat=0.0)


@dataclass(frozen=True, eq=False)
class SelectionResult:
    selected: tuple[int, ...]
    k_star: int
    threshold: float
    alpha: float
    estimate: ProportionEstimate
    p_values: PValueVector
    p_scaled: PValueVector

    @property
    def selected_count(self) -> int:
        return len(self.selected)


# ----------------------------------------------------
# EVALUATION
# ----------------------------------------------------
@dataclass(frozen=True)
class TrialReport:
    fdp: float
    power: float
    selected_count: int
    pi_hat: float
    seed: int


@dataclass(frozen=True)
class EvalSummary:
    alpha: float
    fdr: float
    fdr_sd: float
    power_mean: float
    power_sd: float
    mean_selected: float
    trials: int
    estimator: EstimatorKind
    pi_test: Optional[float] = None
    rho: Optional[float] = None
    eta: Optional[float] = None

    @property
    def fdr_se(self) -> float:
        return self.fdr_sd / float(np.sqrt(self.trials))

    @property
    def power_se(self) -> float:
        return self.power_sd / float(np.sqrt(self.trials))


@dataclass(frozen=True)
class BiasRow:
    pi_test: float
    estimator: EstimatorKind
    trials: int
    bias: float
    mse: float
    bias_se: float
