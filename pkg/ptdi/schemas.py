from __future__ import annotations

import math
from enum import Enum
from typing import Annotated, Dict, List, Literal, Optional

from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, StrictFloat, field_validator, model_validator

PROBABILITY_MASS_TOLERANCE = 1e-6
TAIL_INDEX = -1


# ----------------------------------------------------
# ENUMS
# ----------------------------------------------------
class EstimatorKind(str, Enum):
    NONE = "none"
    SUBTRACTION = "subtraction"
    ADJUSTED_MOMENT = "adjusted_moment"

    @classmethod
    def parse(cls, value: str) -> "EstimatorKind":
        # "moment" is the CLI spelling
        if value == "moment":
            return cls.ADJUSTED_MOMENT
        return cls(value)


class SubsampleMode(str, Enum):
    MAX_SIZE = "max_size"
    FIXED_SIZE = "fixed_size"


class ScoreDistribution(str, Enum):
    GAUSSIAN = "gaussian"
    LOGNORMAL = "lognormal"


# ----------------------------------------------------
# TOKEN RECORD SCHEMAS
# ----------------------------------------------------
class PositionDist(BaseModel):
    model_config = ConfigDict(frozen=True)

    probs: List[float]
    tail_mass: float = 0.0
    true_index: int

    @field_validator("probs")
    @classmethod
    def _probs_in_unit_interval(cls, probs: List[float]) -> List[float]:
        for p in probs:
            if not math.isfinite(p) or p < 0.0 or p > 1.0:
                raise ValueError(f"probability {p} outside [0, 1]")
        return probs

    @model_validator(mode="after")
    def _check_mass(self) -> "PositionDist":
        if not math.isfinite(self.tail_mass) or self.tail_mass < 0.0 or self.tail_mass > 1.0:
            raise ValueError(f"tail_mass {self.tail_mass} outside [0, 1]")
        total = math.fsum(self.probs) + self.tail_mass
        if abs(total - 1.0) > PROBABILITY_MASS_TOLERANCE:
            raise ValueError(f"probability mass {total:.9g} differs from 1")
        if self.true_index != TAIL_INDEX and not 0 <= self.true_index < len(self.probs):
            raise ValueError(f"true_index {self.true_index} out of range for {len(self.probs)} probabilities")
        return self

    @property
    def in_tail(self) -> bool:
        return self.true_index == TAIL_INDEX


class TokenRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    token_logprobs: List[float]
    text: Optional[str] = None
    positions: Optional[List[PositionDist]] = None

    @field_validator("token_logprobs")
    @classmethod
    def _logprobs_valid(cls, values: List[float]) -> List[float]:
        if not values:
            raise ValueError("token_logprobs must be non-empty")
        for value in values:
            if not math.isfinite(value):
                raise ValueError(f"log-probability {value} is not finite")
            if value > 0.0:
                raise ValueError(f"log-probability {value} > 0")
        return values

    @model_validator(mode="after")
    def _positions_aligned(self) -> "TokenRecord":
        if self.positions is not None and len(self.positions) != len(self.token_logprobs):
            raise ValueError(
                f"length mismatch: {len(self.token_logprobs)} log-probabilities "
                f"but {len(self.positions)} position distributions"
            )
        return self

    @property
    def length(self) -> int:
        return len(self.token_logprobs)


# ----------------------------------------------------
# SCORE SCHEMAS
# ----------------------------------------------------
def _exact_int(value: object) -> object:
    # lax matching would take true, 1.0 and "1" as 1
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValueError(f"member must be the integer 0 or 1, got {value!r}")
    return value


MemberLabel = Annotated[Literal[0, 1], BeforeValidator(_exact_int)]


class ScoredSample(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    score: StrictFloat
    member: Optional[MemberLabel] = None

    @field_validator("score")
    @classmethod
    def _score_finite(cls, score: float) -> float:
        if not math.isfinite(score):
            raise ValueError(f"score {score} is not finite")
        return score


class LabelRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    member: MemberLabel


# ----------------------------------------------------
# RUN SPECIFICATIONS
# ----------------------------------------------------
class SplitSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    seed: int = Field(ge=0, lt=2**64)
    pi_test: Optional[float] = Field(default=None, gt=0.0, lt=1.0)
    rho: Optional[float] = Field(default=1.0, gt=0.0)
    subsample_mode: SubsampleMode = SubsampleMode.FIXED_SIZE


class EstimatorSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: EstimatorKind = EstimatorKind.NONE
    eta: float = Field(default=0.05, gt=0.0, lt=1.0)
    mean_gap_tolerance: float = Field(default=1e-8, gt=0.0)


class SynthSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    member_mean: float = -1.0
    member_sd: float = Field(default=1.0, ge=0.0)
    nonmember_mean: float = 0.0
    nonmember_sd: float = Field(default=1.0, ge=0.0)
    n: int = Field(default=500, ge=1)
    m: int = Field(default=500, ge=1)
    pi_test: float = Field(default=0.5, gt=0.0, lt=1.0)
    seed: int = Field(default=0, ge=0, lt=2**64)
    distribution: ScoreDistribution = ScoreDistribution.GAUSSIAN
    n_members: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _orientation(self) -> "SynthSpec":
        # sd == 0 is the degenerate two-point case and stays allowed
        if not self.member_mean < self.nonmember_mean:
            raise ValueError("member_mean must be below nonmember_mean (lower score = member)")
        return self

    @property
    def member_calibration_size(self) -> int:
        return self.n_members if self.n_members is not None else self.n


# ----------------------------------------------------
# REPORT SCHEMAS
# ----------------------------------------------------
class PValueEntry(BaseModel):
    id: str
    p: float
    p_scaled: float


class SelectionReport(BaseModel):
    alpha: float
    k_star: int
    threshold: float
    pi_hat: float
    scale_factor: float
    fallback_used: bool
    estimator: EstimatorKind
    eta: Optional[float] = None
    diagnostics: Dict[str, float] = Field(default_factory=dict)
    selected: List[str]
    p_values: List[PValueEntry]


class EstimateReport(BaseModel):
    estimator: EstimatorKind
    pi_hat: float
    scale_factor: float
    fallback_used: bool
    eta: Optional[float] = None
    diagnostics: Dict[str, float] = Field(default_factory=dict)


class BaselinePrediction(BaseModel):
    id: str
    member_pred: Literal[0, 1]


class BaselineReport(BaseModel):
    tau: float
    statistical_guarantee: bool = False
    note: str = "level-set thresholding carries no statistical guarantee"
    predictions: List[BaselinePrediction]
