from __future__ import annotations

import logging
import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from ptdi.errors import ScoreError
from ptdi.models import SamplePool
from ptdi.schemas import PositionDist, ScoredSample, TokenRecord

logger = logging.getLogger(__name__)


def _logprobs(rec: TokenRecord) -> np.ndarray:
    values = np.asarray(rec.token_logprobs, dtype=np.float64)
    if values.size == 0:
        raise ScoreError("empty token sequence")
    return values


def _fraction_count(length: int, k_percent: float) -> float:
    # rounded so that e.g. 10 * 30 / 100 is not 3.0000000000000004
    return round(length * k_percent / 100.0, 9)


def _check_k(k_percent: float) -> None:
    if not 0.0 < k_percent <= 100.0:
        raise ScoreError(f"k must lie in (0, 100], got {k_percent}")


def _check_gamma(gamma: float) -> None:
    if not gamma > 0.0 or gamma == 1.0:
        raise ScoreError(f"gamma must be positive and different from 1, got {gamma}")


def _positions(rec: TokenRecord, score_name: str) -> List[PositionDist]:
    if not rec.positions:
        raise ScoreError(f"positions required for {score_name} score")
    return rec.positions


def _with_tail(dist: PositionDist) -> np.ndarray:
    """Probability vector with the truncated tail appended as one pseudo-token."""
    probs = np.asarray(dist.probs, dtype=np.float64)
    if dist.tail_mass > 0.0:
        probs = np.append(probs, dist.tail_mass)
    return probs


# ----------------------------------------------------
# LOG-PROBABILITY SCORES
# ----------------------------------------------------
def perplexity(rec: TokenRecord, length_normalize: bool = False) -> float:
    """
    exp(-sum log p); with length_normalize the sum becomes a mean.
    The unnormalized form overflows for long, unlikely sequences.
    """
    logprobs = _logprobs(rec)
    exponent = -float(np.sum(logprobs))
    if length_normalize:
        exponent /= logprobs.size
    try:
        return math.exp(exponent)
    except OverflowError as exc:
        raise ScoreError(
            "perplexity overflows; use length normalization or the loss score"
        ) from exc


def loss(rec: TokenRecord) -> float:
    """Mean negative log-likelihood, the log of the normalized perplexity."""
    return -float(np.mean(_logprobs(rec)))


def min_k(rec: TokenRecord, k_percent: float) -> float:
    _check_k(k_percent)
    logprobs = _logprobs(rec)
    count = max(1, math.floor(_fraction_count(logprobs.size, k_percent)))
    lowest = np.sort(logprobs)[:count]
    # negated so that members, whose weakest tokens are still likely, score lower
    return -float(np.mean(lowest))


def zlib_ratio(rec: TokenRecord) -> float:
    if not rec.text:
        raise ScoreError("text required for Zlib score")
    compressed = zlib.compress(rec.text.encode("utf-8"))
    if not compressed:
        raise ScoreError("zlib produced zero-length output")
    log_perplexity = -float(np.sum(_logprobs(rec)))
    return log_perplexity / (8 * len(compressed))


# ----------------------------------------------------
# DISTRIBUTION SCORES
# ----------------------------------------------------
def _modified_entropy(dist: PositionDist) -> float:
    probs = _with_tail(dist)
    y = len(dist.probs) if dist.in_tail else dist.true_index
    if dist.in_tail and dist.tail_mass <= 0.0:
        raise ScoreError("true token marked in the tail but tail_mass is 0")
    p_y = probs[y]
    if p_y <= 0.0:
        raise ScoreError("true token has probability 0; M-Entropy is infinite")
    others = np.delete(probs, y)
    with np.errstate(divide="ignore", invalid="ignore"):
        weighted = np.where(others > 0.0, others * np.log1p(-others), 0.0)
    value = -(1.0 - p_y) * math.log(p_y) - float(np.sum(weighted))
    if not math.isfinite(value):
        raise ScoreError("M-Entropy is not finite for this distribution")
    return value


def m_entropy(rec: TokenRecord) -> float:
    positions = _positions(rec, "M-Entropy")
    return float(np.mean([_modified_entropy(dist) for dist in positions]))


def renyi_per_position(rec: TokenRecord, gamma: float, standard_normalization: bool = False) -> np.ndarray:
    """
    Per-position Renyi values. Off: -log(sum p^gamma) as the score is usually printed;
    on: log(sum p^gamma) / (1 - gamma), the textbook entropy.
    """
    _check_gamma(gamma)
    positions = _positions(rec, "Renyi")
    sums = np.array([np.sum(np.power(_with_tail(dist), gamma)) for dist in positions])
    logs = np.log(sums)
    if standard_normalization:
        return logs / (1.0 - gamma)
    return -logs


def renyi_entropy(rec: TokenRecord, gamma: float, standard_normalization: bool = False) -> float:
    return float(np.mean(renyi_per_position(rec, gamma, standard_normalization)))


def max_renyi_k(
    rec: TokenRecord,
    k_percent: float,
    gamma: float,
    standard_normalization: bool = False,
) -> float:
    """Mean of the ceil(L*k/100) largest per-position Renyi values."""
    _check_k(k_percent)
    values = renyi_per_position(rec, gamma, standard_normalization)
    count = min(values.size, max(1, math.ceil(_fraction_count(values.size, k_percent))))
    if count == values.size:
        return float(np.mean(values))
    return float(np.mean(np.sort(values)[-count:]))


# ----------------------------------------------------
# SCORER SPECS
# ----------------------------------------------------
@dataclass(frozen=True)
class ScorerSpec:
    name: str
    k_percent: Optional[float] = None
    gamma: Optional[float] = None
    flag: bool = False

    def describe(self) -> str:
        if self.name == "perplexity":
            return "perplexity,norm" if self.flag else "perplexity"
        if self.name == "min_k":
            return f"min_k:{self.k_percent:g}"
        if self.name == "renyi":
            return f"renyi:{self.gamma:g}" + (",std" if self.flag else "")
        if self.name == "max_renyi":
            return f"max_renyi:{self.k_percent:g},{self.gamma:g}" + (",std" if self.flag else "")
        return self.name

    def __call__(self, rec: TokenRecord) -> float:
        return SCORERS[self.name](rec, self)


SCORERS: Dict[str, Callable[[TokenRecord, ScorerSpec], float]] = {
    "perplexity": lambda rec, spec: perplexity(rec, spec.flag),
    "loss": lambda rec, spec: loss(rec),
    "min_k": lambda rec, spec: min_k(rec, spec.k_percent),
    "zlib": lambda rec, spec: zlib_ratio(rec),
    "m_entropy": lambda rec, spec: m_entropy(rec),
    "renyi": lambda rec, spec: renyi_entropy(rec, spec.gamma, spec.flag),
    "max_renyi": lambda rec, spec: max_renyi_k(rec, spec.k_percent, spec.gamma, spec.flag),
}


def _number(text: str, what: str, scorer: str) -> float:
    try:
        value = float(text)
    except ValueError as exc:
        raise ScoreError(f"{scorer}: {what} must be a number, got {text!r}") from exc
    if not math.isfinite(value):
        raise ScoreError(f"{scorer}: {what} must be finite")
    return value


def parse_scorer(text: str) -> ScorerSpec:
    """Parse `name[:params][,flag]` scorer strings used on the command line."""
    name, _, params = text.strip().partition(":")
    parts = [p.strip() for p in params.split(",")] if params else []

    if name.startswith("perplexity"):
        # perplexity takes its flag without a colon
        head, _, flag = name.partition(",")
        if head != "perplexity" or flag not in ("", "norm") or parts:
            raise ScoreError(f"invalid scorer {text!r}; expected perplexity[,norm]")
        return ScorerSpec("perplexity", flag=flag == "norm")

    if name in ("zlib", "m_entropy", "loss"):
        if parts:
            raise ScoreError(f"scorer {name} takes no parameters")
        return ScorerSpec(name)

    if name == "min_k":
        if len(parts) != 1:
            raise ScoreError("min_k expects min_k:K")
        k = _number(parts[0], "K", name)
        _check_k(k)
        return ScorerSpec(name, k_percent=k)

    std = bool(parts) and parts[-1] == "std"
    if std:
        parts = parts[:-1]

    if name == "renyi":
        if len(parts) != 1:
            raise ScoreError("renyi expects renyi:GAMMA[,std]")
        gamma = _number(parts[0], "GAMMA", name)
        _check_gamma(gamma)
        return ScorerSpec(name, gamma=gamma, flag=std)

    if name == "max_renyi":
        if len(parts) != 2:
            raise ScoreError("max_renyi expects max_renyi:K,GAMMA[,std]")
        k = _number(parts[0], "K", name)
        gamma = _number(parts[1], "GAMMA", name)
        _check_k(k)
        _check_gamma(gamma)
        return ScorerSpec(name, k_percent=k, gamma=gamma, flag=std)

    raise ScoreError(f"unknown scorer {name!r}; choose from {', '.join(sorted(SCORERS))}")


# ----------------------------------------------------
# POOL SCORING
# ----------------------------------------------------
def _score_one(rec: TokenRecord, scorer: ScorerSpec) -> float:
    try:
        return scorer(rec)
    except ScoreError as exc:
        raise ScoreError(str(exc), record_id=rec.id) from exc


def score_pool(
    recs: Sequence[TokenRecord],
    scorer: ScorerSpec,
    labels: Optional[Mapping[str, int]] = None,
    workers: int = 1,
) -> SamplePool:
    """Score every record in order; the first failing record aborts with its id."""
    labels = labels or {}
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(lambda rec: _score_one(rec, scorer), recs))
    else:
        values = [_score_one(rec, scorer) for rec in recs]

    samples = []
    for rec, value in zip(recs, values):
        try:
            samples.append(ScoredSample(id=rec.id, score=value, member=labels.get(rec.id)))
        except ValidationError as exc:
            raise ScoreError(f"{scorer.describe()} score is not finite", record_id=rec.id) from exc

    logger.debug("Scored %d records with %s", len(samples), scorer.describe())
    return SamplePool.from_samples(samples)
