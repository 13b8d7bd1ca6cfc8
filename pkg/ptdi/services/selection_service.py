from __future__ import annotations

import logging
from typing import List, Optional, Tuple

import numpy as np

from ptdi.errors import EstimatorError, PTDIError, SelectionError
from ptdi.models import NO_ESTIMATE, PValueVector, ProportionEstimate, SamplePool, SelectionResult
from ptdi.schemas import (
    BaselinePrediction,
    BaselineReport,
    EstimatorKind,
    EstimatorSpec,
    PValueEntry,
    SelectionReport,
)
from ptdi.services.conformal_service import conformal_pvalues, scale_pvalues
from ptdi.services.proportion_service import estimate_proportion

logger = logging.getLogger(__name__)


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise SelectionError(f"alpha must lie in (0, 1), got {alpha}")


def bh_threshold(p_scaled: np.ndarray, alpha: float) -> Tuple[int, float]:
    """
    Step-up search for k* = max{k : p_(k) <= k*alpha/m}.
    Returns (k*, k*·alpha/m), or (0, 0.0) when no k qualifies.
    """
    m = p_scaled.size
    ordered = np.sort(p_scaled)
    ladder = alpha * np.arange(1, m + 1) / m
    passing = np.flatnonzero(ordered <= ladder)
    if passing.size == 0:
        return 0, 0.0
    k_star = int(passing[-1]) + 1
    return k_star, k_star * alpha / m


def bh_select(
    p_scaled: PValueVector,
    alpha: float,
    m: Optional[int] = None,
    estimate: Optional[ProportionEstimate] = None,
    p_values: Optional[PValueVector] = None,
) -> SelectionResult:
    """Benjamini-Hochberg on (scaled) p-values; every index at or below the threshold is selected."""
    _check_alpha(alpha)
    values = p_scaled.values
    m = len(values) if m is None else m
    if m != len(values):
        raise SelectionError(f"m={m} does not match {len(values)} p-values")
    if m == 0:
        raise SelectionError("no p-values to select from")
    if not np.all(values > 0.0):
        raise SelectionError("p-values must be positive")

    k_star, threshold = bh_threshold(values, alpha)
    selected: Tuple[int, ...] = ()
    if k_star > 0:
        selected = tuple(int(j) for j in np.flatnonzero(values <= threshold))

    return SelectionResult(
        selected=selected,
        k_star=k_star,
        threshold=threshold,
        alpha=alpha,
        estimate=estimate or NO_ESTIMATE,
        p_values=p_values if p_values is not None else p_scaled,
        p_scaled=p_scaled,
    )


def ptdi_identify(
    cal: SamplePool,
    test: SamplePool,
    alpha: float,
    spec: EstimatorSpec,
    cal_members: Optional[SamplePool] = None,
) -> SelectionResult:
    """Conformal p-values, proportion estimate, scaling, then BH selection."""
    _check_alpha(alpha)
    if spec.kind == EstimatorKind.ADJUSTED_MOMENT and cal_members is None:
        raise EstimatorError("members file required: the adjusted moment estimator needs calibration members")

    p_values = conformal_pvalues(cal, test)
    try:
        estimate = estimate_proportion(cal, test, spec, cal_members)
    except PTDIError as exc:
        raise EstimatorError(f"identification failed while estimating the data usage proportion: {exc}") from exc

    p_scaled = scale_pvalues(p_values, estimate.pi_hat)
    result = bh_select(p_scaled, alpha, len(test), estimate=estimate, p_values=p_values)
    logger.debug(
        "Identified %d of %d (k*=%d, pi_hat=%.4f, alpha=%s)",
        result.selected_count,
        len(test),
        result.k_star,
        estimate.pi_hat,
        alpha,
    )
    return result


def threshold_classify(scores: SamplePool, tau: float) -> List[int]:
    """Level-set baseline 1{T <= tau}; no error control."""
    return [int(v) for v in (scores.scores <= tau)]


# ----------------------------------------------------
# SERIALIZATION
# ----------------------------------------------------
def to_report(result: SelectionResult, test: SamplePool) -> SelectionReport:
    estimate = result.estimate
    return SelectionReport(
        alpha=result.alpha,
        k_star=result.k_star,
        threshold=result.threshold,
        pi_hat=estimate.pi_hat,
        scale_factor=estimate.scale_factor,
        fallback_used=estimate.fallback_used,
        estimator=estimate.kind,
        eta=estimate.eta,
        diagnostics=dict(estimate.diagnostics),
        selected=[test.ids[j] for j in result.selected],
        p_values=[
            PValueEntry(id=sample_id, p=float(p), p_scaled=float(ps))
            for sample_id, p, ps in zip(test.ids, result.p_values.values, result.p_scaled.values)
        ],
    )


def baseline_report(pool: SamplePool, tau: float) -> BaselineReport:
    predictions = threshold_classify(pool, tau)
    return BaselineReport(
        tau=tau,
        predictions=[BaselinePrediction(id=i, member_pred=p) for i, p in zip(pool.ids, predictions)],
    )
