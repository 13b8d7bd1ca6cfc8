from __future__ import annotations

import logging

import numpy as np

from ptdi.errors import EstimatorError, SelectionError
from ptdi.models import PValueVector, SamplePool

logger = logging.getLogger(__name__)


def conformal_pvalues_from_scores(cal_scores: np.ndarray, test_scores: np.ndarray) -> np.ndarray:
    """
    p_j = (1 + #{i : T_i <= T_j}) / (n + 1), ties counted inclusively.
    One sort of the calibration scores, then a binary search per test score.
    """
    cal_sorted = np.sort(np.asarray(cal_scores, dtype=np.float64))
    n = cal_sorted.size
    if n == 0:
        raise SelectionError("empty calibration set")
    at_or_below = np.searchsorted(cal_sorted, np.asarray(test_scores, dtype=np.float64), side="right")
    return (1.0 + at_or_below) / (n + 1.0)


def conformal_pvalues(cal: SamplePool, test: SamplePool) -> PValueVector:
    values = conformal_pvalues_from_scores(cal.scores, test.scores)
    logger.debug("Computed %d conformal p-values against %d calibration scores", len(values), len(cal))
    return PValueVector(values=values, n_cal=len(cal))


def scale_pvalues(p: PValueVector, pi_hat: float) -> PValueVector:
    """(1 - pi_hat) * p; left unclipped, so a negative pi_hat can push values above 1."""
    if not pi_hat < 1.0:
        raise EstimatorError(f"pi_hat must be < 1 to scale p-values, got {pi_hat}")
    return PValueVector(values=(1.0 - pi_hat) * p.values, n_cal=p.n_cal)
