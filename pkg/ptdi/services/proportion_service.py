from __future__ import annotations

import logging
import math
from typing import Optional

import numpy as np

from ptdi.errors import EstimatorError
from ptdi.models import NO_ESTIMATE, ProportionEstimate, SamplePool
from ptdi.schemas import EstimatorKind, EstimatorSpec

logger = logging.getLogger(__name__)


# ----------------------------------------------------
# SUBTRACTION ESTIMATOR
# ----------------------------------------------------
def subtraction_from_scores(cal_scores: np.ndarray, test_scores: np.ndarray, eta: float) -> ProportionEstimate:
    """
    Lower-bound estimate of the member share from the non-member tail (tau, +inf).
    tau is the calibration order statistic with floor(eta*n) scores above it.
    """
    if not 0.0 < eta < 1.0:
        raise EstimatorError(f"eta must lie in (0, 1), got {eta}")
    cal_sorted = np.sort(np.asarray(cal_scores, dtype=np.float64))
    test_scores = np.asarray(test_scores, dtype=np.float64)
    n, m = cal_sorted.size, test_scores.size
    if n == 0 or m == 0:
        raise EstimatorError("subtraction estimator needs non-empty calibration and test sets")

    c = math.floor(eta * n)
    if c < 1:
        raise EstimatorError(
            f"region empty: floor(eta*n) = 0 for eta={eta}, n={n}; increase eta or the calibration size"
        )
    tau = float(cal_sorted[n - c - 1])
    # ties at tau can leave fewer than c calibration scores strictly above it
    cal_in_region = n - int(np.searchsorted(cal_sorted, tau, side="right"))
    test_in_region = int(np.count_nonzero(test_scores > tau))
    if cal_in_region == 0:
        logger.warning("No calibration score exceeds tau=%s (all tied); falling back to pi_hat=0", tau)
        return ProportionEstimate(
            kind=EstimatorKind.SUBTRACTION,
            pi_hat=0.0,
            eta=eta,
            fallback_used=True,
            diagnostics={
                "tau": tau,
                "calibration_fraction": 0.0,
                "calibration_in_region": 0.0,
                "test_in_region": float(test_in_region),
            },
        )

    realized_fraction = cal_in_region / n
    pi_hat = 1.0 - ((1.0 + test_in_region) / (m + 1.0)) / realized_fraction
    return ProportionEstimate(
        kind=EstimatorKind.SUBTRACTION,
        pi_hat=pi_hat,
        eta=eta,
        diagnostics={
            "tau": tau,
            "calibration_fraction": realized_fraction,
            "calibration_in_region": float(cal_in_region),
            "test_in_region": float(test_in_region),
        },
    )


def subtraction_estimate(cal: SamplePool, test: SamplePool, eta: float) -> ProportionEstimate:
    estimate = subtraction_from_scores(cal.scores, test.scores, eta)
    logger.debug("Subtraction estimate pi_hat=%.6f (%s)", estimate.pi_hat, dict(estimate.diagnostics))
    return estimate


# ----------------------------------------------------
# ADJUSTED MOMENT ESTIMATOR
# ----------------------------------------------------
def raw_moment(mu0: float, mu1: float, mu_test: float, gap_tol: float = 1e-8) -> float:
    """Non-member share (mu1 - mu_test) / (mu1 - mu0)."""
    gap = mu1 - mu0
    if not abs(gap) > gap_tol * max(1.0, abs(mu0), abs(mu1)):
        raise EstimatorError(
            f"member and non-member mean scores are too close ({mu1} vs {mu0}); the score is uninformative"
        )
    return (mu1 - mu_test) / gap


def delta_variance(
    pi0_raw: float,
    mu0: float,
    mu1: float,
    s0sq: float,
    s1sq: float,
    stestsq: float,
    n0: int,
    n1: int,
    m: int,
) -> float:
    """Delta-method variance of the raw non-member share."""
    if min(n0, n1, m) < 2:
        raise EstimatorError("variance estimate needs at least 2 samples per set")
    gap = mu1 - mu0
    if gap == 0.0:
        raise EstimatorError("variance estimate undefined for equal means")
    return (
        pi0_raw**2 * s0sq / n0
        + (1.0 - pi0_raw) ** 2 * s1sq / n1
        + stestsq / m
    ) / gap**2


def moment_from_scores(
    nonmember_scores: np.ndarray,
    member_scores: np.ndarray,
    test_scores: np.ndarray,
    gap_tol: float = 1e-8,
) -> ProportionEstimate:
    s0 = np.asarray(nonmember_scores, dtype=np.float64)
    s1 = np.asarray(member_scores, dtype=np.float64)
    st = np.asarray(test_scores, dtype=np.float64)
    if min(s0.size, s1.size, st.size) < 2:
        raise EstimatorError(
            f"pool too small for the moment estimator (sizes {s0.size}, {s1.size}, {st.size}; need 2 each)"
        )

    mu0, mu1, mu_test = float(s0.mean()), float(s1.mean()), float(st.mean())
    pi0_raw = raw_moment(mu0, mu1, mu_test, gap_tol)
    variance = delta_variance(
        pi0_raw,
        mu0,
        mu1,
        float(s0.var(ddof=1)),
        float(s1.var(ddof=1)),
        float(st.var(ddof=1)),
        s0.size,
        s1.size,
        st.size,
    )

    diagnostics = {"mu0": mu0, "mu1": mu1, "mu_test": mu_test, "pi0_raw": pi0_raw, "variance": variance}
    theta = math.nan
    if pi0_raw > 0.0:
        theta = 1.0 / pi0_raw - variance / pi0_raw**3
        diagnostics["theta"] = theta

    if not pi0_raw > 0.0 or not theta > 1.0:
        logger.warning(
            "Moment estimate degenerate (pi0_raw=%.6f, theta=%s); falling back to pi_hat=0", pi0_raw, theta
        )
        return ProportionEstimate(
            kind=EstimatorKind.ADJUSTED_MOMENT, pi_hat=0.0, diagnostics=diagnostics, fallback_used=True
        )

    return ProportionEstimate(
        kind=EstimatorKind.ADJUSTED_MOMENT, pi_hat=1.0 - 1.0 / theta, diagnostics=diagnostics
    )


def adjusted_moment_estimate(
    cal_nonmembers: SamplePool,
    cal_members: SamplePool,
    test: SamplePool,
    spec: EstimatorSpec,
) -> ProportionEstimate:
    estimate = moment_from_scores(
        cal_nonmembers.scores, cal_members.scores, test.scores, spec.mean_gap_tolerance
    )
    logger.debug("Adjusted moment estimate pi_hat=%.6f (%s)", estimate.pi_hat, dict(estimate.diagnostics))
    return estimate


# ----------------------------------------------------
# DISPATCH
# ----------------------------------------------------
def estimate_proportion(
    cal: SamplePool,
    test: SamplePool,
    spec: EstimatorSpec,
    cal_members: Optional[SamplePool] = None,
) -> ProportionEstimate:
    if spec.kind == EstimatorKind.NONE:
        return NO_ESTIMATE
    if spec.kind == EstimatorKind.SUBTRACTION:
        return subtraction_estimate(cal, test, spec.eta)
    if cal_members is None:
        raise EstimatorError("members file required: the adjusted moment estimator needs calibration members")
    return adjusted_moment_estimate(cal, cal_members, test, spec)
