from __future__ import annotations

import csv
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache, partial
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, TypeVar

import numpy as np
from pydantic import BaseModel

from ptdi.errors import EvaluationError, PlotDataError, PTDIError
from ptdi.models import BiasRow, EvalSummary, ProportionEstimate, SamplePool, SelectionResult, TrialReport
from ptdi.schemas import EstimatorKind, EstimatorSpec, ScoreDistribution, SplitSpec, SynthSpec
from ptdi.services.ingest_service import split_pool, split_pool_with_members
from ptdi.services.proportion_service import estimate_proportion, subtraction_from_scores
from ptdi.services.selection_service import ptdi_identify
from ptdi.utils import atomic_output, derive_rng, derive_seed

logger = logging.getLogger(__name__)

SUMMARY_HEADER = (
    "alpha",
    "pi_test",
    "rho",
    "eta",
    "estimator",
    "trials",
    "fdr",
    "fdr_sd",
    "power",
    "power_sd",
    "mean_selected",
)
BIAS_HEADER = ("pi_test", "estimator", "trials", "bias", "mse", "bias_se")

T = TypeVar("T")
M = TypeVar("M", bound=BaseModel)


# ----------------------------------------------------
# REALIZED METRICS
# ----------------------------------------------------
def fdp(result: SelectionResult, labels: Mapping[int, int]) -> float:
    """False selections over max(|S|, 1)."""
    missing = [j for j in result.selected if j not in labels]
    if missing:
        raise EvaluationError(f"missing label for selected index {missing[0]}")
    false = sum(1 for j in result.selected if labels[j] == 0)
    return false / max(len(result.selected), 1)


def realized_power(result: SelectionResult, labels: Mapping[int, int]) -> float:
    """Selected members over max(1, members in the test pool)."""
    m = len(result.p_scaled)
    missing = [j for j in range(m) if j not in labels]
    if missing:
        raise EvaluationError(f"labels incomplete: no label for test index {missing[0]}")
    members = sum(1 for j in range(m) if labels[j] == 1)
    found = sum(1 for j in result.selected if labels[j] == 1)
    return found / max(1, members)


def _trial_report(result: SelectionResult, test: SamplePool, seed: int) -> TrialReport:
    labels = test.labels_by_index()
    return TrialReport(
        fdp=fdp(result, labels),
        power=realized_power(result, labels),
        selected_count=len(result.selected),
        pi_hat=result.estimate.pi_hat,
        seed=seed,
    )


# ----------------------------------------------------
# TRIAL EXECUTION
# ----------------------------------------------------
def _map_trials(task: Callable[[int], T], trials: int, workers: int) -> List[T]:
    """Run task(t) for every trial index; results come back in index order."""
    if workers <= 1 or trials <= 1:
        return [task(t) for t in range(trials)]
    chunksize = max(1, trials // (workers * 4))
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(task, range(trials), chunksize=chunksize))


def _split_for_trial(pool: SamplePool, spec: EstimatorSpec, split: SplitSpec):
    if spec.kind == EstimatorKind.ADJUSTED_MOMENT:
        cal, cal_members, test = split_pool_with_members(pool, split)
        return cal, cal_members, test
    cal, test = split_pool(pool, split)
    return cal, None, test


def _split_trial(pool: SamplePool, alpha: float, spec: EstimatorSpec, split: SplitSpec, trial: int) -> TrialReport:
    seed = derive_seed(split.seed, trial)
    try:
        cal, cal_members, test = _split_for_trial(pool, spec, split.model_copy(update={"seed": seed}))
        result = ptdi_identify(cal, test, alpha, spec, cal_members)
    except PTDIError as exc:
        raise EvaluationError(str(exc), trial=trial) from exc
    return _trial_report(result, test, seed)


def summarize(
    reports: Sequence[TrialReport],
    alpha: float,
    spec: EstimatorSpec,
    pi_test: Optional[float] = None,
    rho: Optional[float] = None,
) -> EvalSummary:
    """Aggregate in trial-index order; sds use the n-1 denominator."""
    fdps = np.array([r.fdp for r in reports], dtype=np.float64)
    powers = np.array([r.power for r in reports], dtype=np.float64)
    sizes = np.array([r.selected_count for r in reports], dtype=np.float64)
    ddof = 1 if len(reports) > 1 else 0
    return EvalSummary(
        alpha=alpha,
        fdr=float(fdps.mean()),
        fdr_sd=float(fdps.std(ddof=ddof)),
        power_mean=float(powers.mean()),
        power_sd=float(powers.std(ddof=ddof)),
        mean_selected=float(sizes.mean()),
        trials=len(reports),
        estimator=spec.kind,
        pi_test=pi_test,
        rho=rho,
        eta=spec.eta if spec.kind == EstimatorKind.SUBTRACTION else None,
    )


def run_trial_reports(
    pool: SamplePool,
    alpha: float,
    spec: EstimatorSpec,
    split: SplitSpec,
    trials: int,
    workers: int = 1,
) -> List[TrialReport]:
    if not pool.fully_labeled:
        raise EvaluationError("evaluation requires labels on every sample")
    if trials < 1:
        raise EvaluationError(f"trials must be positive, got {trials}")
    task = partial(_split_trial, pool, alpha, spec, split)
    return _map_trials(task, trials, workers)


def run_trials(
    pool: SamplePool,
    alpha: float,
    spec: EstimatorSpec,
    split: SplitSpec,
    trials: int,
    workers: int = 1,
) -> EvalSummary:
    """Repeat split + identification; trial t is seeded from (split.seed, t)."""
    reports = run_trial_reports(pool, alpha, spec, split, trials, workers)
    return summarize(reports, alpha, spec, split.pi_test, split.rho)


def _with(model: M, **changes: object) -> M:
    """Copy of a spec with changes applied and validated."""
    return type(model).model_validate({**model.model_dump(), **changes})


def _axis(values: Optional[Sequence[T]], default: T) -> List[T]:
    return list(values) if values else [default]


def _check_axes(alphas: Sequence[float], etas: Optional[Sequence[float]], spec: EstimatorSpec) -> None:
    if not alphas:
        raise EvaluationError("at least one alpha is required")
    if etas and spec.kind != EstimatorKind.SUBTRACTION:
        raise EvaluationError("eta axis requires subtraction estimator")


def sweep(
    pool: SamplePool,
    alphas: Sequence[float],
    spec: EstimatorSpec,
    split: SplitSpec,
    trials: int,
    pi_tests: Optional[Sequence[float]] = None,
    rhos: Optional[Sequence[float]] = None,
    etas: Optional[Sequence[float]] = None,
    workers: int = 1,
) -> List[EvalSummary]:
    """One summary per cell of alphas x pi_tests x rhos x etas, in that nesting order."""
    _check_axes(alphas, etas, spec)
    rows = []
    cells = itertools.product(alphas, _axis(pi_tests, split.pi_test), _axis(rhos, split.rho), _axis(etas, spec.eta))
    for alpha, pi_test, rho, eta in cells:
        cell_spec = _with(spec, eta=eta)
        cell_split = _with(split, pi_test=pi_test, rho=rho)
        logger.info("Cell alpha=%s pi_test=%s rho=%s eta=%s (%d trials)", alpha, pi_test, rho, eta, trials)
        rows.append(run_trials(pool, alpha, cell_spec, cell_split, trials, workers))
    return rows


# ----------------------------------------------------
# ESTIMATOR BIAS / MSE
# ----------------------------------------------------
def summarize_bias(pi_hats: Sequence[float], pi_test: float, kind: EstimatorKind) -> BiasRow:
    errors = np.asarray(pi_hats, dtype=np.float64) - pi_test
    ddof = 1 if errors.size > 1 else 0
    return BiasRow(
        pi_test=pi_test,
        estimator=kind,
        trials=int(errors.size),
        bias=float(errors.mean()),
        mse=float(np.mean(errors**2)),
        bias_se=float(errors.std(ddof=ddof) / math.sqrt(errors.size)),
    )


def _estimate_trial(pool: SamplePool, spec: EstimatorSpec, split: SplitSpec, trial: int) -> float:
    seed = derive_seed(split.seed, trial)
    try:
        cal, cal_members, test = _split_for_trial(pool, spec, split.model_copy(update={"seed": seed}))
        return estimate_proportion(cal, test, spec, cal_members).pi_hat
    except PTDIError as exc:
        raise EvaluationError(str(exc), trial=trial) from exc


def estimator_bias_mse(
    pool: SamplePool,
    spec: EstimatorSpec,
    split: SplitSpec,
    pi_tests: Sequence[float],
    trials: int,
    workers: int = 1,
) -> List[BiasRow]:
    if spec.kind == EstimatorKind.NONE:
        raise EvaluationError("bias/MSE needs an estimator other than none")
    if not pool.fully_labeled:
        raise EvaluationError("evaluation requires labels on every sample")
    rows = []
    for pi_test in pi_tests:
        cell_split = _with(split, pi_test=pi_test)
        logger.info("Estimator %s bias at pi_test=%s (%d trials)", spec.kind.value, pi_test, trials)
        pi_hats = _map_trials(partial(_estimate_trial, pool, spec, cell_split), trials, workers)
        rows.append(summarize_bias(pi_hats, pi_test, spec.kind))
    return rows


# ----------------------------------------------------
# SYNTHETIC SCORES
# ----------------------------------------------------
def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def _draw(rng: np.random.Generator, mean: float, sd: float, size: int, distribution: ScoreDistribution) -> np.ndarray:
    values = rng.normal(mean, sd, size)
    if distribution == ScoreDistribution.LOGNORMAL:
        return np.exp(values)
    return values


def draw_members(rng: np.random.Generator, synth: SynthSpec, size: int) -> np.ndarray:
    return _draw(rng, synth.member_mean, synth.member_sd, size, synth.distribution)


def draw_nonmembers(rng: np.random.Generator, synth: SynthSpec, size: int) -> np.ndarray:
    return _draw(rng, synth.nonmember_mean, synth.nonmember_sd, size, synth.distribution)


@lru_cache(maxsize=16)
def _synthetic_ids(prefix: str, size: int) -> Tuple[str, ...]:
    return tuple(f"{prefix}{i:06d}" for i in range(size))


def synth_pool(spec: SynthSpec) -> SamplePool:
    """n calibration-grade non-members followed by a shuffled test population of m."""
    rng = derive_rng(spec.seed)
    k = _round_half_up(spec.m * spec.pi_test)
    cal_scores = draw_nonmembers(rng, spec, spec.n)
    member_scores = draw_members(rng, spec, k)
    test_nonmember_scores = draw_nonmembers(rng, spec, spec.m - k)

    test_scores = np.concatenate([member_scores, test_nonmember_scores])
    test_labels = np.concatenate([np.ones(k, dtype=np.int8), np.zeros(spec.m - k, dtype=np.int8)])
    order = rng.permutation(spec.m)

    scores = np.concatenate([cal_scores, test_scores[order]])
    labels = np.concatenate([np.zeros(spec.n, dtype=np.int8), test_labels[order]])
    return SamplePool.from_arrays(_synthetic_ids("s", spec.n + spec.m), scores, labels)


def _fresh_trial(synth: SynthSpec, alpha: float, spec: EstimatorSpec, trial: int) -> TrialReport:
    seed = derive_seed(synth.seed, trial)
    rng = derive_rng(synth.seed, trial)
    k = _round_half_up(synth.m * synth.pi_test)

    cal = SamplePool.from_arrays(_synthetic_ids("c", synth.n), draw_nonmembers(rng, synth, synth.n), np.zeros(synth.n))
    test_scores = np.concatenate([draw_members(rng, synth, k), draw_nonmembers(rng, synth, synth.m - k)])
    test_labels = np.concatenate([np.ones(k, dtype=np.int8), np.zeros(synth.m - k, dtype=np.int8)])
    test = SamplePool.from_arrays(_synthetic_ids("t", synth.m), test_scores, test_labels)

    cal_members = None
    if spec.kind == EstimatorKind.ADJUSTED_MOMENT:
        size = synth.member_calibration_size
        cal_members = SamplePool.from_arrays(_synthetic_ids("k", size), draw_members(rng, synth, size), np.ones(size))

    try:
        result = ptdi_identify(cal, test, alpha, spec, cal_members)
    except PTDIError as exc:
        raise EvaluationError(str(exc), trial=trial) from exc
    return _trial_report(result, test, seed)


def simulate_trials(
    synth: SynthSpec,
    alpha: float,
    spec: EstimatorSpec,
    trials: int,
    workers: int = 1,
) -> EvalSummary:
    """Fresh i.i.d. calibration and test draws per trial."""
    if trials < 1:
        raise EvaluationError(f"trials must be positive, got {trials}")
    reports = _map_trials(partial(_fresh_trial, synth, alpha, spec), trials, workers)
    return summarize(reports, alpha, spec, synth.pi_test, synth.n / synth.m)


def simulate_sweep(
    synth: SynthSpec,
    alphas: Sequence[float],
    spec: EstimatorSpec,
    trials: int,
    pi_tests: Optional[Sequence[float]] = None,
    rhos: Optional[Sequence[float]] = None,
    etas: Optional[Sequence[float]] = None,
    workers: int = 1,
) -> List[EvalSummary]:
    """Sweep on fresh draws; a rho cell sets the calibration size to round(rho * m)."""
    _check_axes(alphas, etas, spec)
    rows = []
    cells = itertools.product(alphas, _axis(pi_tests, synth.pi_test), _axis(rhos, None), _axis(etas, spec.eta))
    for alpha, pi_test, rho, eta in cells:
        update: Dict[str, object] = {"pi_test": pi_test}
        if rho is not None:
            update["n"] = max(1, _round_half_up(rho * synth.m))
        cell_synth = _with(synth, **update)
        cell_spec = _with(spec, eta=eta)
        logger.info("Simulated cell alpha=%s pi_test=%s rho=%s eta=%s (%d trials)", alpha, pi_test, rho, eta, trials)
        rows.append(simulate_trials(cell_synth, alpha, cell_spec, trials, workers))
    return rows


def _ratio_trial(synth: SynthSpec, eta: float, trial: int) -> float:
    rng = derive_rng(synth.seed, trial)
    k = _round_half_up(synth.m * synth.pi_test)
    cal_scores = draw_nonmembers(rng, synth, synth.n)
    test_scores = np.concatenate([draw_members(rng, synth, k), draw_nonmembers(rng, synth, synth.m - k)])
    try:
        estimate: ProportionEstimate = subtraction_from_scores(cal_scores, test_scores, eta)
    except PTDIError as exc:
        raise EvaluationError(str(exc), trial=trial) from exc
    return (1.0 - k / synth.m) / estimate.scale_factor


def estimator_ratio_check(synth: SynthSpec, eta: float, trials: int, workers: int = 1) -> Dict[str, float]:
    """Monte Carlo mean and standard error of (1 - pi_test) / (1 - pi_sub)."""
    ratios = np.array(_map_trials(partial(_ratio_trial, synth, eta), trials, workers))
    ddof = 1 if ratios.size > 1 else 0
    return {
        "ratio_mean": float(ratios.mean()),
        "ratio_se": float(ratios.std(ddof=ddof) / math.sqrt(ratios.size)),
        "trials": float(ratios.size),
    }


# ----------------------------------------------------
# CSV TABLES
# ----------------------------------------------------
def _cell(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, EstimatorKind):
        return value.value
    if isinstance(value, float):
        return repr(value)
    return str(value)


def summary_row(summary: EvalSummary) -> List[str]:
    return [
        _cell(float(summary.alpha)),
        _cell(None if summary.pi_test is None else float(summary.pi_test)),
        _cell(None if summary.rho is None else float(summary.rho)),
        _cell(None if summary.eta is None else float(summary.eta)),
        _cell(summary.estimator),
        _cell(summary.trials),
        _cell(summary.fdr),
        _cell(summary.fdr_sd),
        _cell(summary.power_mean),
        _cell(summary.power_sd),
        _cell(summary.mean_selected),
    ]


def write_summaries_csv(rows: Iterable[EvalSummary], path: str | Path) -> None:
    with atomic_output(path) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(SUMMARY_HEADER)
        for summary in rows:
            writer.writerow(summary_row(summary))


def _optional_float(text: str) -> Optional[float]:
    return float(text) if text.strip() else None


def read_summaries_csv(path: str | Path) -> List[EvalSummary]:
    """Read an evaluation table; unknown columns are ignored."""
    try:
        handle = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise PlotDataError(f"cannot open {path}: {exc.strerror}") from exc

    with handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        missing = [column for column in SUMMARY_HEADER if column not in header]
        if missing:
            raise PlotDataError(f"header mismatch in {path}: missing column(s) {', '.join(missing)}")
        rows = []
        for line_no, record in enumerate(reader, start=2):
            try:
                rows.append(
                    EvalSummary(
                        alpha=float(record["alpha"]),
                        pi_test=_optional_float(record["pi_test"]),
                        rho=_optional_float(record["rho"]),
                        eta=_optional_float(record["eta"]),
                        estimator=EstimatorKind(record["estimator"]),
                        trials=int(record["trials"]),
                        fdr=float(record["fdr"]),
                        fdr_sd=float(record["fdr_sd"]),
                        power_mean=float(record["power"]),
                        power_sd=float(record["power_sd"]),
                        mean_selected=float(record["mean_selected"]),
                    )
                )
            except (TypeError, ValueError) as exc:
                raise PlotDataError(f"{path}:{line_no}: invalid row ({exc})") from exc
    if not rows:
        raise PlotDataError(f"no rows in {path}")
    return rows


def write_bias_csv(rows: Iterable[BiasRow], path: str | Path) -> None:
    with atomic_output(path) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(BIAS_HEADER)
        for row in rows:
            writer.writerow(
                [_cell(float(row.pi_test)), _cell(row.estimator), _cell(row.trials), _cell(row.bias), _cell(row.mse), _cell(row.bias_se)]
            )
