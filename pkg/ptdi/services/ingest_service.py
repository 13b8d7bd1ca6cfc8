from __future__ import annotations

import json
import logging
import math
from pathlib import Path
from typing import Dict, Iterator, List, Tuple, Type, TypeVar

import numpy as np
from pydantic import BaseModel, ValidationError

from ptdi.errors import IngestionError, SplitError
from ptdi.models import SamplePool
from ptdi.schemas import LabelRecord, ScoredSample, SplitSpec, SubsampleMode, TokenRecord
from ptdi.utils import atomic_output, derive_rng

logger = logging.getLogger(__name__)

RecordT = TypeVar("RecordT", bound=BaseModel)


# ----------------------------------------------------
# JSON-LINES READERS
# ----------------------------------------------------
def _first_error(exc: ValidationError) -> str:
    error = exc.errors()[0]
    location = ".".join(str(part) for part in error.get("loc", ()))
    message = error.get("msg", str(exc))
    if message.startswith("Value error, "):
        message = message[len("Value error, "):]
    return f"{location}: {message}" if location else message


def _iter_records(path: str | Path, schema: Type[RecordT]) -> Iterator[Tuple[int, RecordT]]:
    """Yield (line number, record) for every non-blank line of a JSON-lines file."""
    try:
        handle = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise IngestionError(f"cannot open file: {exc.strerror}", path=str(path)) from exc

    with handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestionError(f"malformed JSON: {exc.msg}", path=str(path), line=line_no) from exc
            if not isinstance(payload, dict):
                raise IngestionError("expected a JSON object", path=str(path), line=line_no)
            try:
                yield line_no, schema.model_validate(payload)
            except ValidationError as exc:
                raise IngestionError(_first_error(exc), path=str(path), line=line_no) from exc


def load_scores(path: str | Path) -> SamplePool:
    """Read a score file into a pool, preserving file order."""
    samples: List[ScoredSample] = []
    seen: set[str] = set()
    for line_no, sample in _iter_records(path, ScoredSample):
        if sample.id in seen:
            raise IngestionError(f"duplicate id {sample.id!r}", path=str(path), line=line_no)
        seen.add(sample.id)
        samples.append(sample)
    pool = SamplePool.from_samples(samples)
    logger.debug("Loaded %d scores from %s (fully_labeled=%s)", len(pool), path, pool.fully_labeled)
    return pool


def load_token_records(path: str | Path) -> List[TokenRecord]:
    records = [record for _, record in _iter_records(path, TokenRecord)]
    logger.debug("Loaded %d token records from %s", len(records), path)
    return records


def load_labels(path: str | Path) -> Dict[str, int]:
    labels: Dict[str, int] = {}
    for line_no, record in _iter_records(path, LabelRecord):
        if record.id in labels:
            raise IngestionError(f"duplicate id {record.id!r}", path=str(path), line=line_no)
        labels[record.id] = record.member
    return labels


def write_scores(pool: SamplePool, path: str | Path) -> None:
    """Write a pool as JSON-lines; floats keep their full repr so reloading is exact."""
    with atomic_output(path) as handle:
        for sample_id, score, label in zip(pool.ids, pool.scores, pool.labels):
            row: Dict[str, object] = {"id": sample_id, "score": float(score)}
            if label >= 0:
                row["member"] = int(label)
            handle.write(json.dumps(row, ensure_ascii=False) + "\n")
    logger.debug("Wrote %d scores to %s", len(pool), path)


# ----------------------------------------------------
# SPLIT PROTOCOL
# ----------------------------------------------------
def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def _halves(pool: SamplePool, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Random halves; the calibration half takes the extra sample of an odd pool."""
    order = rng.permutation(len(pool))
    cut = (len(pool) + 1) // 2
    return np.sort(order[:cut]), np.sort(order[cut:])


def _choose(rng: np.random.Generator, indices: np.ndarray, size: int) -> np.ndarray:
    if size >= len(indices):
        return indices
    return np.sort(rng.choice(indices, size=size, replace=False))


def _subsample_test(
    pool: SamplePool,
    test_idx: np.ndarray,
    spec: SplitSpec,
    rng: np.random.Generator,
) -> np.ndarray:
    if spec.pi_test is None:
        return test_idx

    pi = spec.pi_test
    labels = pool.labels[test_idx]
    nonmembers = test_idx[labels == 0]
    members = test_idx[labels == 1]

    if spec.subsample_mode == SubsampleMode.FIXED_SIZE:
        want_members = _round_half_up(pi * len(nonmembers))
        want_nonmembers = len(nonmembers) - want_members
        if want_members > len(members):
            raise SplitError(
                f"pi_test={pi} unattainable: needs {want_members} members, "
                f"test half holds {len(members)}"
            )
    else:
        want_members = _round_half_up(pi / (1.0 - pi) * len(nonmembers))
        want_nonmembers = len(nonmembers)
        if want_members > len(members):
            want_members = len(members)
            want_nonmembers = min(len(nonmembers), _round_half_up((1.0 - pi) / pi * len(members)))

    if want_members == 0 or want_nonmembers == 0:
        raise SplitError(
            f"pi_test={pi} unattainable from {len(members)} members and "
            f"{len(nonmembers)} non-members in the test half"
        )

    chosen = np.sort(
        np.concatenate([_choose(rng, members, want_members), _choose(rng, nonmembers, want_nonmembers)])
    )
    realized = want_members / len(chosen)
    if abs(realized - pi) > 1e-12:
        logger.warning("pi_test=%s realized as %.6f after rounding (%d of %d)", pi, realized, want_members, len(chosen))
    return chosen


def _rescale_calibration(
    cal_idx: np.ndarray,
    test_size: int,
    rho: float | None,
    rng: np.random.Generator,
) -> np.ndarray:
    if rho is None:
        return cal_idx
    target = max(1, _round_half_up(rho * test_size))
    if target < len(cal_idx):
        return _choose(rng, cal_idx, target)
    if target > len(cal_idx):
        logger.debug("rho=%s needs %d calibration samples, only %d available", rho, target, len(cal_idx))
    return cal_idx


def _check_labeled(pool: SamplePool) -> None:
    if not pool.fully_labeled:
        raise SplitError("split requires a fully labeled pool")
    if pool.nonmember_count == 0:
        raise SplitError("empty calibration: pool holds no non-members")


def split_pool(pool: SamplePool, spec: SplitSpec) -> Tuple[SamplePool, SamplePool]:
    """
    Split a labeled pool into (calibration, test).
    Calibration keeps only the non-members of its half; the test half is optionally
    resampled to pi_test and the calibration set shrunk toward rho.
    """
    _check_labeled(pool)
    rng = derive_rng(spec.seed)
    cal_half, test_half = _halves(pool, rng)

    cal_idx = cal_half[pool.labels[cal_half] == 0]
    if len(cal_idx) == 0:
        raise SplitError("empty calibration: calibration half holds no non-members")

    test_idx = _subsample_test(pool, test_half, spec, rng)
    cal_idx = _rescale_calibration(cal_idx, len(test_idx), spec.rho, rng)
    logger.debug("Split %d samples into cal=%d test=%d", len(pool), len(cal_idx), len(test_idx))
    return pool.take(cal_idx), pool.take(test_idx)


def split_pool_with_members(pool: SamplePool, spec: SplitSpec) -> Tuple[SamplePool, SamplePool, SamplePool]:
    """Split keeping the calibration half whole: (cal non-members, cal members, test)."""
    _check_labeled(pool)
    rng = derive_rng(spec.seed)
    cal_half, test_half = _halves(pool, rng)

    cal0_idx = cal_half[pool.labels[cal_half] == 0]
    cal1_idx = cal_half[pool.labels[cal_half] == 1]
    if len(cal0_idx) < 2 or len(cal1_idx) < 2:
        raise SplitError(
            f"moment calibration needs at least 2 members and 2 non-members, "
            f"got {len(cal1_idx)} and {len(cal0_idx)}"
        )

    test_idx = _subsample_test(pool, test_half, spec, rng)
    cal0_idx = _rescale_calibration(cal0_idx, len(test_idx), spec.rho, rng)
    if len(cal0_idx) < 2:
        raise SplitError("moment calibration needs at least 2 non-members after rho rescaling")
    return pool.take(cal0_idx), pool.take(cal1_idx), pool.take(test_idx)
