from __future__ import annotations

import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, List, Optional

import click
from pydantic import BaseModel, ValidationError

from ptdi.errors import PTDIError
from ptdi.schemas import EstimatorKind, EstimatorSpec
from ptdi.utils import atomic_output

logger = logging.getLogger(__name__)

ESTIMATOR_CHOICES = ["none", "subtraction", "moment"]


class FloatList(click.ParamType):
    """Comma-separated floats, e.g. 0.05,0.1,0.2."""

    name = "float-list"

    def convert(self, value, param, ctx) -> List[float]:
        if isinstance(value, (list, tuple)):
            items = list(value)
        else:
            items = [part for part in str(value).split(",") if part.strip()]
        try:
            floats = [float(item) for item in items]
        except (TypeError, ValueError):
            self.fail(f"{value!r} is not a comma-separated list of numbers", param, ctx)
        if not floats:
            self.fail("list must not be empty", param, ctx)
        return floats


FLOAT_LIST = FloatList()


def _validation_message(exc: ValidationError) -> str:
    parts = []
    for error in exc.errors():
        field = ".".join(str(p) for p in error.get("loc", ()))
        message = error.get("msg", "")
        if message.startswith("Value error, "):
            message = message[len("Value error, "):]
        parts.append(f"{field}: {message}" if field else message)
    return "; ".join(parts)


@contextmanager
def handle_errors() -> Iterator[None]:
    """Turn pipeline failures into click errors (exit status 1, message on stderr)."""
    try:
        yield
    except PTDIError as exc:
        logger.debug("Command failed", exc_info=True)
        raise click.ClickException(str(exc)) from exc
    except ValidationError as exc:
        raise click.ClickException(_validation_message(exc)) from exc


def build_estimator_spec(estimator: str, eta: float, mean_gap_tolerance: float = 1e-8) -> EstimatorSpec:
    return EstimatorSpec(kind=EstimatorKind.parse(estimator), eta=eta, mean_gap_tolerance=mean_gap_tolerance)


def write_json(model: BaseModel, path: str | Path) -> None:
    with atomic_output(path) as handle:
        handle.write(model.model_dump_json(indent=2))
        handle.write("\n")


def require_members(estimator: str, members: Optional[str]) -> None:
    if EstimatorKind.parse(estimator) == EstimatorKind.ADJUSTED_MOMENT and not members:
        raise click.ClickException("members file required: --estimator moment needs --members")
