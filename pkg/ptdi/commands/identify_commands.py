import logging
from pathlib import Path

import click

from ptdi import config
from ptdi.commands.common import (
    ESTIMATOR_CHOICES,
    build_estimator_spec,
    handle_errors,
    require_members,
    write_json,
)
from ptdi.schemas import EstimateReport
from ptdi.services.ingest_service import load_scores
from ptdi.services.proportion_service import estimate_proportion
from ptdi.services.selection_service import baseline_report, ptdi_identify, to_report

logger = logging.getLogger(__name__)


def _estimator_options(default_estimator: str):
    def decorate(func):
        func = click.option("--mean-gap-tolerance", type=float, default=1e-8, show_default=True,
                            help="Relative tolerance below which moment means count as equal")(func)
        func = click.option("--eta", type=click.FloatRange(0, 1, min_open=True, max_open=True),
                            default=config.DEFAULT_ETA, show_default=True,
                            help="Calibration tail fraction for the subtraction estimator")(func)
        func = click.option("--members", "members_path", type=click.Path(exists=True, dir_okay=False),
                            help="Score file of confirmed members (moment estimator)")(func)
        func = click.option("--estimator", type=click.Choice(ESTIMATOR_CHOICES), default=default_estimator,
                            show_default=True)(func)
        func = click.option("--test", "test_path", required=True, type=click.Path(exists=True, dir_okay=False),
                            help="Score file of candidate samples")(func)
        func = click.option("--cal", "cal_path", required=True, type=click.Path(exists=True, dir_okay=False),
                            help="Score file of confirmed non-members")(func)
        return func
    return decorate


@click.command("identify")
@_estimator_options("subtraction")
@click.option("--alpha", required=True, type=click.FloatRange(0, 1, min_open=True, max_open=True),
              help="Target false discovery rate")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False),
              help="Selection document (JSON) to write")
@click.option("--baseline-tau", type=float, default=None,
              help="Also write the level-set baseline T <= TAU next to the selection document")
def identify_command(cal_path, test_path, estimator, members_path, eta, mean_gap_tolerance, alpha, out_path, baseline_tau):
    """Select training-set members from TEST with FDR control at ALPHA."""
    require_members(estimator, members_path)
    with handle_errors():
        spec = build_estimator_spec(estimator, eta, mean_gap_tolerance)
        cal = load_scores(cal_path)
        test = load_scores(test_path)
        members = load_scores(members_path) if members_path else None
        result = ptdi_identify(cal, test, alpha, spec, members)
        write_json(to_report(result, test), out_path)
        if baseline_tau is not None:
            baseline_path = Path(out_path).with_suffix(".baseline.json")
            write_json(baseline_report(test, baseline_tau), baseline_path)
            logger.info("Level-set baseline written to %s (no statistical guarantee)", baseline_path)

    click.echo(f"selected={result.selected_count} k_star={result.k_star} pi_hat={result.estimate.pi_hat:.6f}")


@click.command("estimate")
@_estimator_options("subtraction")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), help="Estimate document (JSON) to write")
def estimate_command(cal_path, test_path, estimator, members_path, eta, mean_gap_tolerance, out_path):
    """Estimate the member proportion of TEST without running selection."""
    require_members(estimator, members_path)
    with handle_errors():
        spec = build_estimator_spec(estimator, eta, mean_gap_tolerance)
        cal = load_scores(cal_path)
        test = load_scores(test_path)
        members = load_scores(members_path) if members_path else None
        estimate = estimate_proportion(cal, test, spec, members)
        report = EstimateReport(
            estimator=estimate.kind,
            pi_hat=estimate.pi_hat,
            scale_factor=estimate.scale_factor,
            fallback_used=estimate.fallback_used,
            eta=estimate.eta,
            diagnostics=dict(estimate.diagnostics),
        )
        if out_path:
            write_json(report, out_path)

    click.echo(f"pi_hat={estimate.pi_hat:.6f} scale_factor={estimate.scale_factor:.6f} fallback_used={estimate.fallback_used}")
