import logging

import click

from ptdi import config
from ptdi.commands.common import ESTIMATOR_CHOICES, FLOAT_LIST, build_estimator_spec, handle_errors
from ptdi.errors import EvaluationError
from ptdi.schemas import ScoreDistribution, SplitSpec, SubsampleMode, SynthSpec
from ptdi.services.evaluation_service import (
    estimator_bias_mse,
    simulate_sweep,
    sweep,
    synth_pool,
    write_bias_csv,
    write_summaries_csv,
)
from ptdi.services.ingest_service import load_scores

logger = logging.getLogger(__name__)

DEFAULT_ALPHAS = "0.05,0.1,0.2,0.3,0.4,0.5"
SEED_RANGE = click.IntRange(min=0, max=2**64 - 1)
UNIT_OPEN = click.FloatRange(0, 1, min_open=True, max_open=True)


def _run_options(func):
    """Options shared by every Monte Carlo command."""
    func = click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False),
                        help="CSV table to write")(func)
    func = click.option("--workers", type=click.IntRange(min=1), default=config.DEFAULT_WORKERS, show_default=True,
                        help="Parallel trial processes; output does not depend on it")(func)
    func = click.option("--seed", required=True, type=SEED_RANGE,
                        help="Master seed; every trial derives its own stream from it")(func)
    func = click.option("--trials", type=click.IntRange(min=1), default=config.DEFAULT_TRIALS, show_default=True)(func)
    func = click.option("--eta", type=UNIT_OPEN, default=config.DEFAULT_ETA, show_default=True)(func)
    func = click.option("--estimator", type=click.Choice(ESTIMATOR_CHOICES), default="subtraction",
                        show_default=True)(func)
    return func


def _split_options(func):
    func = click.option("--subsample-mode", type=click.Choice([m.value for m in SubsampleMode]),
                        default=SubsampleMode.FIXED_SIZE.value, show_default=True,
                        help="How the test half is resampled to pi_test")(func)
    return func


def _load_labeled_pool(path):
    pool = load_scores(path)
    if not pool.fully_labeled:
        raise EvaluationError("evaluation requires labels on every sample")
    return pool


def _finish(rows, out_path):
    write_summaries_csv(rows, out_path)
    click.echo(f"✅ {len(rows)} row(s) written to {out_path}")


@click.command("evaluate")
@click.argument("pool_path", metavar="POOL", type=click.Path(exists=True, dir_okay=False))
@click.option("--alpha", required=True, type=UNIT_OPEN)
@click.option("--pi-test", type=UNIT_OPEN, default=None, help="Resample each test half to this member share")
@click.option("--rho", type=click.FloatRange(min=0, min_open=True), default=1.0, show_default=True,
              help="Calibration-to-test size ratio")
@_run_options
@_split_options
def evaluate_command(pool_path, alpha, pi_test, rho, estimator, eta, trials, seed, workers, out_path, subsample_mode):
    """Empirical FDR and power of repeated split + identification on a labeled POOL."""
    with handle_errors():
        pool = _load_labeled_pool(pool_path)
        spec = build_estimator_spec(estimator, eta)
        split = SplitSpec(seed=seed, pi_test=pi_test, rho=rho, subsample_mode=subsample_mode)
        rows = sweep(pool, [alpha], spec, split, trials, workers=workers)
        _finish(rows, out_path)


@click.command("sweep")
@click.argument("pool_path", metavar="POOL", type=click.Path(exists=True, dir_okay=False))
@click.option("--alphas", required=True, type=FLOAT_LIST, help="Comma-separated FDR levels")
@click.option("--pi-tests", type=FLOAT_LIST, default=None)
@click.option("--rhos", type=FLOAT_LIST, default=None)
@click.option("--etas", type=FLOAT_LIST, default=None, help="Only valid with --estimator subtraction")
@_run_options
@_split_options
def sweep_command(pool_path, alphas, pi_tests, rhos, etas, estimator, eta, trials, seed, workers, out_path, subsample_mode):
    """Evaluate every cell of the alpha x pi_test x rho x eta grid on a labeled POOL."""
    with handle_errors():
        pool = _load_labeled_pool(pool_path)
        spec = build_estimator_spec(estimator, eta)
        split = SplitSpec(seed=seed, subsample_mode=subsample_mode)
        rows = sweep(pool, alphas, spec, split, trials, pi_tests=pi_tests, rhos=rhos, etas=etas, workers=workers)
        _finish(rows, out_path)


@click.command("simulate")
@click.option("--member-mean", type=float, default=-1.0, show_default=True)
@click.option("--nonmember-mean", type=float, default=0.0, show_default=True)
@click.option("--sd", type=float, default=1.0, show_default=True, help="Standard deviation of both components")
@click.option("--member-sd", type=float, default=None, help="Overrides --sd for members")
@click.option("--nonmember-sd", type=float, default=None, help="Overrides --sd for non-members")
@click.option("--n", "n", type=int, default=500, show_default=True, help="Calibration size")
@click.option("--m", "m", type=int, default=500, show_default=True, help="Test size")
@click.option("--pi", "pi", type=float, default=0.5, show_default=True, help="Member share of the test population")
@click.option("--distribution", type=click.Choice([d.value for d in ScoreDistribution]),
              default=ScoreDistribution.GAUSSIAN.value, show_default=True)
@click.option("--redraw/--no-redraw", default=False, show_default=True,
              help="Draw fresh calibration and test data per trial instead of splitting one pool")
@click.option("--alphas", type=FLOAT_LIST, default=DEFAULT_ALPHAS, show_default=True)
@click.option("--pi-tests", type=FLOAT_LIST, default=None)
@click.option("--rhos", type=FLOAT_LIST, default=None)
@click.option("--etas", type=FLOAT_LIST, default=None)
@_run_options
@_split_options
def simulate_command(member_mean, nonmember_mean, sd, member_sd, nonmember_sd, n, m, pi, distribution, redraw,
                     alphas, pi_tests, rhos, etas, estimator, eta, trials, seed, workers, out_path, subsample_mode):
    """Evaluate on synthetic two-component scores."""
    with handle_errors():
        synth = SynthSpec(
            member_mean=member_mean,
            member_sd=sd if member_sd is None else member_sd,
            nonmember_mean=nonmember_mean,
            nonmember_sd=sd if nonmember_sd is None else nonmember_sd,
            n=n,
            m=m,
            pi_test=pi,
            seed=seed,
            distribution=distribution,
        )
        spec = build_estimator_spec(estimator, eta)
        if redraw:
            rows = simulate_sweep(synth, alphas, spec, trials, pi_tests=pi_tests, rhos=rhos, etas=etas, workers=workers)
        else:
            pool = synth_pool(synth)
            split = SplitSpec(seed=seed, subsample_mode=subsample_mode)
            rows = sweep(pool, alphas, spec, split, trials, pi_tests=pi_tests, rhos=rhos, etas=etas, workers=workers)
        _finish(rows, out_path)


@click.command("bias")
@click.argument("pool_path", metavar="POOL", type=click.Path(exists=True, dir_okay=False))
@click.option("--pi-tests", required=True, type=FLOAT_LIST)
@_run_options
@_split_options
def bias_command(pool_path, pi_tests, estimator, eta, trials, seed, workers, out_path, subsample_mode):
    """Bias and MSE of the proportion estimator across pi_test values."""
    with handle_errors():
        pool = _load_labeled_pool(pool_path)
        spec = build_estimator_spec(estimator, eta)
        split = SplitSpec(seed=seed, subsample_mode=subsample_mode)
        rows = estimator_bias_mse(pool, spec, split, pi_tests, trials, workers=workers)
        write_bias_csv(rows, out_path)
    for row in rows:
        click.echo(f"pi_test={row.pi_test:g} bias={row.bias:.6f} mse={row.mse:.6f}")
