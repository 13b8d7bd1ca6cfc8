import logging

import click

from ptdi import config
from ptdi.commands.common import handle_errors
from ptdi.services.ingest_service import load_labels, load_token_records, write_scores
from ptdi.services.score_service import parse_scorer, score_pool

logger = logging.getLogger(__name__)


@click.command("score")
@click.argument("records", type=click.Path(exists=True, dir_okay=False))
@click.option("--scorer", default="perplexity", show_default=True,
              help="perplexity[,norm] | loss | min_k:K | zlib | m_entropy | renyi:GAMMA[,std] | max_renyi:K,GAMMA[,std]")
@click.option("--labels", "labels_path", type=click.Path(exists=True, dir_okay=False),
              help="JSON-lines file of {id, member} used to label the scores")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False), help="Score file to write")
@click.option("--workers", type=click.IntRange(min=1), default=config.DEFAULT_WORKERS, show_default=True)
def score_command(records, scorer, labels_path, out_path, workers):
    """Compute detection scores from a token-record file."""
    with handle_errors():
        spec = parse_scorer(scorer)
        recs = load_token_records(records)
        labels = load_labels(labels_path) if labels_path else None
        pool = score_pool(recs, spec, labels, workers=workers)
        write_scores(pool, out_path)
    logger.info("Scored %d records with %s", len(pool), spec.describe())
    click.echo(f"✅ {len(pool)} scores ({spec.describe()}) written to {out_path}")
