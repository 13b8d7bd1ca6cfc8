import click

from ptdi.commands.common import handle_errors
from ptdi.services.evaluation_service import read_summaries_csv
from ptdi.services.plot_service import FIGURE_KINDS, write_plot_data


@click.command("plotdata")
@click.argument("csv_path", metavar="CSV", type=click.Path(exists=True, dir_okay=False))
@click.option("--kind", required=True, type=click.Choice(list(FIGURE_KINDS)),
              help="Which column separates the plotted series")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
              help="Directory for the per-series CSVs and the chart")
def plotdata_command(csv_path, kind, out_dir):
    """Turn a summary CSV into per-series plot tables and a PDF chart."""
    with handle_errors():
        rows = read_summaries_csv(csv_path)
        written = write_plot_data(rows, kind, out_dir)
    for path in written:
        click.echo(f"✅ {path}")
