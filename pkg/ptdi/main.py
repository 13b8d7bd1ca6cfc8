import logging

import click

from ptdi import __version__, config
from ptdi.commands import evaluate_commands, identify_commands, plot_commands, score_commands
from ptdi.errors import ConfigError

logger = logging.getLogger(__name__)


@click.group()
@click.version_option(__version__, prog_name="ptdi")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="YAML file of per-command option defaults; flags on the command line win")
@click.option("--log-level", default=None, help=f"Logging level for stderr [default: {config.LOG_LEVEL}]")
@click.pass_context
def cli(ctx, config_path, log_level):
    """Identify training data of a language model with false discovery rate control."""
    try:
        config.configure_logging(log_level)
        if config_path:
            ctx.default_map = config.load_config_file(config_path)
            logger.debug("Loaded option defaults from %s", config_path)
    except ConfigError as exc:
        raise click.ClickException(str(exc)) from exc


# commands

cli.add_command(score_commands.score_command)
cli.add_command(identify_commands.identify_command)
cli.add_command(identify_commands.estimate_command)
cli.add_command(evaluate_commands.evaluate_command)
cli.add_command(evaluate_commands.sweep_command)
cli.add_command(evaluate_commands.simulate_command)
cli.add_command(evaluate_commands.bias_command)
cli.add_command(plot_commands.plotdata_command)


if __name__ == "__main__":
    cli()
