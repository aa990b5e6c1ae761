import click

from siamprint import __version__
from siamprint.cli.routers import include_commands
from siamprint.core.config import settings
from siamprint.core.logging import configure_logging


@click.group(help=settings.app_description)
@click.option(
    '--log-level',
    type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                      case_sensitive=False),
    help='Overrides SIAMPRINT_LOG_LEVEL.',
)
@click.version_option(__version__, prog_name=settings.app_title)
def cli(log_level):
    configure_logging(level=log_level)


include_commands(cli)


if __name__ == '__main__':
    cli()
