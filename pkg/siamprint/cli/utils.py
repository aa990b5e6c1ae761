import functools
import logging
import sys
from typing import Any, Callable, Optional

import click
import yaml
from pydantic import ValidationError

from siamprint.constants import EXIT_CONFIG, EXIT_IO
from siamprint.core.config import load_run_config
from siamprint.core.exceptions import SiamPrintError
from siamprint.schemas.run import RunConfig

logger = logging.getLogger(__name__)


def exit_on_error(command: Callable) -> Callable:
    """Map package errors to the documented exit codes."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except SiamPrintError as error:
            code = error.exit_code
            message = error.detail
        except (ValidationError, yaml.YAMLError) as error:
            code, message = EXIT_CONFIG, f'Invalid configuration: {error}'
        except OSError as error:
            code, message = EXIT_IO, str(error)
        logger.error(message)
        click.echo(f'Error: {message}', err=True)
        sys.exit(code)

    return wrapper


def parse_pairs(
    pairs: tuple[str, ...],
    hint: str = '--set',
) -> list[tuple[str, str]]:
    parsed = []
    for pair in pairs:
        key, separator, value = pair.partition('=')
        if not separator or not key.strip():
            raise click.BadParameter(
                f'{pair!r} is not KEY=VALUE.', param_hint=hint,
            )
        parsed.append((key.strip(), value))
    return parsed


def resolve_config(
    config_path: Optional[str],
    scale: Optional[str],
    pairs: tuple[str, ...] = (),
    **overrides: Any,
) -> RunConfig:
    """Preset, then file, then ``--set`` pairs, then dedicated flags."""
    if config_path is None and scale is None:
        scale = 'desk'
    merged: dict[str, Any] = dict(parse_pairs(pairs))
    merged.update(overrides)
    return load_run_config(config_path, scale, merged)


config_options = [
    click.option(
        '--config', 'config_path', type=click.Path(dir_okay=False),
        help='YAML run configuration.',
    ),
    click.option(
        '--scale', type=click.Choice(['desk', 'paper']),
        help='Bundled preset (desk when no --config is given).',
    ),
    click.option(
        '--set', 'pairs', multiple=True, metavar='KEY=VALUE',
        help='Override a dotted config key, e.g. train.epochs=5.',
    ),
]


def with_config_options(command: Callable) -> Callable:
    for option in reversed(config_options):
        command = option(command)
    return command
