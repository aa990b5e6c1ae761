import click

from siamprint.cli.utils import exit_on_error
from siamprint.services.diagnostics import (
    check_model_gradients,
    model_gradcheck,
)


@click.command('gradcheck')
@click.option('--size', type=int, default=16, show_default=True)
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--base-width', type=int, default=16, show_default=True)
@click.option('--coordinates', type=int, default=8, show_default=True,
              help='Sampled coordinates per parameter tensor.')
@exit_on_error
def gradcheck_command(size, seed, base_width, coordinates):
    """Finite-difference check of full-model focal-loss gradients."""
    errors = model_gradcheck(
        size=size, seed=seed, base_width=base_width, coordinates=coordinates,
    )
    for name, error in errors.items():
        click.echo(f'{name:<36} {error:.3e}')
    worst = check_model_gradients(errors)
    click.echo(f'PASS max relative error {worst:.3e}')
