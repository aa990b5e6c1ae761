from pathlib import Path

import click

from siamprint.cli.utils import (
    exit_on_error,
    resolve_config,
    with_config_options,
)
from siamprint.constants import RESOLVED_CONFIG_FILE
from siamprint.core.config import dump_run_config
from siamprint.schemas.dataset import SPLITS
from siamprint.services.dataset import assemble_dataset
from siamprint.storage.manifest import manifest_store


@click.command('gen-data')
@with_config_options
@click.option('--out', required=True, type=click.Path(file_okay=False))
@click.option('--seed', type=int, help='Dataset seed (data.seed).')
@click.option('--workers', type=int, help='Parallel sample writers.')
@exit_on_error
def gen_data(config_path, scale, pairs, out, seed, workers):
    """Generate schematics, camera images, masks and the manifest."""
    config = resolve_config(config_path, scale, pairs, **{'data.seed': seed})
    manifest = assemble_dataset(config.data, out, workers=workers)
    dump_run_config(config, Path(out) / RESOLVED_CONFIG_FILE)
    click.echo(f'{"split":<6} {"schematics":>10} {"samples":>8} '
               f'{"defective":>9}')
    for split in SPLITS:
        summary = manifest.splits[split]
        click.echo(
            f'{split:<6} {len(summary.schematic_ids):>10} '
            f'{summary.samples:>8} {summary.defective:>9}'
        )
    click.echo(f'manifest sha256 {manifest_store.digest(manifest)}')
