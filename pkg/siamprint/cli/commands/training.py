from pathlib import Path

import click

from siamprint.cli.utils import (
    exit_on_error,
    resolve_config,
    with_config_options,
)
from siamprint.services.dataset import load_manifest
from siamprint.services.trainer import ARMS, TrainResult, trainer_service
from siamprint.storage.manifest import manifest_store

data_option = click.option(
    '--data', required=True, type=click.Path(),
    help='Dataset directory or manifest.json.',
)
out_option = click.option(
    '--out', required=True, type=click.Path(file_okay=False),
)


def _load(data, config_path, scale, pairs, **overrides):
    manifest = load_manifest(data)
    config = resolve_config(config_path, scale, pairs, **overrides)
    config = config.copy(update={'data': manifest.config})
    return manifest, manifest_store.root(data), config


def _summary(result: TrainResult) -> None:
    best = result.history.best()
    click.echo(f'epochs {len(result.history)}')
    if best is not None:
        click.echo(
            f'best epoch {best.epoch} val macro F1 {best.val_macro_f1:.4f}'
        )
    click.echo(f'checkpoint {result.checkpoint_path}')


@click.command('pretrain')
@data_option
@with_config_options
@out_option
@click.option('--epochs', type=int, help='pretrain.epochs')
@click.option('--seed', type=int, help='pretrain.seed')
@exit_on_error
def pretrain(data, config_path, scale, pairs, out, epochs, seed):
    """Pre-train the U-Net on camera-to-schematic reconstruction."""
    manifest, root, config = _load(
        data, config_path, scale, pairs,
        **{'pretrain.epochs': epochs, 'pretrain.seed': seed},
    )
    _summary(trainer_service.pretrain_unet(manifest, root, config, Path(out)))


@click.command('train')
@data_option
@with_config_options
@out_option
@click.option('--init', type=click.Path(dir_okay=False),
              help='Pre-trained U-Net checkpoint.')
@click.option('--arm', type=click.Choice(ARMS), default='semi',
              show_default=True)
@click.option('--epochs', type=int, help='train.epochs')
@click.option('--seed', type=int, help='train.seed')
@exit_on_error
def train(data, config_path, scale, pairs, out, init, arm, epochs, seed):
    """Train one arm of the comparison (semi, siamese or unet)."""
    manifest, root, config = _load(
        data, config_path, scale, pairs,
        **{'train.epochs': epochs, 'train.seed': seed},
    )
    _summary(trainer_service.train_arm(
        arm, manifest, root, config, Path(out), init=init,
    ))


@click.command('train-baseline')
@data_option
@with_config_options
@out_option
@click.option('--init', type=click.Path(dir_okay=False),
              help='Pre-trained U-Net checkpoint.')
@click.option('--epochs', type=int, help='train.epochs')
@click.option('--seed', type=int, help='train.seed')
@exit_on_error
def train_baseline(data, config_path, scale, pairs, out, init, epochs, seed):
    """Train the fully shared Siamese baseline."""
    manifest, root, config = _load(
        data, config_path, scale, pairs,
        **{'train.epochs': epochs, 'train.seed': seed},
    )
    _summary(trainer_service.train_siamese_baseline(
        manifest, root, config, Path(out), init=init,
    ))
