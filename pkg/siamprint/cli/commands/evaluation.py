from pathlib import Path

import click

from siamprint.cli.utils import exit_on_error, parse_pairs
from siamprint.schemas.dataset import SPLITS
from siamprint.services.dataset import load_manifest
from siamprint.services.evaluation import evaluate
from siamprint.services.metrics import (
    compare_reports,
    format_comparison,
    format_detection_table,
    format_table,
    paired_differences,
)
from siamprint.services.prediction import predict
from siamprint.storage.checkpoint import checkpoint_store
from siamprint.storage.manifest import manifest_store, report_store

checkpoint_option = click.option(
    '--ckpt', required=True, type=click.Path(dir_okay=False),
)


@click.command('eval')
@checkpoint_option
@click.option('--data', required=True, type=click.Path())
@click.option('--split', type=click.Choice(SPLITS), default='test',
              show_default=True)
@click.option('--out', type=click.Path(file_okay=False))
@click.option('--batch-size', type=int, default=8, show_default=True)
@exit_on_error
def eval_command(ckpt, data, split, out, batch_size):
    """Score a checkpoint on one split of a dataset."""
    checkpoint = checkpoint_store.load(ckpt)
    metrics = evaluate(
        checkpoint, load_manifest(data), manifest_store.root(data), split,
        batch_size=batch_size, out_dir=out,
    )
    click.echo(format_table([(checkpoint.kind, split, metrics)]), nl=False)


@click.command('predict')
@checkpoint_option
@click.option('--ref', required=True, type=click.Path(dir_okay=False),
              help='Schematic image.')
@click.option('--cam', required=True, type=click.Path(dir_okay=False),
              help='Camera image.')
@click.option('--out', required=True, type=click.Path(dir_okay=False),
              help='Mask PNG to write.')
@exit_on_error
def predict_command(ckpt, ref, cam, out):
    """Predict a defect mask for one schematic/camera pair."""
    result = predict(ckpt, ref, cam, out)
    for name, count in result.counts.items():
        click.echo(f'{name:<16} {count:>8}')
    click.echo(f'latency {result.latency_seconds:.3f} s')
    click.echo(f'mask {result.out_path}')


@click.command('compare')
@click.option('--report', 'reports', multiple=True, required=True,
              metavar='ARM=REPORT_JSON',
              help='Repeat once per run; runs of one arm are averaged.')
@click.option('--out', type=click.Path(dir_okay=False),
              help='Also write the tables to this text file.')
@exit_on_error
def compare(reports, out):
    """Ablation table over report.json files, grouped by arm."""
    grouped = {}
    for arm, path in parse_pairs(reports, '--report'):
        grouped.setdefault(arm, []).append(report_store.read(path))
    summaries = compare_reports(grouped)
    lines = [
        format_comparison(summaries),
        format_detection_table(
            (arm, runs[-1]) for arm, runs in grouped.items()
        ),
    ]
    reference = summaries[0]
    for summary in summaries[1:]:
        if summary.runs != reference.runs:
            continue
        differences = paired_differences(reference, summary)
        lines.append(
            f'{reference.arm} - {summary.arm}: mean paired macro F1 '
            f'difference {sum(differences) / len(differences):+.4f}\n'
        )
    text = '\n'.join(lines)
    click.echo(text, nl=False)
    if out is not None:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding='utf-8')
