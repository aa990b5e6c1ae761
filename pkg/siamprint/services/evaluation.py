import logging
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np

from siamprint.autodiff.tensor import Tensor, no_grad
from siamprint.constants import (
    NO_DEFECT,
    NUM_CLASSES,
    OVER_EXTRUSION,
    REPORT_JSON_FILE,
    REPORT_TABLE_FILE,
    SPATIAL_MULTIPLE,
    UNDER_EXTRUSION,
    UNET_COMPARISON_THRESHOLD,
)
from siamprint.core.exceptions import ContractViolation
from siamprint.models.unet import UNet
from siamprint.schemas.config import FocalConfig
from siamprint.schemas.dataset import DatasetManifest, SampleRecord
from siamprint.schemas.metrics import MetricsReport
from siamprint.services.dataset import iterate_batches, select_records
from siamprint.services.losses import focal_loss
from siamprint.services.metrics import (
    ConfusionMatrix,
    confusion_from_labels,
    format_table,
    report,
)
from siamprint.storage.checkpoint import Checkpoint, Network, checkpoint_store
from siamprint.storage.manifest import report_store

logger = logging.getLogger(__name__)


def ink_mask(image: np.ndarray) -> np.ndarray:
    """(N, 3, H, W) image to a boolean ink mask by mean intensity."""
    return np.asarray(image).mean(axis=1) < UNET_COMPARISON_THRESHOLD


def predict_unet_comparison(
    reconstruction: np.ndarray,
    schematic: np.ndarray,
) -> np.ndarray:
    """Class labels from thresholding a reconstruction against a schematic.

    Ink only in the reconstruction is over-extrusion, ink only in the
    schematic is under-extrusion.
    """
    printed = ink_mask(reconstruction)
    planned = ink_mask(schematic)
    labels = np.full(printed.shape, NO_DEFECT, dtype=np.int64)
    labels[printed & ~planned] = OVER_EXTRUSION
    labels[planned & ~printed] = UNDER_EXTRUSION
    return labels


def labels_to_probs(labels: np.ndarray) -> np.ndarray:
    return (
        labels[:, None] == np.arange(NUM_CLASSES)[None, :, None, None]
    ).astype(np.float64)


def model_probabilities(
    model: Network,
    i_ref: np.ndarray,
    i_cam: np.ndarray,
) -> np.ndarray:
    """Eval-mode (N, 3, H, W) class probabilities for any checkpoint kind."""
    with no_grad():
        if isinstance(model, UNet):
            reconstruction = model.forward(Tensor(i_cam), 'eval').data
            return labels_to_probs(
                predict_unet_comparison(reconstruction, i_ref)
            )
        return model.forward(Tensor(i_ref), Tensor(i_cam), 'eval').probs.data


def check_resolution(model: Network, manifest: DatasetManifest) -> None:
    spec = manifest.config.schematic
    if spec.height % SPATIAL_MULTIPLE or spec.width % SPATIAL_MULTIPLE:
        raise ContractViolation(
            f'Dataset resolution {spec.height}x{spec.width} is not divisible '
            f'by {SPATIAL_MULTIPLE}.'
        )
    unet = model.config if isinstance(model, UNet) else model.config.unet
    if unet.input_channels != 3:
        raise ContractViolation('Checkpoint does not take RGB inputs.')


def evaluate_stream(
    pairs: Iterable[tuple[np.ndarray, np.ndarray]],
) -> MetricsReport:
    """Report over (predicted labels, target labels) batches."""
    cm = ConfusionMatrix()
    for predicted, target in pairs:
        cm = cm + confusion_from_labels(predicted, target)
    return report(cm)


def evaluate_records(
    model: Network,
    manifest: DatasetManifest,
    root: Union[str, Path],
    records: list[SampleRecord],
    batch_size: int,
    focal: Optional[FocalConfig] = None,
) -> tuple[Optional[float], MetricsReport]:
    """Eval-mode pass returning (mean focal loss or None, report)."""
    if not records:
        raise ContractViolation('Cannot evaluate an empty split.')
    cm = ConfusionMatrix()
    weighted_loss = 0.0
    with_loss = focal is not None and not isinstance(model, UNet)
    for batch in iterate_batches(
        manifest, root, records[0].split, batch_size, records=records,
    ):
        probs = model_probabilities(model, batch.i_ref, batch.i_cam)
        cm = cm + confusion_from_labels(np.argmax(probs, axis=1), batch.mask)
        if with_loss:
            with no_grad():
                loss = focal_loss(Tensor(probs), batch.mask, focal)
            weighted_loss += loss.item() * len(batch)
    mean_loss = weighted_loss / len(records) if with_loss else None
    return mean_loss, report(cm)


def write_report(
    metrics: MetricsReport,
    out_dir: Union[str, Path],
    arm: str,
    split: str,
) -> Path:
    out_dir = Path(out_dir)
    report_store.write(metrics, out_dir / REPORT_JSON_FILE)
    table = format_table([(arm, split, metrics)])
    (out_dir / REPORT_TABLE_FILE).write_text(table, encoding='utf-8')
    return out_dir


def evaluate(
    checkpoint: Union[Checkpoint, str, Path],
    manifest: DatasetManifest,
    root: Union[str, Path],
    split: str,
    batch_size: int = 8,
    out_dir: Optional[Union[str, Path]] = None,
) -> MetricsReport:
    if not isinstance(checkpoint, Checkpoint):
        checkpoint = checkpoint_store.load(checkpoint)
    check_resolution(checkpoint.model, manifest)
    records = select_records(manifest, split)
    if not records:
        raise ContractViolation(f'Split {split} is empty.')
    _, metrics = evaluate_records(
        checkpoint.model, manifest, root, records, batch_size,
    )
    logger.info(
        '%s on %s: accuracy %.4f, macro F1 %.4f.',
        checkpoint.kind, split, metrics.accuracy, metrics.macro_f1,
    )
    if out_dir is not None:
        write_report(metrics, out_dir, checkpoint.kind, split)
    return metrics
