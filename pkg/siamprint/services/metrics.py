from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from siamprint.autodiff.tensor import Tensor
from siamprint.constants import CLASS_NAMES, NO_DEFECT, NUM_CLASSES
from siamprint.core.exceptions import ContractViolation
from siamprint.schemas.metrics import ArmSummary, ClassScores, MetricsReport

TABLE_COLUMNS = (
    'Arm', 'Split', 'Accuracy', 'Macro F1',
    'F1 no-defect', 'F1 over-extrusion', 'F1 under-extrusion',
)
DETECTION_COLUMNS = ('Arm', 'Precision', 'Recall', 'IoU', 'F1')


@dataclass
class ConfusionMatrix:
    """Rows are true classes, columns are predicted classes."""

    counts: np.ndarray = field(
        default_factory=lambda: np.zeros(
            (NUM_CLASSES, NUM_CLASSES), dtype=np.int64,
        )
    )
    samples: int = 0

    def __add__(self, other: 'ConfusionMatrix') -> 'ConfusionMatrix':
        return ConfusionMatrix(
            counts=self.counts + other.counts,
            samples=self.samples + other.samples,
        )

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def predicted_classes(pred_probs: Union[Tensor, np.ndarray]) -> np.ndarray:
    """Channel argmax of (N, C, H, W); ties go to the lowest index."""
    data = pred_probs.data if isinstance(pred_probs, Tensor) else pred_probs
    return np.argmax(np.asarray(data), axis=1)


def confusion_from_labels(
    predicted: np.ndarray,
    target: np.ndarray,
) -> ConfusionMatrix:
    predicted = np.asarray(predicted, dtype=np.int64)
    target = np.asarray(target, dtype=np.int64)
    if predicted.shape != target.shape:
        raise ContractViolation(
            f'Prediction shape {predicted.shape} does not match target '
            f'{target.shape}.'
        )
    counts = np.bincount(
        target.ravel() * NUM_CLASSES + predicted.ravel(),
        minlength=NUM_CLASSES * NUM_CLASSES,
    ).reshape(NUM_CLASSES, NUM_CLASSES)
    samples = target.shape[0] if target.ndim == 3 else 1
    return ConfusionMatrix(counts=counts, samples=samples)


def confusion(
    pred_probs: Union[Tensor, np.ndarray],
    target: np.ndarray,
) -> ConfusionMatrix:
    return confusion_from_labels(predicted_classes(pred_probs), target)


def _ratio(numerator: int, denominator: int) -> float:
    return numerator / denominator if denominator else 0.0


def class_scores(counts: np.ndarray, index: int) -> ClassScores:
    tp = int(counts[index, index])
    fp = int(counts[:, index].sum()) - tp
    fn = int(counts[index, :].sum()) - tp
    if tp + fp + fn == 0:
        return ClassScores(
            name=CLASS_NAMES[index], precision=1.0, recall=1.0, f1=1.0,
            iou=1.0, support=0,
        )
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    return ClassScores(
        name=CLASS_NAMES[index],
        precision=precision,
        recall=recall,
        f1=_ratio(2 * tp, 2 * tp + fp + fn),
        iou=_ratio(tp, tp + fp + fn),
        support=tp + fn,
    )


def report(cm: ConfusionMatrix) -> MetricsReport:
    if cm.total == 0:
        raise ContractViolation('Cannot report on an empty confusion matrix.')
    classes = [class_scores(cm.counts, index) for index in range(NUM_CLASSES)]
    return MetricsReport(
        accuracy=float(np.trace(cm.counts)) / cm.total,
        macro_f1=float(np.mean([scores.f1 for scores in classes])),
        classes=classes,
        confusion=cm.counts.tolist(),
        pixels=cm.total,
        samples=cm.samples,
    )


def detection_scores(metrics: MetricsReport) -> dict[str, float]:
    """Macro precision, recall, IoU and F1 over the defect classes."""
    defects = [
        scores for index, scores in enumerate(metrics.classes)
        if index != NO_DEFECT
    ]
    return {
        'precision': float(np.mean([item.precision for item in defects])),
        'recall': float(np.mean([item.recall for item in defects])),
        'iou': float(np.mean([item.iou for item in defects])),
        'f1': float(np.mean([item.f1 for item in defects])),
    }


def _render(header: Sequence[str], rows: list[list[str]]) -> str:
    widths = [
        max(len(row[column]) for row in [list(header)] + rows)
        for column in range(len(header))
    ]

    def line(cells):
        return '  '.join(
            cell.ljust(width) if column == 0 else cell.rjust(width)
            for column, (cell, width) in enumerate(zip(cells, widths))
        ).rstrip()

    rule = '  '.join('-' * width for width in widths)
    return '\n'.join([line(header), rule] + [line(row) for row in rows]) + '\n'


def format_table(
    rows: Iterable[tuple[str, str, MetricsReport]],
) -> str:
    """Accuracy, macro F1 and per-class F1 per (arm, split) row."""
    body = [
        [arm, split, f'{metrics.accuracy:.4f}', f'{metrics.macro_f1:.4f}']
        + [f'{scores.f1:.4f}' for scores in metrics.classes]
        for arm, split, metrics in rows
    ]
    return _render(TABLE_COLUMNS, body)


def format_detection_table(
    rows: Iterable[tuple[str, MetricsReport]],
) -> str:
    body = []
    for arm, metrics in rows:
        scores = detection_scores(metrics)
        body.append([arm] + [
            f'{scores[key]:.4f}'
            for key in ('precision', 'recall', 'iou', 'f1')
        ])
    return _render(DETECTION_COLUMNS, body)


def compare_reports(
    reports: dict[str, list[MetricsReport]],
) -> list[ArmSummary]:
    """Mean scores per arm over repeated runs (one report per seed)."""
    summaries = []
    for arm, runs in reports.items():
        if not runs:
            raise ContractViolation(f'Arm {arm} has no reports.')
        summaries.append(ArmSummary(
            arm=arm,
            runs=len(runs),
            accuracy=float(np.mean([run.accuracy for run in runs])),
            macro_f1=float(np.mean([run.macro_f1 for run in runs])),
            class_f1=[
                float(np.mean([run.classes[index].f1 for run in runs]))
                for index in range(NUM_CLASSES)
            ],
            macro_f1_values=[run.macro_f1 for run in runs],
        ))
    return summaries


def paired_differences(
    first: ArmSummary,
    second: ArmSummary,
) -> list[float]:
    if first.runs != second.runs:
        raise ContractViolation(
            f'Arms {first.arm} and {second.arm} have different run counts.'
        )
    return [
        a - b for a, b in zip(first.macro_f1_values, second.macro_f1_values)
    ]


def format_comparison(summaries: list[ArmSummary]) -> str:
    body = [
        [summary.arm, f'n={summary.runs}', f'{summary.accuracy:.4f}',
         f'{summary.macro_f1:.4f}']
        + [f'{value:.4f}' for value in summary.class_f1]
        for summary in summaries
    ]
    return _render(TABLE_COLUMNS, body)
