import csv
from pathlib import Path
from typing import Optional, Union

from siamprint.constants import HISTORY_COLUMNS, HISTORY_TIMING_COLUMNS
from siamprint.core.exceptions import DataIOError
from siamprint.schemas.history import EpochRecord, TrainHistory


def _cell(value: Optional[float]) -> str:
    return '' if value is None else repr(float(value))


def write_history_csv(history: TrainHistory, path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open('w', newline='', encoding='utf-8') as stream:
            writer = csv.writer(stream)
            writer.writerow(HISTORY_COLUMNS)
            for record in history.records:
                writer.writerow([
                    record.epoch,
                    _cell(record.train_loss),
                    _cell(record.val_loss),
                    _cell(record.val_macro_f1),
                    _cell(record.seconds),
                ])
    except OSError as error:
        raise DataIOError(f'Cannot write history {path}: {error}.')
    return path


def read_history_csv(path: Union[str, Path]) -> TrainHistory:
    history = TrainHistory()
    try:
        with Path(path).open('r', newline='', encoding='utf-8') as stream:
            for row in csv.DictReader(stream):
                history.append(EpochRecord(**{
                    key: value for key, value in row.items() if value != ''
                }))
    except OSError as error:
        raise DataIOError(f'Cannot read history {path}: {error}.')
    return history


def read_history_rows(
    path: Union[str, Path],
    include_timing: bool = False,
) -> list[dict[str, str]]:
    """Raw CSV cells per epoch, timing columns dropped unless asked for.

    Without timing, two runs with the same data, config and seed give
    identical rows.
    """
    try:
        with Path(path).open('r', newline='', encoding='utf-8') as stream:
            return [
                {
                    key: value for key, value in row.items()
                    if include_timing or key not in HISTORY_TIMING_COLUMNS
                }
                for row in csv.DictReader(stream)
            ]
    except OSError as error:
        raise DataIOError(f'Cannot read history {path}: {error}.')
