import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from siamprint.constants import CLASS_NAMES, NUM_CLASSES, SPATIAL_MULTIPLE
from siamprint.core.exceptions import DataIOError
from siamprint.services.evaluation import model_probabilities
from siamprint.storage.checkpoint import Checkpoint, checkpoint_store
from siamprint.storage.images import read_rgb, write_mask

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@dataclass
class Prediction:
    mask: np.ndarray
    counts: dict[str, int]
    latency_seconds: float
    out_path: Path


def pad_to_multiple(
    image: np.ndarray,
    multiple: int = SPATIAL_MULTIPLE,
) -> tuple[np.ndarray, tuple[int, int]]:
    """Reflect-pad an (H, W, C) image at the bottom and right edges."""
    height, width = image.shape[:2]
    pad_h = -height % multiple
    pad_w = -width % multiple
    if not (pad_h or pad_w):
        return image, (height, width)
    padded = np.pad(image, ((0, pad_h), (0, pad_w), (0, 0)), mode='reflect')
    return padded, (height, width)


def predict_arrays(
    checkpoint: Checkpoint,
    schematic_image: np.ndarray,
    camera_image: np.ndarray,
) -> np.ndarray:
    """Class labels (H, W) for one (H, W, 3) schematic/camera pair."""
    if schematic_image.shape != camera_image.shape:
        raise DataIOError(
            f'Schematic {schematic_image.shape} and camera '
            f'{camera_image.shape} images differ in size.'
        )
    schematic, (height, width) = pad_to_multiple(schematic_image)
    camera, _ = pad_to_multiple(camera_image)
    probs = model_probabilities(
        checkpoint.model,
        schematic.transpose(2, 0, 1)[None],
        camera.transpose(2, 0, 1)[None],
    )
    return np.argmax(probs[0], axis=0)[:height, :width]


def predict(
    checkpoint: Union[Checkpoint, PathLike],
    schematic_image: PathLike,
    camera_image: PathLike,
    out_path: PathLike,
) -> Prediction:
    if not isinstance(checkpoint, Checkpoint):
        checkpoint = checkpoint_store.load(checkpoint)
    schematic = read_rgb(schematic_image)
    camera = read_rgb(camera_image)
    started = time.perf_counter()
    mask = predict_arrays(checkpoint, schematic, camera)
    latency = time.perf_counter() - started
    out_path = write_mask(out_path, mask)
    counts = np.bincount(mask.ravel(), minlength=NUM_CLASSES)
    logger.info('Prediction took %.3f s.', latency)
    return Prediction(
        mask=mask,
        counts={
            name: int(count) for name, count in zip(CLASS_NAMES, counts)
        },
        latency_seconds=latency,
        out_path=out_path,
    )
