from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from siamprint.constants import MASK_PALETTE, NUM_CLASSES
from siamprint.core.exceptions import DataIOError

PathLike = Union[str, Path]


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_rgb(path: PathLike, image: np.ndarray) -> Path:
    """Write an (H, W, 3) float image in [0, 1] as 8-bit RGB PNG."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(to_uint8(image)).save(path, format='PNG')
    except OSError as error:
        raise DataIOError(f'Cannot write {path}: {error}.')
    return path


def _open(path: PathLike) -> Image.Image:
    try:
        with Image.open(path) as handle:
            handle.load()
            return handle.copy()
    except (OSError, UnidentifiedImageError) as error:
        raise DataIOError(f'Cannot read image {path}: {error}.')


def read_rgb(path: PathLike) -> np.ndarray:
    image = _open(path).convert('RGB')
    return np.asarray(image, dtype=np.float64) / 255.0


def write_mask(path: PathLike, mask: np.ndarray) -> Path:
    """Write class indices as a paletted PNG (white, red, green)."""
    path = Path(path)
    if mask.ndim != 2 or mask.min(initial=0) < 0 or (
        mask.max(initial=0) >= NUM_CLASSES
    ):
        raise DataIOError(f'Mask for {path} must be 2-D with classes 0..2.')
    height, width = mask.shape
    raw = np.ascontiguousarray(mask, dtype=np.uint8).tobytes()
    image = Image.frombytes('P', (width, height), raw)
    image.putpalette([channel for color in MASK_PALETTE for channel in color])
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        image.save(path, format='PNG')
    except OSError as error:
        raise DataIOError(f'Cannot write {path}: {error}.')
    return path


def read_mask(path: PathLike) -> np.ndarray:
    """Read class indices from a paletted mask or an RGB palette render."""
    image = _open(path)
    if image.mode == 'P':
        mask = np.asarray(image, dtype=np.int64)
        if mask.max(initial=0) >= NUM_CLASSES:
            raise DataIOError(f'Mask {path} has indices outside 0..2.')
        return mask
    rgb = np.asarray(image.convert('RGB'), dtype=np.int64)
    mask = np.full(rgb.shape[:2], -1, dtype=np.int64)
    for index, color in enumerate(MASK_PALETTE):
        mask[np.all(rgb == np.array(color), axis=-1)] = index
    if (mask < 0).any():
        raise DataIOError(f'Mask {path} contains colors outside the palette.')
    return mask


def mask_to_rgb(mask: np.ndarray) -> np.ndarray:
    palette = np.array(MASK_PALETTE, dtype=np.float64) / 255.0
    return palette[mask]
