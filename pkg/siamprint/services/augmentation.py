import math
from typing import Optional, Sequence

import numpy as np
from skimage import transform

from siamprint.schemas.config import CameraConfig, PerturbationRanges
from siamprint.schemas.dataset import PerturbationParams
from siamprint.services.schematics import (
    RasterLike,
    raster_of,
    render_schematic,
)

SPECKLE_STREAM = 1
NOISE_STREAM = 2


def sample_perturbation(
    ranges: PerturbationRanges,
    height: int,
    width: int,
    rng: np.random.Generator,
) -> PerturbationParams:
    max_shift_x = ranges.shift_fraction * width
    max_shift_y = ranges.shift_fraction * height
    return PerturbationParams(
        zoom=float(rng.uniform(*ranges.zoom)),
        rotation=float(rng.uniform(*ranges.rotation)),
        shear=float(rng.uniform(*ranges.shear)),
        shift_x=float(rng.uniform(-max_shift_x, max_shift_x)),
        shift_y=float(rng.uniform(-max_shift_y, max_shift_y)),
        gain=float(rng.uniform(*ranges.gain)),
        bias=float(rng.uniform(*ranges.bias)),
        noise_sigma=float(rng.uniform(*ranges.noise_sigma)),
        seed=int(rng.integers(0, 2 ** 31 - 1)),
    )


def affine_matrix(
    params: PerturbationParams,
    height: int,
    width: int,
) -> np.ndarray:
    """Forward (x, y) map: shift . rotation . shear . zoom about the center."""
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    angle = math.radians(params.rotation)
    to_origin = np.array([[1, 0, -cx], [0, 1, -cy], [0, 0, 1]], dtype=float)
    zoom = np.diag([params.zoom, params.zoom, 1.0])
    shear = np.array([[1, params.shear, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    rotation = np.array([
        [math.cos(angle), -math.sin(angle), 0],
        [math.sin(angle), math.cos(angle), 0],
        [0, 0, 1],
    ])
    back = np.array([
        [1, 0, cx + params.shift_x],
        [0, 1, cy + params.shift_y],
        [0, 0, 1],
    ])
    return back @ rotation @ shear @ zoom @ to_origin


def _estimate_background(image: np.ndarray) -> np.ndarray:
    border = np.concatenate([
        image[0], image[-1], image[:, 0], image[:, -1],
    ])
    return np.median(border, axis=0)


def apply_perturbation(
    image: np.ndarray,
    params: PerturbationParams,
    background: Optional[Sequence[float]] = None,
) -> np.ndarray:
    """Affine warp, gain/bias with clamping, then seeded Gaussian noise.

    ``image`` is (H, W, 3) in [0, 1]. Bilinear interpolation; pixels mapped
    from outside the source take the ``background`` color (estimated from
    the image border when not given).
    """
    out = np.asarray(image, dtype=np.float64)
    height, width = out.shape[:2]
    if not params.is_geometric_identity():
        fill = (
            np.asarray(background, dtype=np.float64) if background is not None
            else _estimate_background(out)
        )
        tform = transform.AffineTransform(
            matrix=affine_matrix(params, height, width),
        )
        out = np.stack([
            transform.warp(
                out[..., channel],
                tform.inverse,
                order=1,
                mode='constant',
                cval=float(fill[channel]),
                preserve_range=True,
            )
            for channel in range(out.shape[2])
        ], axis=-1)
    if not params.is_photometric_identity():
        out = np.clip(params.gain * out + params.bias, 0.0, 1.0)
    if params.noise_sigma > 0:
        rng = np.random.default_rng([params.seed, NOISE_STREAM])
        out = np.clip(
            out + rng.normal(0.0, params.noise_sigma, size=out.shape),
            0.0, 1.0,
        )
    return out


def simulate_camera(
    schematic: RasterLike,
    params: PerturbationParams,
    camera: CameraConfig = CameraConfig(),
) -> np.ndarray:
    """Render a perfect print of ``schematic`` through a perturbed camera."""
    image = render_schematic(schematic, camera.ink_rgb, camera.powder_rgb)
    if camera.speckle_sigma > 0:
        rng = np.random.default_rng([params.seed, SPECKLE_STREAM])
        powder = ~raster_of(schematic).astype(bool)
        speckle = rng.normal(
            0.0, camera.speckle_sigma, size=image.shape[:2],
        )[..., None]
        image = np.clip(image + speckle * powder[..., None], 0.0, 1.0)
    return apply_perturbation(image, params, background=camera.powder_rgb)
