from dataclasses import dataclass, field
from typing import Union

import numpy as np

from siamprint.constants import (
    BACKGROUND_RGB,
    INK_RGB,
    NO_DEFECT,
    OVER_EXTRUSION,
    UNDER_EXTRUSION,
)
from siamprint.core.exceptions import ContractViolation
from siamprint.schemas.config import SchematicSpec
from siamprint.schemas.dataset import LineDescriptor


@dataclass
class Schematic:
    schematic_id: str
    raster: np.ndarray
    lines: list[LineDescriptor] = field(default_factory=list)

    @property
    def shape(self) -> tuple[int, int]:
        return self.raster.shape


RasterLike = Union[Schematic, np.ndarray]


def check_schematic_spec(spec: SchematicSpec) -> None:
    if spec.spacing * spec.max_lines > spec.width:
        raise ContractViolation(
            f'{spec.max_lines} lines with spacing {spec.spacing} do not fit '
            f'in width {spec.width}.'
        )
    if spec.max_length > spec.height:
        raise ContractViolation(
            f'Line length {spec.max_length} exceeds height {spec.height}.'
        )


def generate_schematic(
    seed: int,
    spec: SchematicSpec,
    schematic_id: str = 'schematic',
) -> Schematic:
    """Vertical lines of varying length on distinct, evenly spaced slots."""
    check_schematic_spec(spec)
    rng = np.random.default_rng(seed)
    raster = np.zeros((spec.height, spec.width), dtype=np.uint8)
    slots = spec.width // spec.spacing
    count = int(rng.integers(spec.min_lines, spec.max_lines + 1))
    offset = (spec.spacing - spec.thickness) // 2
    lines = []
    for slot in np.sort(rng.choice(slots, size=count, replace=False)):
        length = int(rng.integers(spec.min_length, spec.max_length + 1))
        start_row = int(rng.integers(0, spec.height - length + 1))
        column = int(slot) * spec.spacing + offset
        raster[
            start_row:start_row + length, column:column + spec.thickness,
        ] = 1
        lines.append(LineDescriptor(
            column=column,
            start_row=start_row,
            length=length,
            thickness=spec.thickness,
        ))
    return Schematic(schematic_id=schematic_id, raster=raster, lines=lines)


def raster_of(value: RasterLike) -> np.ndarray:
    return value.raster if isinstance(value, Schematic) else np.asarray(value)


def render_schematic(
    schematic: RasterLike,
    ink_rgb: tuple[float, float, float] = INK_RGB,
    background_rgb: tuple[float, float, float] = BACKGROUND_RGB,
) -> np.ndarray:
    """(H, W, 3) float image; black ink on white by default."""
    ink = raster_of(schematic).astype(bool)[..., None]
    return np.where(
        ink, np.asarray(ink_rgb, dtype=np.float64),
        np.asarray(background_rgb, dtype=np.float64),
    )


def derive_defect_mask(
    true_s: RasterLike,
    presented_s: RasterLike,
) -> np.ndarray:
    """Class raster in the presented schematic's frame.

    Ink only in the true print is over-extrusion, ink only in the presented
    reference is under-extrusion.
    """
    true_ink = raster_of(true_s).astype(bool)
    presented_ink = raster_of(presented_s).astype(bool)
    if true_ink.shape != presented_ink.shape:
        raise ContractViolation(
            f'Schematic sizes differ: {true_ink.shape} vs '
            f'{presented_ink.shape}.'
        )
    mask = np.full(true_ink.shape, NO_DEFECT, dtype=np.int64)
    mask[true_ink & ~presented_ink] = OVER_EXTRUSION
    mask[presented_ink & ~true_ink] = UNDER_EXTRUSION
    return mask
