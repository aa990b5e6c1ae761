from typing import Optional

from pydantic import BaseModel, Extra, root_validator

from siamprint.constants import MANIFEST_FORMAT_VERSION
from siamprint.schemas.config import DatasetConfig

SPLITS = ('train', 'val', 'test')


class LineDescriptor(BaseModel):
    column: int
    start_row: int
    length: int
    thickness: int


class PerturbationParams(BaseModel):
    zoom: float = 1.0
    rotation: float = 0.0
    shear: float = 0.0
    shift_x: float = 0.0
    shift_y: float = 0.0
    gain: float = 1.0
    bias: float = 0.0
    noise_sigma: float = 0.0
    seed: int = 0

    class Config:
        extra = Extra.forbid

    def is_geometric_identity(self) -> bool:
        return (
            self.zoom == 1.0 and self.rotation == 0.0 and
            self.shear == 0.0 and self.shift_x == 0.0 and
            self.shift_y == 0.0
        )

    def is_photometric_identity(self) -> bool:
        return self.gain == 1.0 and self.bias == 0.0


class SampleRecord(BaseModel):
    sample_id: str
    split: str
    presented_schematic_id: str
    true_schematic_id: str
    variant_index: int
    defective: bool
    schematic_path: str
    camera_path: str
    mask_path: str
    perturbation: PerturbationParams
    defect_pixels: int = 0
    checksums: dict[str, str] = {}

    class Config:
        extra = Extra.forbid

    @root_validator(skip_on_failure=True)
    def defective_matches_ids(cls, values):
        mismatch = (
            values['presented_schematic_id'] != values['true_schematic_id']
        )
        if values['defective'] != mismatch:
            raise ValueError(
                'defective flag must equal presented != true schematic id'
            )
        if values['split'] not in SPLITS:
            raise ValueError(f'unknown split {values["split"]!r}')
        return values


class SplitSummary(BaseModel):
    schematic_ids: list[str]
    samples: int
    defective: int

    @property
    def defective_fraction(self) -> float:
        return self.defective / self.samples if self.samples else 0.0


class DatasetManifest(BaseModel):
    format_version: int = MANIFEST_FORMAT_VERSION
    seed: int
    config: DatasetConfig
    splits: dict[str, SplitSummary]
    samples: list[SampleRecord]

    class Config:
        extra = Extra.forbid

    @root_validator(skip_on_failure=True)
    def splits_disjoint(cls, values):
        seen: dict[str, str] = {}
        for split, summary in values['splits'].items():
            for schematic_id in summary.schematic_ids:
                if schematic_id in seen:
                    raise ValueError(
                        f'schematic {schematic_id} appears in both '
                        f'{seen[schematic_id]} and {split}'
                    )
                seen[schematic_id] = split
        return values

    def records(self, split: Optional[str] = None) -> list[SampleRecord]:
        if split is None:
            return list(self.samples)
        return [record for record in self.samples if record.split == split]
