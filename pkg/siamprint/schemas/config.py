from typing import Optional

from pydantic import (
    BaseModel,
    Extra,
    Field,
    PositiveFloat,
    PositiveInt,
    root_validator,
    validator,
)

from siamprint.constants import (
    CAMERA_INK_RGB,
    CAMERA_POWDER_RGB,
    CAMERA_SPECKLE_SIGMA,
    NUM_CLASSES,
)


class StrictModel(BaseModel):

    class Config:
        extra = Extra.forbid
        allow_mutation = False


class UNetConfig(StrictModel):
    input_channels: PositiveInt = 3
    base_width: int = Field(16, ge=2)
    output_channels: PositiveInt = 16

    def channel_ladder(self) -> list[int]:
        return [self.base_width * 2 ** level for level in range(5)]

    def backbone_matches(self, other: 'UNetConfig') -> bool:
        return (
            self.input_channels == other.input_channels and
            self.base_width == other.base_width
        )


class HeadConfig(StrictModel):
    hidden_channels: PositiveInt = 32
    zero_init: bool = False


class ModelConfig(StrictModel):
    unet: UNetConfig = UNetConfig()
    head: HeadConfig = HeadConfig()


class FocalConfig(StrictModel):
    gamma: float = Field(2.0, ge=0.0)
    alpha: Optional[tuple[float, float, float]] = None

    @validator('alpha')
    def alpha_positive(cls, value):
        if value is not None and any(component <= 0 for component in value):
            raise ValueError('alpha components must be positive')
        return value

    def alpha_or_uniform(self) -> tuple[float, ...]:
        return self.alpha if self.alpha is not None else (1.0,) * NUM_CLASSES


class AdamConfig(StrictModel):
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    eps: PositiveFloat = 1e-8


class TrainConfig(StrictModel):
    epochs: PositiveInt = 200
    batch_size: PositiveInt = 8
    learning_rate: PositiveFloat = 1e-3
    adam: AdamConfig = AdamConfig()
    seed: int = 0
    checkpoint_every: PositiveInt = 1
    eval_every: PositiveInt = 1
    max_samples: Optional[PositiveInt] = None


class SchematicSpec(StrictModel):
    height: PositiveInt = 64
    width: PositiveInt = 64
    min_lines: PositiveInt = 4
    max_lines: PositiveInt = 10
    min_length: PositiveInt = 12
    max_length: PositiveInt = 52
    thickness: PositiveInt = 2
    spacing: PositiveInt = 6

    @root_validator(skip_on_failure=True)
    def ranges_ordered(cls, values):
        if values['min_lines'] > values['max_lines']:
            raise ValueError('min_lines must not exceed max_lines')
        if values['min_length'] > values['max_length']:
            raise ValueError('min_length must not exceed max_length')
        if values['thickness'] > values['spacing']:
            raise ValueError('thickness must not exceed spacing')
        return values


class PerturbationRanges(StrictModel):
    zoom: tuple[float, float] = (0.9, 1.1)
    rotation: tuple[float, float] = (-10.0, 10.0)
    shear: tuple[float, float] = (-0.1, 0.1)
    shift_fraction: float = Field(0.05, ge=0.0, lt=0.5)
    gain: tuple[float, float] = (0.8, 1.2)
    bias: tuple[float, float] = (-0.05, 0.05)
    noise_sigma: tuple[float, float] = (0.0, 0.03)

    @validator('zoom', 'rotation', 'shear', 'gain', 'bias', 'noise_sigma')
    def interval_ordered(cls, value):
        low, high = value
        if low > high:
            raise ValueError('interval lower bound exceeds upper bound')
        return value

    @validator('zoom', 'gain')
    def interval_positive(cls, value):
        if value[0] <= 0:
            raise ValueError('interval must be positive')
        return value


class CameraConfig(StrictModel):
    ink_rgb: tuple[float, float, float] = CAMERA_INK_RGB
    powder_rgb: tuple[float, float, float] = CAMERA_POWDER_RGB
    speckle_sigma: float = Field(CAMERA_SPECKLE_SIGMA, ge=0.0)


class SplitCounts(StrictModel):
    train: PositiveInt
    val: PositiveInt
    test: PositiveInt

    def as_dict(self) -> dict[str, int]:
        return {'train': self.train, 'val': self.val, 'test': self.test}


class DatasetConfig(StrictModel):
    n_schematics: int = Field(24, ge=3)
    split_ratios: tuple[float, float, float] = (41.0, 8.0, 8.0)
    samples: SplitCounts = SplitCounts(train=400, val=40, test=40)
    variants_per_schematic: PositiveInt = 20
    defect_fraction: float = Field(0.5, ge=0.0, le=1.0)
    schematic: SchematicSpec = SchematicSpec()
    perturbation: PerturbationRanges = PerturbationRanges()
    camera: CameraConfig = CameraConfig()
    seed: int = 0

    @validator('split_ratios')
    def ratios_positive(cls, value):
        if any(ratio <= 0 for ratio in value):
            raise ValueError('split ratios must be positive')
        return value
