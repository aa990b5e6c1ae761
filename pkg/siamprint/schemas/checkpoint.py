from typing import Any, Optional

from pydantic import BaseModel, Extra, validator

from siamprint.constants import CHECKPOINT_FORMAT_VERSION
from siamprint.schemas.config import HeadConfig, TrainConfig, UNetConfig

CHECKPOINT_KINDS = ('unet', 'semi_siamese', 'siamese')
DTYPES = ('float64', 'float32')


class TensorEntry(BaseModel):
    name: str
    shape: list[int]
    dtype: str
    byte_offset: int

    @validator('dtype')
    def known_dtype(cls, value):
        if value not in DTYPES:
            raise ValueError(f'unsupported dtype {value!r}')
        return value


class ArchitectureConfig(BaseModel):
    kind: str
    unet: UNetConfig
    head: Optional[HeadConfig] = None
    tied_encoders: bool = False

    class Config:
        extra = Extra.forbid

    @validator('kind')
    def known_kind(cls, value):
        if value not in CHECKPOINT_KINDS:
            raise ValueError(f'unknown checkpoint kind {value!r}')
        return value


class CheckpointHeader(BaseModel):
    format_version: int = CHECKPOINT_FORMAT_VERSION
    architecture: ArchitectureConfig
    tensors: list[TensorEntry]
    train_config: Optional[TrainConfig] = None
    extra: dict[str, Any] = {}

    class Config:
        extra = Extra.forbid
