from typing import Any

from pydantic import validator

from siamprint.constants import RUN_CONFIG_SCHEMA_VERSION
from siamprint.schemas.config import (
    DatasetConfig,
    FocalConfig,
    ModelConfig,
    StrictModel,
    TrainConfig,
)


class RunConfig(StrictModel):
    schema_version: int = RUN_CONFIG_SCHEMA_VERSION
    data: DatasetConfig = DatasetConfig()
    model: ModelConfig = ModelConfig()
    focal: FocalConfig = FocalConfig()
    train: TrainConfig = TrainConfig()
    pretrain: TrainConfig = TrainConfig(epochs=50)

    @validator('schema_version')
    def known_schema(cls, value):
        if value != RUN_CONFIG_SCHEMA_VERSION:
            raise ValueError(
                f'unsupported schema_version {value}; '
                f'expected {RUN_CONFIG_SCHEMA_VERSION}'
            )
        return value

    def to_plain(self) -> dict[str, Any]:
        """Nested dict of builtins (tuples become lists) for YAML dumps."""
        return _plain(self.dict())


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {key: _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    return value
