"""Binary checkpoints.

Layout: ``SIAMCKPT`` magic, little-endian uint64 header length, UTF-8 JSON
header (:class:`CheckpointHeader`), then every tensor as raw little-endian
floats in header order. ``byte_offset`` is relative to the data section.
"""
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
from pydantic import ValidationError

from siamprint.constants import CHECKPOINT_FORMAT_VERSION
from siamprint.core.exceptions import ContractViolation, DataIOError
from siamprint.models.base import ParameterGroup
from siamprint.models.semi_siamese import SemiSiameseModel, build_semi_siamese
from siamprint.models.unet import UNet, build_unet
from siamprint.schemas.checkpoint import (
    ArchitectureConfig,
    CheckpointHeader,
    TensorEntry,
)
from siamprint.schemas.config import ModelConfig, TrainConfig

MAGIC = b'SIAMCKPT'
LENGTH_FORMAT = '<Q'

Network = Union[UNet, SemiSiameseModel]


@dataclass
class Checkpoint:
    header: CheckpointHeader
    model: Network

    @property
    def kind(self) -> str:
        return self.header.architecture.kind


def architecture_of(model: Network) -> ArchitectureConfig:
    if isinstance(model, UNet):
        return ArchitectureConfig(kind='unet', unet=model.config)
    return ArchitectureConfig(
        kind=model.kind,
        unet=model.config.unet,
        head=model.config.head,
        tied_encoders=model.tied_encoders,
    )


def _named_arrays(model: Network) -> list[tuple[str, np.ndarray]]:
    arrays = []
    for namespace, group in model.groups():
        for name, array in group.state_arrays().items():
            arrays.append((f'{namespace}/{name}', array))
    return arrays


def _build(architecture: ArchitectureConfig) -> Network:
    if architecture.kind == 'unet':
        return build_unet(architecture.unet, seed=0)
    if architecture.head is None:
        raise DataIOError('Checkpoint architecture is missing the head.')
    config = ModelConfig(unet=architecture.unet, head=architecture.head)
    return build_semi_siamese(
        config, seed=0, tie_encoders=architecture.tied_encoders,
    )


class CheckpointStore:

    def save(
        self,
        model: Network,
        path: Union[str, Path],
        train_config: Optional[TrainConfig] = None,
        dtype: str = 'float64',
        extra: Optional[dict[str, Any]] = None,
    ) -> Path:
        path = Path(path)
        storage = np.dtype(dtype).newbyteorder('<')
        entries, chunks, offset = [], [], 0
        for name, array in _named_arrays(model):
            raw = np.ascontiguousarray(array, dtype=storage).tobytes()
            entries.append(TensorEntry(
                name=name,
                shape=list(array.shape),
                dtype=dtype,
                byte_offset=offset,
            ))
            chunks.append(raw)
            offset += len(raw)
        header = CheckpointHeader(
            architecture=architecture_of(model),
            tensors=entries,
            train_config=train_config,
            extra=extra or {},
        )
        header_bytes = header.json(sort_keys=True).encode('utf-8')
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with path.open('wb') as stream:
                stream.write(MAGIC)
                stream.write(struct.pack(LENGTH_FORMAT, len(header_bytes)))
                stream.write(header_bytes)
                for chunk in chunks:
                    stream.write(chunk)
        except OSError as error:
            raise DataIOError(f'Cannot write checkpoint {path}: {error}.')
        return path

    def _read_raw(self, path: Path) -> tuple[CheckpointHeader, bytes]:
        try:
            payload = path.read_bytes()
        except OSError as error:
            raise DataIOError(f'Cannot read checkpoint {path}: {error}.')
        prefix = len(MAGIC) + struct.calcsize(LENGTH_FORMAT)
        if payload[:len(MAGIC)] != MAGIC or len(payload) < prefix:
            raise DataIOError(f'{path} is not a siamprint checkpoint.')
        (length,) = struct.unpack(LENGTH_FORMAT, payload[len(MAGIC):prefix])
        try:
            header = CheckpointHeader.parse_obj(
                json.loads(payload[prefix:prefix + length].decode('utf-8'))
            )
        except (ValueError, ValidationError) as error:
            raise DataIOError(f'Corrupt checkpoint header in {path}: {error}')
        if header.format_version != CHECKPOINT_FORMAT_VERSION:
            raise DataIOError(
                f'Unsupported checkpoint format_version '
                f'{header.format_version} in {path}.'
            )
        return header, payload[prefix + length:]

    def read_header(self, path: Union[str, Path]) -> CheckpointHeader:
        return self._read_raw(Path(path))[0]

    def load(self, path: Union[str, Path]) -> Checkpoint:
        path = Path(path)
        header, data = self._read_raw(path)
        names = [entry.name for entry in header.tensors]
        duplicated = {name for name in names if names.count(name) > 1}
        if duplicated:
            raise DataIOError(
                f'Checkpoint {path} repeats tensors: {sorted(duplicated)}.'
            )
        arrays = {}
        for entry in header.tensors:
            storage = np.dtype(entry.dtype).newbyteorder('<')
            count = int(np.prod(entry.shape, dtype=np.int64))
            end = entry.byte_offset + count * storage.itemsize
            if end > len(data):
                raise DataIOError(f'Checkpoint {path} is truncated.')
            arrays[entry.name] = np.frombuffer(
                data, dtype=storage, count=count, offset=entry.byte_offset,
            ).astype(np.float64).reshape(entry.shape)
        model = _build(header.architecture)
        expected = {name for name, _ in _named_arrays(model)}
        if expected != set(arrays):
            raise DataIOError(
                f'Checkpoint {path} does not match its architecture: '
                f'{sorted(expected ^ set(arrays))}.'
            )
        for namespace, group in model.groups():
            _load_group(group, namespace, arrays, path)
        return Checkpoint(header=header, model=model)


def _load_group(
    group: ParameterGroup,
    namespace: str,
    arrays: dict[str, np.ndarray],
    path: Path,
) -> None:
    prefix = f'{namespace}/'
    try:
        group.load_arrays({
            name[len(prefix):]: array
            for name, array in arrays.items() if name.startswith(prefix)
        })
    except ContractViolation as error:
        raise DataIOError(f'Checkpoint {path}: {error.detail}')


checkpoint_store = CheckpointStore()
