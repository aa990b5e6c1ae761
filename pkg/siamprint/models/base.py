from typing import Iterator, Literal

import numpy as np

from siamprint.autodiff import functional as F
from siamprint.autodiff.tensor import Tensor
from siamprint.core.exceptions import ContractViolation

Mode = Literal['train', 'eval']
MODES = ('train', 'eval')


def check_mode(mode: str) -> bool:
    """Return True for train mode; reject anything but train/eval."""
    if mode not in MODES:
        raise ContractViolation(f'mode must be train or eval, got {mode!r}.')
    return mode == 'train'


def he_uniform(
    rng: np.random.Generator,
    shape: tuple[int, ...],
    fan_in: int,
) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class ParameterGroup:
    """Named trainable tensors plus non-trainable buffers.

    Subclasses declare their layers in ``__init__`` through the ``add_*``
    helpers and use ``conv``/``batchnorm``/``conv_bn_relu`` in ``forward``.
    """

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def add_param(self, name: str, array: np.ndarray) -> Tensor:
        if name in self.params:
            raise ContractViolation(f'Parameter {name!r} declared twice.')
        tensor = Tensor(array, requires_grad=True, name=name)
        self.params[name] = tensor
        return tensor

    def add_conv(
        self,
        name: str,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
    ) -> None:
        self.add_param(f'{name}.weight', he_uniform(
            rng,
            (out_channels, in_channels, kernel_size, kernel_size),
            in_channels * kernel_size * kernel_size,
        ))
        self.add_param(f'{name}.bias', np.zeros(out_channels))

    def add_conv_transpose(
        self,
        name: str,
        in_channels: int,
        out_channels: int,
        rng: np.random.Generator,
        stride: int = 2,
    ) -> None:
        self.add_param(f'{name}.weight', he_uniform(
            rng,
            (in_channels, out_channels, stride, stride),
            in_channels * stride * stride,
        ))
        self.add_param(f'{name}.bias', np.zeros(out_channels))

    def add_batchnorm(self, name: str, channels: int) -> None:
        self.add_param(f'{name}.gamma', np.ones(channels))
        self.add_param(f'{name}.beta', np.zeros(channels))
        self.buffers[f'{name}.running_mean'] = np.zeros(channels)
        self.buffers[f'{name}.running_var'] = np.ones(channels)

    def conv(self, name: str, x: Tensor, padding: int = 1) -> Tensor:
        return F.conv2d(
            x,
            self.params[f'{name}.weight'],
            self.params[f'{name}.bias'],
            stride=1,
            padding=padding,
        )

    def conv_transpose(self, name: str, x: Tensor) -> Tensor:
        return F.conv_transpose2d(
            x, self.params[f'{name}.weight'], self.params[f'{name}.bias'],
        )

    def batchnorm(self, name: str, x: Tensor, training: bool) -> Tensor:
        return F.batchnorm2d(
            x,
            self.params[f'{name}.gamma'],
            self.params[f'{name}.beta'],
            self.buffers[f'{name}.running_mean'],
            self.buffers[f'{name}.running_var'],
            training=training,
        )

    def conv_bn_relu(self, name: str, x: Tensor, training: bool) -> Tensor:
        x = self.conv(f'{name}.conv', x)
        x = self.batchnorm(f'{name}.bn', x, training)
        return F.relu(x)

    def add_conv_bn(
        self,
        name: str,
        in_channels: int,
        out_channels: int,
        rng: np.random.Generator,
    ) -> None:
        self.add_conv(f'{name}.conv', in_channels, out_channels, 3, rng)
        self.add_batchnorm(f'{name}.bn', out_channels)

    def named_parameters(
        self, prefix: str = '',
    ) -> Iterator[tuple[str, Tensor]]:
        for name, tensor in self.params.items():
            yield f'{prefix}{name}', tensor

    def named_buffers(
        self, prefix: str = '',
    ) -> Iterator[tuple[str, np.ndarray]]:
        for name, array in self.buffers.items():
            yield f'{prefix}{name}', array

    def parameter_count(self) -> int:
        return int(sum(tensor.size for tensor in self.params.values()))

    def zero_grad(self) -> None:
        for tensor in self.params.values():
            tensor.zero_grad()

    def state_arrays(self) -> dict[str, np.ndarray]:
        state = {name: tensor.data for name, tensor in self.params.items()}
        state.update(self.buffers)
        return state

    def copy_from(
        self,
        other: 'ParameterGroup',
        skip_mismatched: bool = False,
    ) -> list[str]:
        """Copy parameter and buffer values in place; return skipped names."""
        source = other.state_arrays()
        target = self.state_arrays()
        if set(source) != set(target):
            raise ContractViolation(
                'Parameter groups differ in layout: '
                f'{sorted(set(source) ^ set(target))}.'
            )
        skipped = []
        for name, array in target.items():
            if array.shape != source[name].shape:
                if skip_mismatched:
                    skipped.append(name)
                    continue
                raise ContractViolation(
                    f'Shape mismatch for {name!r}: {source[name].shape} vs '
                    f'{array.shape}.'
                )
            np.copyto(array, source[name])
        return skipped

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        target = self.state_arrays()
        missing = set(target) - set(arrays)
        if missing:
            raise ContractViolation(f'Missing tensors: {sorted(missing)}.')
        for name, array in target.items():
            if arrays[name].shape != array.shape:
                raise ContractViolation(
                    f'Shape mismatch for {name!r}: expected {array.shape}, '
                    f'got {arrays[name].shape}.'
                )
            np.copyto(array, arrays[name])
