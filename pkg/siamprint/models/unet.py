import numpy as np

from siamprint.autodiff import functional as F
from siamprint.autodiff.tensor import Tensor
from siamprint.constants import SPATIAL_MULTIPLE, UNET_DEPTH
from siamprint.core.exceptions import ContractViolation
from siamprint.models.base import Mode, ParameterGroup, check_mode
from siamprint.schemas.config import UNetConfig


def check_spatial(image: Tensor, input_channels: int) -> None:
    if image.ndim != 4 or image.shape[1] != input_channels:
        raise ContractViolation(
            f'Expected an (N, {input_channels}, H, W) image, got '
            f'{image.shape}.'
        )
    height, width = image.shape[2:]
    if height % SPATIAL_MULTIPLE or width % SPATIAL_MULTIPLE:
        raise ContractViolation(
            f'Image size {height}x{width} is not divisible by '
            f'{SPATIAL_MULTIPLE}.'
        )


class Encoder(ParameterGroup):
    """Five conv-BN-ReLU x2 blocks; 2x2 max pooling after the first four."""

    def __init__(self, config: UNetConfig, rng: np.random.Generator):
        super().__init__()
        self.config = config
        in_channels = config.input_channels
        for level, width in enumerate(config.channel_ladder(), start=1):
            self.add_conv_bn(f'block{level}.0', in_channels, width, rng)
            self.add_conv_bn(f'block{level}.1', width, width, rng)
            in_channels = width

    def forward(
        self, image: Tensor, mode: Mode,
    ) -> tuple[Tensor, list[Tensor]]:
        training = check_mode(mode)
        check_spatial(image, self.config.input_channels)
        skips = []
        x = image
        for level in range(1, UNET_DEPTH + 1):
            x = self.conv_bn_relu(f'block{level}.0', x, training)
            x = self.conv_bn_relu(f'block{level}.1', x, training)
            if level < UNET_DEPTH:
                skips.append(x)
                x, _ = F.maxpool2d(x)
        return x, skips


class Decoder(ParameterGroup):
    """Four upsampling blocks and a 1x1 projection to the output channels.

    Each block: 2x2 transposed conv halving the channels, concatenation with
    the matching encoder output, then conv-BN-ReLU twice.
    """

    def __init__(self, config: UNetConfig, rng: np.random.Generator):
        super().__init__()
        self.config = config
        ladder = config.channel_ladder()
        for level in range(UNET_DEPTH - 1, 0, -1):
            deep, shallow = ladder[level], ladder[level - 1]
            self.add_conv_transpose(f'up{level}', deep, shallow, rng)
            self.add_conv_bn(f'block{level}.0', 2 * shallow, shallow, rng)
            self.add_conv_bn(f'block{level}.1', shallow, shallow, rng)
        self.add_conv('out', ladder[0], config.output_channels, 1, rng)

    def forward(
        self,
        bottleneck: Tensor,
        skips: list[Tensor],
        mode: Mode,
    ) -> Tensor:
        training = check_mode(mode)
        x = bottleneck
        for level in range(UNET_DEPTH - 1, 0, -1):
            x = self.conv_transpose(f'up{level}', x)
            x = F.concat_channels(skips[level - 1], x)
            x = self.conv_bn_relu(f'block{level}.0', x, training)
            x = self.conv_bn_relu(f'block{level}.1', x, training)
        return self.conv('out', x, padding=0)


class UNet:

    def __init__(self, config: UNetConfig, encoder: Encoder, decoder: Decoder):
        self.config = config
        self.encoder = encoder
        self.decoder = decoder

    def groups(self) -> list[tuple[str, ParameterGroup]]:
        return [('encoder', self.encoder), ('decoder', self.decoder)]

    def named_parameters(self):
        for namespace, group in self.groups():
            yield from group.named_parameters(f'{namespace}/')

    def parameters(self) -> list[Tensor]:
        return [tensor for _, tensor in self.named_parameters()]

    def parameter_count(self) -> int:
        return sum(group.parameter_count() for _, group in self.groups())

    def zero_grad(self) -> None:
        for _, group in self.groups():
            group.zero_grad()

    def forward(self, image: Tensor, mode: Mode) -> Tensor:
        return unet_forward(self, image, mode)


def build_unet(config: UNetConfig, seed: int) -> UNet:
    rng = np.random.default_rng(seed)
    encoder = Encoder(config, rng)
    decoder = Decoder(config, rng)
    return UNet(config, encoder, decoder)


def unet_forward(params: UNet, image: Tensor, mode: Mode) -> Tensor:
    bottleneck, skips = params.encoder.forward(image, mode)
    return params.decoder.forward(bottleneck, skips, mode)
