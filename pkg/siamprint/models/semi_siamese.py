import logging
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from siamprint.autodiff import functional as F
from siamprint.autodiff.tensor import Tensor
from siamprint.constants import CHANGE_MAP_EPS
from siamprint.core.exceptions import ContractViolation
from siamprint.models.base import Mode, ParameterGroup
from siamprint.models.head import FCNHead
from siamprint.models.unet import Decoder, Encoder, UNet
from siamprint.schemas.config import ModelConfig

logger = logging.getLogger(__name__)

NAMESPACES = ('encoder_ref', 'encoder_cam', 'decoder_shared', 'fcn_head')


@dataclass
class SiameseOutput:
    f_ref: Tensor
    f_cam: Tensor
    change_map: Tensor
    probs: Tensor


class SemiSiameseModel:
    """Two encoders, one decoder used by both branches, and an FCN head.

    The decoder is a single :class:`Decoder` object referenced by both
    branch forwards, so its tensors receive the summed gradient of the two
    branches. With ``encoder_cam is encoder_ref`` the model is the fully
    shared Siamese variant.
    """

    def __init__(
        self,
        config: ModelConfig,
        encoder_ref: Encoder,
        encoder_cam: Encoder,
        decoder_shared: Decoder,
        fcn_head: FCNHead,
    ):
        self.config = config
        self.encoder_ref = encoder_ref
        self.encoder_cam = encoder_cam
        self.decoder_shared = decoder_shared
        self.fcn_head = fcn_head

    @property
    def tied_encoders(self) -> bool:
        return self.encoder_cam is self.encoder_ref

    @property
    def kind(self) -> str:
        return 'siamese' if self.tied_encoders else 'semi_siamese'

    def groups(self) -> list[tuple[str, ParameterGroup]]:
        """Physical parameter groups; an aliased encoder is listed once."""
        groups = [('encoder_ref', self.encoder_ref)]
        if not self.tied_encoders:
            groups.append(('encoder_cam', self.encoder_cam))
        groups.append(('decoder_shared', self.decoder_shared))
        groups.append(('fcn_head', self.fcn_head))
        return groups

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        for namespace, group in self.groups():
            yield from group.named_parameters(f'{namespace}/')

    def parameters(self) -> list[Tensor]:
        return [tensor for _, tensor in self.named_parameters()]

    def parameter_count(self) -> int:
        return sum(group.parameter_count() for _, group in self.groups())

    def zero_grad(self) -> None:
        for _, group in self.groups():
            group.zero_grad()

    def branch_forward(
        self,
        encoder: Encoder,
        image: Tensor,
        mode: Mode,
    ) -> Tensor:
        bottleneck, skips = encoder.forward(image, mode)
        # Both branches update the one set of decoder batchnorm buffers.
        return self.decoder_shared.forward(bottleneck, skips, mode)

    def forward(
        self, i_ref: Tensor, i_cam: Tensor, mode: Mode,
    ) -> SiameseOutput:
        return semi_siamese_forward(self, i_ref, i_cam, mode)


def build_semi_siamese(
    config: ModelConfig,
    seed: int,
    tie_encoders: bool = False,
) -> SemiSiameseModel:
    rng = np.random.default_rng(seed)
    encoder_ref = Encoder(config.unet, rng)
    encoder_cam = encoder_ref if tie_encoders else Encoder(config.unet, rng)
    decoder = Decoder(config.unet, rng)
    head = FCNHead(config.head, rng)
    return SemiSiameseModel(config, encoder_ref, encoder_cam, decoder, head)


def euclidean_change_map(f_ref: Tensor, f_cam: Tensor) -> Tensor:
    """sqrt(sum_k (f_ref - f_cam)^2 + eps) per pixel, shape (N, 1, H, W)."""
    if f_ref.shape != f_cam.shape:
        raise ContractViolation(
            f'Feature maps differ in shape: {f_ref.shape} vs {f_cam.shape}.'
        )
    diff = F.sub(f_ref, f_cam)
    squared = F.sum(F.mul(diff, diff), axis=1, keepdims=True)
    return F.sqrt(F.add(squared, CHANGE_MAP_EPS))


def semi_siamese_forward(
    model: SemiSiameseModel,
    i_ref: Tensor,
    i_cam: Tensor,
    mode: Mode,
) -> SiameseOutput:
    if i_ref.shape != i_cam.shape:
        raise ContractViolation(
            f'Reference and camera images differ in shape: {i_ref.shape} vs '
            f'{i_cam.shape}.'
        )
    f_ref = model.branch_forward(model.encoder_ref, i_ref, mode)
    f_cam = model.branch_forward(model.encoder_cam, i_cam, mode)
    change_map = euclidean_change_map(f_ref, f_cam)
    probs = model.fcn_head.forward(change_map)
    return SiameseOutput(f_ref, f_cam, change_map, probs)


def transfer_weights(
    pretrained: UNet,
    model: SemiSiameseModel,
    head_seed: Optional[int] = None,
) -> SemiSiameseModel:
    """Initialize both encoders and the shared decoder from a U-Net.

    The output projection is copied only when the channel counts agree;
    otherwise it keeps its fresh initialization. The head is re-initialized
    (from ``head_seed`` when given).
    """
    if not pretrained.config.backbone_matches(model.config.unet):
        raise ContractViolation(
            'Pre-trained U-Net config does not match the model backbone: '
            f'{pretrained.config} vs {model.config.unet}.'
        )
    model.encoder_ref.copy_from(pretrained.encoder)
    if not model.tied_encoders:
        model.encoder_cam.copy_from(pretrained.encoder)
    skipped = model.decoder_shared.copy_from(
        pretrained.decoder, skip_mismatched=True,
    )
    if skipped:
        logger.info(
            'Transfer kept fresh weights for %s (output channels differ).',
            ', '.join(skipped),
        )
    if head_seed is not None:
        model.fcn_head.reinitialize(np.random.default_rng(head_seed))
    logger.info('Transferred pre-trained U-Net weights into %s.', model.kind)
    return model
