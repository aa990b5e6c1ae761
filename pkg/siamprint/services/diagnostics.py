import logging

import numpy as np

from siamprint.autodiff.gradcheck import gradcheck
from siamprint.autodiff.tensor import Tensor
from siamprint.constants import GRADCHECK_MODEL_THRESHOLD, NUM_CLASSES
from siamprint.core.exceptions import ContractViolation, GradcheckFailed
from siamprint.models.semi_siamese import build_semi_siamese
from siamprint.schemas.config import FocalConfig, ModelConfig, UNetConfig
from siamprint.services.losses import focal_loss

logger = logging.getLogger(__name__)

CHECKED_PARAMETERS = (
    'encoder_ref/block1.0.conv.weight',
    'encoder_cam/block1.0.conv.weight',
    'encoder_ref/block5.1.bn.gamma',
    'decoder_shared/up4.weight',
    'decoder_shared/out.weight',
    'fcn_head/conv1.weight',
    'fcn_head/classifier.weight',
)


def model_gradcheck(
    size: int = 16,
    seed: int = 0,
    base_width: int = 16,
    coordinates: int = 8,
    batch: int = 2,
) -> dict[str, float]:
    """Finite-difference check of the focal loss of a full model.

    Returns the max relative error per checked parameter tensor.
    """
    if size % 16:
        raise ContractViolation(f'size must be a multiple of 16, got {size}.')
    rng = np.random.default_rng(seed)
    config = ModelConfig(unet=UNetConfig(base_width=base_width))
    model = build_semi_siamese(config, seed=seed)
    i_ref = Tensor(rng.uniform(size=(batch, 3, size, size)))
    i_cam = Tensor(rng.uniform(size=(batch, 3, size, size)))
    target = rng.integers(0, NUM_CLASSES, size=(batch, size, size))
    focal = FocalConfig()
    named = dict(model.named_parameters())

    def loss(_):
        return focal_loss(model.forward(i_ref, i_cam, 'train').probs, target,
                          focal)

    errors = {}
    for name in CHECKED_PARAMETERS:
        errors[name] = gradcheck(
            loss, named[name], max_coordinates=coordinates, seed=seed,
        )
        logger.info('gradcheck %s: %.3e', name, errors[name])
    return errors


def check_model_gradients(
    errors: dict[str, float],
    threshold: float = GRADCHECK_MODEL_THRESHOLD,
) -> float:
    worst = max(errors.values())
    if worst >= threshold:
        failing = [
            name for name, error in errors.items() if error >= threshold
        ]
        raise GradcheckFailed(
            f'Max relative error {worst:.3e} >= {threshold:g} in '
            f'{", ".join(failing)}.'
        )
    return worst
