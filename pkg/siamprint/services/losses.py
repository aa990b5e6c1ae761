from typing import Optional

import numpy as np

from siamprint.autodiff import functional as F
from siamprint.autodiff.tensor import Tensor, as_tensor
from siamprint.constants import NUM_CLASSES, PROB_CLIP
from siamprint.core.exceptions import ContractViolation
from siamprint.schemas.config import FocalConfig


def check_target(probs: Tensor, target: np.ndarray) -> np.ndarray:
    target = np.asarray(target)
    if probs.ndim != 4 or probs.shape[1] != NUM_CLASSES:
        raise ContractViolation(
            f'Expected (N, {NUM_CLASSES}, H, W) probabilities, got '
            f'{probs.shape}.'
        )
    expected = (probs.shape[0],) + probs.shape[2:]
    if target.shape != expected:
        raise ContractViolation(
            f'Target shape {target.shape} does not match {expected}.'
        )
    if not np.issubdtype(target.dtype, np.integer):
        if not np.array_equal(target, np.round(target)):
            raise ContractViolation('Target must hold class indices.')
        target = target.astype(np.int64)
    if target.size and (target.min() < 0 or target.max() >= NUM_CLASSES):
        raise ContractViolation(
            f'Target classes must lie in 0..{NUM_CLASSES - 1}.'
        )
    return target


def one_hot(target: np.ndarray) -> np.ndarray:
    """(N, H, W) class indices to an (N, C, H, W) indicator array."""
    return (
        target[:, None, :, :] == np.arange(NUM_CLASSES)[None, :, None, None]
    ).astype(np.float64)


def true_class_probability(probs: Tensor, target: np.ndarray) -> Tensor:
    picked = F.sum(F.mul(probs, one_hot(target)), axis=1)
    return F.clip(picked, PROB_CLIP, 1.0 - PROB_CLIP)


def focal_loss(
    probs: Tensor,
    target: np.ndarray,
    config: Optional[FocalConfig] = None,
) -> Tensor:
    """Mean over pixels of -alpha_c (1 - p)^gamma log p for the true class."""
    config = config or FocalConfig()
    probs = as_tensor(probs)
    target = check_target(probs, target)
    p_true = true_class_probability(probs, target)
    alpha = np.asarray(config.alpha_or_uniform(), dtype=np.float64)[target]
    per_pixel = F.mul(F.neg(F.log(p_true)), alpha)
    if config.gamma > 0:
        per_pixel = F.mul(
            per_pixel, F.pow_scalar(F.sub(1.0, p_true), config.gamma),
        )
    return F.mean(per_pixel)


def cross_entropy(probs: Tensor, target: np.ndarray) -> Tensor:
    return focal_loss(probs, target, FocalConfig(gamma=0.0))


def mse_loss(prediction: Tensor, target: np.ndarray) -> Tensor:
    prediction = as_tensor(prediction)
    target = np.asarray(target, dtype=np.float64)
    if prediction.shape != target.shape:
        raise ContractViolation(
            f'Prediction shape {prediction.shape} does not match target '
            f'{target.shape}.'
        )
    return F.mean(F.pow_scalar(F.sub(prediction, target), 2.0))
