import logging
from typing import Callable, Optional, Sequence, Union

import numpy as np

from siamprint.autodiff.graph import backward
from siamprint.autodiff.tensor import Tensor, no_grad, record_branches
from siamprint.constants import (
    GRADCHECK_DENOMINATOR_FLOOR,
    GRADCHECK_EPSILON,
    GRADCHECK_RESAMPLE_FACTOR,
)
from siamprint.core.exceptions import ContractViolation

logger = logging.getLogger(__name__)

Inputs = Union[Tensor, Sequence[Tensor]]
Branches = list[np.ndarray]


def relative_error(analytic: float, numeric: float) -> float:
    denominator = max(
        abs(analytic), abs(numeric), GRADCHECK_DENOMINATOR_FLOOR,
    )
    return abs(analytic - numeric) / denominator


def _scalar(value: Tensor) -> float:
    if value.size != 1:
        raise ContractViolation(
            f'gradcheck needs a scalar-valued function, got {value.shape}.'
        )
    return value.item()


def _evaluate(
    f: Callable[[Inputs], Tensor],
    inputs: Inputs,
) -> tuple[float, Branches]:
    with no_grad(), record_branches() as branches:
        value = _scalar(f(inputs))
    return value, branches


def same_branches(first: Branches, second: Branches) -> bool:
    return len(first) == len(second) and all(
        np.array_equal(a, b) for a, b in zip(first, second)
    )


def gradcheck(
    f: Callable[[Inputs], Tensor],
    inputs: Inputs,
    epsilon: float = GRADCHECK_EPSILON,
    max_coordinates: Optional[int] = None,
    seed: int = 0,
    skip_kinks: bool = True,
) -> float:
    """Max relative error between backprop and central differences.

    ``f`` is called with ``inputs`` unchanged; the data of every input
    tensor is perturbed in place one coordinate at a time and restored.
    With ``max_coordinates`` set, coordinates per tensor are drawn in a
    seeded random order until that many have been checked.

    A coordinate whose +/- ``epsilon`` evaluations take a different branch
    of any ReLU, maxpool or clip than the unperturbed one straddles a kink
    and is skipped; with sampling, another coordinate is drawn instead.
    """
    tensors = [inputs] if isinstance(inputs, Tensor) else list(inputs)
    for tensor in tensors:
        if not tensor.requires_grad:
            raise ContractViolation('gradcheck inputs must require grad.')
        if tensor.data.dtype != np.float64:
            raise ContractViolation('gradcheck runs in float64 only.')
        tensor.zero_grad()

    with record_branches() as reference:
        loss = _check_loss(f(inputs))
    backward(loss)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for tensor in tensors:
        analytic = (
            tensor.grad if tensor.grad is not None
            else np.zeros_like(tensor.data)
        )
        flat = tensor.data.reshape(-1)
        order = np.arange(flat.size)
        wanted, attempts = flat.size, flat.size
        if max_coordinates is not None and flat.size > max_coordinates:
            order = rng.permutation(flat.size)
            wanted = max_coordinates
            attempts = min(
                flat.size, max_coordinates * GRADCHECK_RESAMPLE_FACTOR,
            )
        checked = skipped = 0
        for index in order[:attempts]:
            if checked == wanted:
                break
            original = flat[index]
            flat[index] = original + epsilon
            plus, plus_branches = _evaluate(f, inputs)
            flat[index] = original - epsilon
            minus, minus_branches = _evaluate(f, inputs)
            flat[index] = original
            if skip_kinks and not (
                same_branches(reference, plus_branches)
                and same_branches(reference, minus_branches)
            ):
                skipped += 1
                continue
            numeric = (plus - minus) / (2.0 * epsilon)
            error = relative_error(float(analytic.flat[index]), numeric)
            worst = max(worst, error)
            checked += 1
        if checked == 0:
            raise ContractViolation(
                f'gradcheck found no smooth coordinate in a tensor of shape '
                f'{tensor.shape} ({skipped} straddle a kink).'
            )
        if skipped:
            logger.debug(
                'gradcheck skipped %d coordinates next to a kink', skipped,
            )
    logger.debug('gradcheck max relative error %.3e', worst)
    return worst


def _check_loss(loss: Tensor) -> Tensor:
    _scalar(loss)
    return loss
