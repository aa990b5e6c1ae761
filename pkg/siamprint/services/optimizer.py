from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from siamprint.autodiff.tensor import Tensor
from siamprint.constants import ADAM_BETA1, ADAM_BETA2, ADAM_EPS
from siamprint.core.exceptions import ContractViolation
from siamprint.schemas.config import AdamConfig


@dataclass
class OptimizerState:
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    step: int = 0

    def __len__(self) -> int:
        return len(self.m)


def init_state(params: Sequence[np.ndarray]) -> OptimizerState:
    return OptimizerState(
        m=[np.zeros_like(param) for param in params],
        v=[np.zeros_like(param) for param in params],
    )


def adam_step(
    params: Sequence[np.ndarray],
    grads: Sequence[Optional[np.ndarray]],
    state: OptimizerState,
    lr: float,
    beta1: float = ADAM_BETA1,
    beta2: float = ADAM_BETA2,
    eps: float = ADAM_EPS,
) -> OptimizerState:
    """Bias-corrected Adam update, applied to ``params`` in place.

    A ``None`` gradient counts as zero.
    """
    if not (len(params) == len(grads) == len(state)):
        raise ContractViolation(
            f'{len(params)} parameters, {len(grads)} gradients and '
            f'{len(state)} state entries.'
        )
    state.step += 1
    bc1 = 1.0 - beta1 ** state.step
    bc2 = 1.0 - beta2 ** state.step
    for index, (param, grad) in enumerate(zip(params, grads)):
        if grad is None:
            grad = np.zeros_like(param)
        if grad.shape != param.shape or state.m[index].shape != param.shape:
            raise ContractViolation(
                f'Shape mismatch at parameter {index}: parameter '
                f'{param.shape}, gradient {grad.shape}, state '
                f'{state.m[index].shape}.'
            )
        m, v = state.m[index], state.v[index]
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * (grad * grad)
        param -= (lr / bc1) * m / (np.sqrt(v / bc2) + eps)
    return state


def unique_parameters(params: Iterable[Tensor]) -> list[Tensor]:
    """One entry per physical tensor, in first-seen order."""
    seen, unique = set(), []
    for param in params:
        if id(param) not in seen:
            seen.add(id(param))
            unique.append(param)
    return unique


class Adam:

    def __init__(
        self,
        params: Iterable[Tensor],
        lr: float,
        config: Optional[AdamConfig] = None,
    ):
        config = config or AdamConfig()
        self.params = unique_parameters(params)
        self.lr = lr
        self.beta1 = config.beta1
        self.beta2 = config.beta2
        self.eps = config.eps
        self.state = init_state([param.data for param in self.params])

    def zero_grad(self) -> None:
        for param in self.params:
            param.zero_grad()

    def step(self) -> None:
        adam_step(
            [param.data for param in self.params],
            [param.grad for param in self.params],
            self.state,
            self.lr,
            self.beta1,
            self.beta2,
            self.eps,
        )
