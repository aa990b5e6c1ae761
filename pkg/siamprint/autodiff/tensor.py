import contextlib
import threading
from typing import Any, Callable, Iterator, Optional, Sequence, Union

import numpy as np

from siamprint.core.exceptions import ContractViolation

ArrayLike = Union[np.ndarray, float, int, Sequence[Any]]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_grad_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_grad_state, 'enabled', True)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Run ops without recording graph nodes (per thread)."""
    previous = is_grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = previous


_branch_state = threading.local()


@contextlib.contextmanager
def record_branches() -> Iterator[list[np.ndarray]]:
    """Collect the branch taken by every piecewise op run in the block.

    ReLU records its sign pattern, maxpool its window winners and clip its
    in-range mask, in call order. Two evaluations of the same function lie
    on one smooth piece when their records are equal.
    """
    previous = getattr(_branch_state, 'log', None)
    log: list[np.ndarray] = []
    _branch_state.log = log
    try:
        yield log
    finally:
        _branch_state.log = previous


def note_branch(choice: np.ndarray) -> None:
    log = getattr(_branch_state, 'log', None)
    if log is not None:
        log.append(choice)


class Tensor:
    """Dense float64 array with optional gradient tracking.

    ``data`` is treated as immutable once the tensor is part of a graph;
    only ``grad`` is written to by the backward pass. Parameter tensors are
    the exception: the optimizer updates their ``data`` in place between
    steps, after the graph of the previous step has been discarded.
    """

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        name: Optional[str] = None,
    ):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self.op = 'leaf'
        self._parents: tuple['Tensor', ...] = ()
        self._backward: Optional[BackwardFn] = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractViolation(
                f'item() needs a single-element tensor, got {self.shape}.'
            )
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> 'Tensor':
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, grad: np.ndarray) -> None:
        if grad.shape != self.shape:
            raise ContractViolation(
                f'Gradient shape {grad.shape} does not match tensor shape '
                f'{self.shape}.'
            )
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64)
        else:
            self.grad += grad

    def backward(self) -> None:
        from siamprint.autodiff.graph import backward

        backward(self)

    def __add__(self, other):
        from siamprint.autodiff import functional as F

        return F.add(self, other)

    def __radd__(self, other):
        from siamprint.autodiff import functional as F

        return F.add(other, self)

    def __sub__(self, other):
        from siamprint.autodiff import functional as F

        return F.sub(self, other)

    def __rsub__(self, other):
        from siamprint.autodiff import functional as F

        return F.sub(other, self)

    def __mul__(self, other):
        from siamprint.autodiff import functional as F

        return F.mul(self, other)

    def __rmul__(self, other):
        from siamprint.autodiff import functional as F

        return F.mul(other, self)

    def __neg__(self):
        from siamprint.autodiff import functional as F

        return F.neg(self)

    def __pow__(self, exponent: float):
        from siamprint.autodiff import functional as F

        return F.pow_scalar(self, exponent)

    def __repr__(self) -> str:
        label = f', name={self.name!r}' if self.name else ''
        return (
            f'Tensor(shape={self.shape}, op={self.op!r}, '
            f'requires_grad={self.requires_grad}{label})'
        )


def as_tensor(value: Union[Tensor, ArrayLike]) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def make_result(
    data: np.ndarray,
    parents: Sequence[Tensor],
    op: str,
    backward_fn: BackwardFn,
) -> Tensor:
    """Wrap an op output, recording the node only when a parent needs grad."""
    out = Tensor(data)
    out.op = op
    if is_grad_enabled() and any(parent.requires_grad for parent in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out
