"""Differentiable tensor operations used by the networks.

Every op takes and returns :class:`Tensor` objects, computes its forward
result eagerly in float64 and registers a closure that maps the output
gradient to one gradient per parent.
"""
from typing import Optional, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from siamprint.autodiff.tensor import (
    Tensor,
    as_tensor,
    make_result,
    note_branch,
)
from siamprint.constants import BN_EPS, BN_MOMENTUM
from siamprint.core.exceptions import ContractViolation

Operand = Union[Tensor, np.ndarray, float, int]
Axis = Optional[Union[int, tuple[int, ...]]]


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_image(x: Tensor, name: str) -> None:
    if x.ndim != 4:
        raise ContractViolation(
            f'{name} expects a (N, C, H, W) tensor, got shape {x.shape}.'
        )


def add(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)

    return make_result(a.data + b.data, (a, b), 'add', backward)


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(-grad, b.shape)

    return make_result(a.data - b.data, (a, b), 'sub', backward)


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(grad):
        return (
            _unbroadcast(grad * b.data, a.shape),
            _unbroadcast(grad * a.data, b.shape),
        )

    return make_result(a.data * b.data, (a, b), 'mul', backward)


def neg(x: Operand) -> Tensor:
    x = as_tensor(x)
    return make_result(-x.data, (x,), 'neg', lambda grad: (-grad,))


def pow_scalar(x: Operand, exponent: float) -> Tensor:
    x = as_tensor(x)
    exponent = float(exponent)

    def backward(grad):
        if exponent == 0.0:
            return (np.zeros_like(x.data),)
        return (grad * exponent * x.data ** (exponent - 1.0),)

    return make_result(x.data ** exponent, (x,), 'pow', backward)


def sqrt(x: Operand) -> Tensor:
    x = as_tensor(x)
    out = np.sqrt(x.data)
    return make_result(out, (x,), 'sqrt', lambda grad: (grad / (2.0 * out),))


def log(x: Operand) -> Tensor:
    x = as_tensor(x)
    return make_result(np.log(x.data), (x,), 'log', lambda grad: (
        grad / x.data,
    ))


def clip(x: Operand, low: float, high: float) -> Tensor:
    """Clamp to [low, high]; gradient is zero outside the interval."""
    x = as_tensor(x)
    inside = (x.data >= low) & (x.data <= high)
    note_branch(inside)
    return make_result(
        np.clip(x.data, low, high), (x,), 'clip',
        lambda grad: (grad * inside,),
    )


def sum(x: Operand, axis: Axis = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)

    def backward(grad):
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        return (np.broadcast_to(grad, x.shape).copy(),)

    return make_result(
        np.sum(x.data, axis=axis, keepdims=keepdims), (x,), 'sum', backward,
    )


def mean(x: Operand, axis: Axis = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    count = x.size if axis is None else int(np.prod(
        [x.shape[a] for a in np.atleast_1d(axis)]
    ))
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def relu(x: Operand) -> Tensor:
    x = as_tensor(x)
    positive = x.data > 0
    note_branch(positive)
    return make_result(
        np.where(positive, x.data, 0.0), (x,), 'relu',
        lambda grad: (grad * positive,),
    )


def softmax_channels(x: Operand) -> Tensor:
    """Stable softmax over axis 1 of an (N, C, H, W) tensor."""
    x = as_tensor(x)
    _check_image(x, 'softmax_channels')
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    out = exp / exp.sum(axis=1, keepdims=True)

    def backward(grad):
        return (out * (grad - (grad * out).sum(axis=1, keepdims=True)),)

    return make_result(out, (x,), 'softmax', backward)


def concat_channels(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_image(a, 'concat_channels')
    _check_image(b, 'concat_channels')
    if (a.shape[0], a.shape[2:]) != (b.shape[0], b.shape[2:]):
        raise ContractViolation(
            f'concat_channels needs matching N, H, W; got {a.shape} and '
            f'{b.shape}.'
        )
    split = a.shape[1]

    def backward(grad):
        return grad[:, :split], grad[:, split:]

    return make_result(
        np.concatenate([a.data, b.data], axis=1), (a, b), 'concat', backward,
    )


def slice_channels(x: Operand, start: int, stop: int) -> Tensor:
    x = as_tensor(x)
    _check_image(x, 'slice_channels')
    if not 0 <= start < stop <= x.shape[1]:
        raise ContractViolation(
            f'Channel slice [{start}:{stop}] is outside {x.shape[1]} '
            'channels.'
        )

    def backward(grad):
        full = np.zeros_like(x.data)
        full[:, start:stop] = grad
        return (full,)

    return make_result(x.data[:, start:stop], (x,), 'slice', backward)


def conv2d(
    x: Operand,
    kernel: Operand,
    bias: Optional[Operand] = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    x, kernel = as_tensor(x), as_tensor(kernel)
    _check_image(x, 'conv2d input')
    if kernel.ndim != 4:
        raise ContractViolation(
            f'conv2d kernel must be (Cout, Cin, kh, kw), got {kernel.shape}.'
        )
    n, channels, height, width = x.shape
    out_channels, kernel_channels, kh, kw = kernel.shape
    if channels != kernel_channels:
        raise ContractViolation(
            f'conv2d input has {channels} channels but kernel expects '
            f'{kernel_channels}.'
        )
    if stride < 1 or padding < 0:
        raise ContractViolation('conv2d needs stride >= 1 and padding >= 0.')
    out_h = (height + 2 * padding - kh) // stride + 1
    out_w = (width + 2 * padding - kw) // stride + 1
    if out_h < 1 or out_w < 1:
        raise ContractViolation(
            f'conv2d kernel {kh}x{kw} does not fit input {height}x{width}.'
        )
    parents = [x, kernel]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (out_channels,):
            raise ContractViolation(
                f'conv2d bias must have shape ({out_channels},), got '
                f'{bias.shape}.'
            )
        parents.append(bias)

    pad_width = ((0, 0), (0, 0), (padding, padding), (padding, padding))
    padded = np.pad(x.data, pad_width) if padding else x.data
    windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride][:, :, :out_h, :out_w]
    out = np.tensordot(windows, kernel.data, axes=([1, 4, 5], [1, 2, 3]))
    out = out.transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def backward(grad):
        grad_x = grad_kernel = grad_bias = None
        if x.requires_grad:
            cols = np.tensordot(grad, kernel.data, axes=([1], [0]))
            grad_padded = np.zeros_like(padded)
            for i in range(kh):
                for j in range(kw):
                    grad_padded[
                        :, :,
                        i:i + stride * out_h:stride,
                        j:j + stride * out_w:stride,
                    ] += cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            grad_x = grad_padded[
                :, :, padding:padding + height, padding:padding + width,
            ]
        if kernel.requires_grad:
            grad_kernel = np.tensordot(
                grad, windows, axes=([0, 2, 3], [0, 2, 3]),
            )
        if bias is not None and bias.requires_grad:
            grad_bias = grad.sum(axis=(0, 2, 3))
        return grad_x, grad_kernel, grad_bias

    return make_result(np.ascontiguousarray(out), parents, 'conv2d', backward)


def conv_transpose2d(
    x: Operand,
    kernel: Operand,
    bias: Optional[Operand] = None,
    stride: int = 2,
) -> Tensor:
    """Transposed convolution with a (Cin, Cout, s, s) kernel and stride s.

    Kernel size equals stride, so output windows never overlap and the
    spatial size is multiplied by exactly ``stride``.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    _check_image(x, 'conv_transpose2d input')
    if min(x.shape) < 1:
        raise ContractViolation(
            f'conv_transpose2d needs positive dims, got {x.shape}.'
        )
    if kernel.ndim != 4 or kernel.shape[0] != x.shape[1]:
        raise ContractViolation(
            f'conv_transpose2d kernel {kernel.shape} does not match input '
            f'channels {x.shape[1]}.'
        )
    if kernel.shape[2:] != (stride, stride):
        raise ContractViolation(
            f'conv_transpose2d supports kernel size == stride ({stride}), '
            f'got {kernel.shape[2:]}.'
        )
    n, _, height, width = x.shape
    out_channels = kernel.shape[1]
    parents = [x, kernel]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (out_channels,):
            raise ContractViolation(
                f'conv_transpose2d bias must have shape ({out_channels},), '
                f'got {bias.shape}.'
            )
        parents.append(bias)

    out = np.tensordot(x.data, kernel.data, axes=([1], [0]))
    out = out.transpose(0, 3, 1, 4, 2, 5).reshape(
        n, out_channels, height * stride, width * stride,
    )
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def backward(grad):
        grad_x = grad_kernel = grad_bias = None
        blocks = grad.reshape(n, out_channels, height, stride, width, stride)
        if x.requires_grad:
            grad_x = np.tensordot(
                blocks, kernel.data, axes=([1, 3, 5], [1, 2, 3]),
            ).transpose(0, 3, 1, 2)
        if kernel.requires_grad:
            grad_kernel = np.tensordot(
                x.data, blocks, axes=([0, 2, 3], [0, 2, 4]),
            )
        if bias is not None and bias.requires_grad:
            grad_bias = grad.sum(axis=(0, 2, 3))
        return grad_x, grad_kernel, grad_bias

    return make_result(
        np.ascontiguousarray(out), parents, 'conv_transpose2d', backward,
    )


def maxpool2d(x: Operand) -> tuple[Tensor, np.ndarray]:
    """2x2 max pooling, stride 2.

    Returns the pooled tensor and the argmax index (0..3, row-major inside
    each window). Ties go to the first element in row-major order.
    """
    x = as_tensor(x)
    _check_image(x, 'maxpool2d')
    n, channels, height, width = x.shape
    if height % 2 or width % 2:
        raise ContractViolation(
            f'maxpool2d needs even H and W, got {height}x{width}.'
        )
    blocks = x.data.reshape(n, channels, height // 2, 2, width // 2, 2)
    blocks = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(
        n, channels, height // 2, width // 2, 4,
    )
    indices = blocks.argmax(axis=-1)
    note_branch(indices)
    out = np.take_along_axis(blocks, indices[..., None], axis=-1)[..., 0]

    def backward(grad):
        routed = np.zeros_like(blocks)
        np.put_along_axis(routed, indices[..., None], grad[..., None], axis=-1)
        routed = routed.reshape(n, channels, height // 2, width // 2, 2, 2)
        return (routed.transpose(0, 1, 2, 4, 3, 5).reshape(x.shape),)

    return make_result(out, (x,), 'maxpool2d', backward), indices


def upsample_nearest2d(x: Operand, factor: int = 2) -> Tensor:
    x = as_tensor(x)
    _check_image(x, 'upsample_nearest2d')
    n, channels, height, width = x.shape
    out = x.data.repeat(factor, axis=2).repeat(factor, axis=3)

    def backward(grad):
        return (grad.reshape(
            n, channels, height, factor, width, factor,
        ).sum(axis=(3, 5)),)

    return make_result(out, (x,), 'upsample_nearest2d', backward)


def batchnorm2d(
    x: Operand,
    gamma: Operand,
    beta: Operand,
    running_mean: Optional[np.ndarray],
    running_var: Optional[np.ndarray],
    training: bool,
    eps: float = BN_EPS,
    momentum: float = BN_MOMENTUM,
) -> Tensor:
    """Per-channel batch normalization over (N, H, W).

    Training mode normalizes with the biased batch variance and updates the
    running buffers in place (running variance uses the unbiased estimate).
    Eval mode normalizes with the running buffers.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    _check_image(x, 'batchnorm2d')
    channels = x.shape[1]
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise ContractViolation(
            f'batchnorm2d affine parameters must have shape ({channels},).'
        )
    axes = (0, 2, 3)
    count = x.shape[0] * x.shape[2] * x.shape[3]
    if training:
        batch_mean = x.data.mean(axis=axes)
        batch_var = x.data.var(axis=axes)
        if running_mean is not None and running_var is not None:
            unbiased = batch_var * count / (count - 1) if count > 1 else (
                batch_var
            )
            running_mean *= 1.0 - momentum
            running_mean += momentum * batch_mean
            running_var *= 1.0 - momentum
            running_var += momentum * unbiased
        mean_, var_ = batch_mean, batch_var
    else:
        if running_mean is None or running_var is None:
            raise ContractViolation(
                'batchnorm2d in eval mode needs running statistics.'
            )
        mean_, var_ = running_mean.copy(), running_var.copy()

    inv_std = 1.0 / np.sqrt(var_ + eps)
    x_hat = (
        (x.data - mean_[None, :, None, None]) * inv_std[None, :, None, None]
    )
    out = (
        gamma.data[None, :, None, None] * x_hat
        + beta.data[None, :, None, None]
    )

    def backward(grad):
        grad_gamma = (grad * x_hat).sum(axis=axes)
        grad_beta = grad.sum(axis=axes)
        grad_x_hat = grad * gamma.data[None, :, None, None]
        scale = inv_std[None, :, None, None]
        if training:
            grad_x = scale / count * (
                count * grad_x_hat
                - grad_x_hat.sum(axis=axes, keepdims=True)
                - x_hat * (grad_x_hat * x_hat).sum(axis=axes, keepdims=True)
            )
        else:
            grad_x = grad_x_hat * scale
        return grad_x, grad_gamma, grad_beta

    return make_result(out, (x, gamma, beta), 'batchnorm2d', backward)
