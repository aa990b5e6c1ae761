import numpy as np
import pytest

from siamprint.autodiff import (
    Graph,
    Tensor,
    backward,
    batchnorm2d,
    concat_channels,
    conv2d,
    conv_transpose2d,
    gradcheck,
    maxpool2d,
    no_grad,
    relu,
    softmax_channels,
    upsample_nearest2d,
)
from siamprint.autodiff import functional as F
from siamprint.core.exceptions import ContractViolation

SEEDS = range(5)


def test_shared_subexpression_accumulates():
    x = Tensor(np.array([3.0]), requires_grad=True)
    y = F.add(F.mul(x, x), x)
    backward(F.sum(y))
    assert np.allclose(x.grad, [7.0]), (
        'd(x*x + x)/dx must add the gradients of every use of x.'
    )


def test_broadcast_gradient_is_reduced():
    x = Tensor(np.ones((2, 3)), requires_grad=True)
    b = Tensor(np.ones(3), requires_grad=True)
    backward(F.sum(F.add(x, b)))
    assert b.grad.shape == (3,), 'Broadcast operand gets its own shape back.'
    assert np.allclose(b.grad, 2.0), 'Gradient sums over broadcast rows.'


def test_graph_is_topologically_ordered():
    x = Tensor(np.ones(2), requires_grad=True)
    loss = F.sum(F.mul(F.relu(x), 2.0))
    graph = Graph.trace(loss)
    seen = set()
    for node in graph.nodes:
        assert all(parent in seen for parent in node.input_ids), (
            'Every node must come after its inputs.'
        )
        seen.add(node.output_id)


def test_backward_needs_scalar_loss():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ContractViolation):
        backward(F.mul(x, 2.0))


def test_no_grad_records_nothing():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = F.mul(x, 2.0)
    assert y.is_leaf and not y.requires_grad, (
        'Operations under no_grad must not build a graph.'
    )


def test_softmax_is_normalized_and_stable(rng):
    logits = Tensor(rng.normal(size=(2, 3, 4, 4)) * 1000.0)
    probs = softmax_channels(logits).data
    assert np.all(np.isfinite(probs)), 'Large logits must not overflow.'
    assert np.allclose(probs.sum(axis=1), 1.0), 'Channels must sum to 1.'


def test_conv2d_with_ones_kernel_sums_windows():
    x = Tensor(np.arange(16, dtype=float).reshape(1, 1, 4, 4))
    kernel = Tensor(np.ones((1, 1, 3, 3)))
    out = conv2d(x, kernel, padding=0).data
    expected = [[45.0, 54.0], [81.0, 90.0]]
    assert np.allclose(out[0, 0], expected), (
        'A ones kernel without padding sums each 3x3 window.'
    )


def test_conv2d_same_padding_keeps_size(image_batch, rng):
    kernel = Tensor(rng.normal(size=(5, 3, 3, 3)))
    out = conv2d(image_batch, kernel, padding=1)
    assert out.shape == (2, 5, 8, 8), 'Padding 1 keeps the spatial size.'


def test_conv_transpose_doubles_size(image_batch, rng):
    kernel = Tensor(rng.normal(size=(3, 4, 2, 2)))
    out = conv_transpose2d(image_batch, kernel)
    assert out.shape == (2, 4, 16, 16), (
        'A 2x2 stride-2 transposed conv doubles H and W.'
    )


def test_conv_transpose_scatters_kernel():
    x = Tensor(np.zeros((1, 1, 2, 2)))
    x.data[0, 0, 1, 0] = 1.0
    kernel = Tensor(np.arange(4, dtype=float).reshape(1, 1, 2, 2))
    out = conv_transpose2d(x, kernel).data[0, 0]
    assert np.allclose(out[2:4, 0:2], kernel.data[0, 0]), (
        'Each input pixel writes one kernel-sized block.'
    )
    assert out.sum() == kernel.data.sum(), 'Blocks must not overlap.'


def test_maxpool_tie_routes_to_first_element():
    x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
    pooled, indices = maxpool2d(x)
    backward(F.sum(pooled))
    assert indices[0, 0, 0, 0] == 0, 'Ties pick the first element.'
    assert np.array_equal(x.grad[0, 0], [[1.0, 0.0], [0.0, 0.0]]), (
        'The gradient flows only to the first maximal element.'
    )


def test_maxpool_rejects_odd_size():
    with pytest.raises(ContractViolation):
        maxpool2d(Tensor(np.ones((1, 1, 3, 4))))


def test_concat_requires_matching_spatial_size():
    with pytest.raises(ContractViolation):
        concat_channels(
            Tensor(np.ones((1, 2, 4, 4))), Tensor(np.ones((1, 2, 2, 2))),
        )


def test_batchnorm_train_updates_running_stats(rng):
    x = Tensor(rng.normal(loc=2.0, size=(4, 2, 3, 3)))
    gamma, beta = Tensor(np.ones(2)), Tensor(np.zeros(2))
    running_mean, running_var = np.zeros(2), np.ones(2)
    out = batchnorm2d(x, gamma, beta, running_mean, running_var, True).data
    assert np.allclose(out.mean(axis=(0, 2, 3)), 0.0, atol=1e-10), (
        'Train mode normalizes with the batch mean.'
    )
    batch_mean = x.data.mean(axis=(0, 2, 3))
    assert np.allclose(running_mean, 0.1 * batch_mean), (
        'Running mean moves by momentum 0.1 in place.'
    )
    count = 4 * 3 * 3
    unbiased = x.data.var(axis=(0, 2, 3)) * count / (count - 1)
    assert np.allclose(running_var, 0.9 + 0.1 * unbiased), (
        'Running variance uses the unbiased batch variance.'
    )


def test_batchnorm_eval_uses_running_stats():
    x = Tensor(np.full((1, 1, 2, 2), 3.0))
    out = batchnorm2d(
        x, Tensor(np.ones(1)), Tensor(np.zeros(1)),
        np.array([1.0]), np.array([4.0]), training=False,
    ).data
    assert np.allclose(out, (3.0 - 1.0) / np.sqrt(4.0 + 1e-5)), (
        'Eval mode normalizes with the running buffers.'
    )


@pytest.mark.parametrize('seed', SEEDS)
def test_gradcheck_conv2d(seed):
    rng = np.random.default_rng(seed)
    x = Tensor(rng.normal(size=(2, 2, 5, 5)), requires_grad=True)
    kernel = Tensor(rng.normal(size=(3, 2, 3, 3)), requires_grad=True)
    bias = Tensor(rng.normal(size=3), requires_grad=True)
    weights = rng.normal(size=(2, 3, 5, 5))

    def f(inputs):
        return F.sum(F.mul(conv2d(*inputs, padding=1), weights))

    assert gradcheck(f, [x, kernel, bias]) < 1e-4, 'conv2d gradients.'


@pytest.mark.parametrize('seed', SEEDS)
def test_gradcheck_conv_transpose(seed):
    rng = np.random.default_rng(seed)
    x = Tensor(rng.normal(size=(2, 3, 2, 2)), requires_grad=True)
    kernel = Tensor(rng.normal(size=(3, 2, 2, 2)), requires_grad=True)
    bias = Tensor(rng.normal(size=2), requires_grad=True)
    weights = rng.normal(size=(2, 2, 4, 4))

    def f(inputs):
        return F.sum(F.mul(conv_transpose2d(*inputs), weights))

    assert gradcheck(f, [x, kernel, bias]) < 1e-4, (
        'conv_transpose2d gradients.'
    )


@pytest.mark.parametrize('seed', SEEDS)
def test_gradcheck_batchnorm(seed):
    rng = np.random.default_rng(seed)
    x = Tensor(rng.normal(size=(3, 2, 2, 2)), requires_grad=True)
    gamma = Tensor(rng.uniform(0.5, 1.5, size=2), requires_grad=True)
    beta = Tensor(rng.normal(size=2), requires_grad=True)
    weights = rng.normal(size=(3, 2, 2, 2))

    def f(inputs):
        out = batchnorm2d(*inputs, None, None, training=True)
        return F.sum(F.mul(out, weights))

    assert gradcheck(f, [x, gamma, beta]) < 1e-4, 'batchnorm2d gradients.'


@pytest.mark.parametrize('seed', SEEDS)
def test_gradcheck_maxpool_softmax_relu(seed):
    rng = np.random.default_rng(seed)
    x = Tensor(rng.permutation(32).reshape(1, 2, 4, 4) / 7.0 - 2.0,
               requires_grad=True)
    weights = rng.normal(size=(1, 2, 2, 2))

    def f(value):
        pooled, _ = maxpool2d(relu(F.add(value, 0.05)))
        return F.sum(F.mul(softmax_channels(pooled), weights))

    assert gradcheck(f, x) < 1e-4, 'maxpool, softmax and relu gradients.'


@pytest.mark.parametrize('seed', SEEDS)
def test_gradcheck_sqrt_log_pow(seed):
    rng = np.random.default_rng(seed)
    x = Tensor(rng.uniform(0.5, 2.0, size=(3, 4)), requires_grad=True)

    def f(value):
        return F.mean(F.add(F.sqrt(value), F.log(F.pow_scalar(value, 3.0))))

    assert gradcheck(f, x) < 1e-4, 'sqrt, log and pow gradients.'


def test_delta_kernel_is_identity(rng):
    x = Tensor(rng.normal(size=(1, 2, 5, 5)))
    kernel = np.zeros((2, 2, 3, 3))
    kernel[0, 0, 1, 1] = kernel[1, 1, 1, 1] = 1.0
    assert np.allclose(conv2d(x, Tensor(kernel), padding=1).data, x.data)


def test_softmax_closed_form():
    logits = Tensor(np.array([np.log(2.0), 0.0, 0.0]).reshape(1, 3, 1, 1))
    probs = softmax_channels(logits).data.ravel()
    assert np.allclose(probs, [0.5, 0.25, 0.25])


def test_relu_values():
    assert relu(Tensor(np.array([-2.0, 3.0]))).data.tolist() == [0.0, 3.0]


def test_batchnorm_uses_biased_variance():
    x = Tensor(np.array([1.0, 3.0]).reshape(2, 1, 1, 1))
    out = batchnorm2d(
        x, Tensor(np.ones(1)), Tensor(np.zeros(1)), None, None, True,
    ).data.ravel()
    assert np.allclose(out, [-1.0, 1.0], atol=1e-5), (
        'Mean 2 and biased variance 1 normalize {1, 3} to {-1, 1}.'
    )


def test_sum_of_squares_gradient(rng):
    x = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
    backward(F.sum(F.mul(x, x)))
    assert np.allclose(x.grad, 2.0 * x.data)


def _pre_activation_with_margin(rng, margin=1e-3):
    for _ in range(100):
        x = rng.normal(size=(1, 2, 4, 4))
        kernel = rng.normal(size=(2, 2, 3, 3))
        bias = rng.normal(size=2)
        pre = conv2d(Tensor(x), Tensor(kernel), Tensor(bias), padding=1)
        if np.abs(pre.data).min() >= margin:
            return x, kernel, bias
    raise AssertionError('No draw kept every pre-activation off the kink.')


@pytest.mark.parametrize('seed', SEEDS)
def test_gradcheck_relu_of_conv2d(seed):
    arrays = _pre_activation_with_margin(np.random.default_rng(seed))
    inputs = [Tensor(array, requires_grad=True) for array in arrays]

    def f(values):
        return F.sum(relu(conv2d(*values, padding=1)))

    assert gradcheck(f, inputs, skip_kinks=False) < 1e-4, (
        'relu(conv2d) gradients away from the kink.'
    )


@pytest.mark.parametrize('seed', SEEDS)
def test_gradcheck_upsample_nearest(seed):
    rng = np.random.default_rng(seed)
    x = Tensor(rng.normal(size=(2, 2, 3, 3)), requires_grad=True)
    weights = rng.normal(size=(2, 2, 6, 6))

    def f(value):
        return F.sum(F.mul(upsample_nearest2d(value), weights))

    assert gradcheck(f, x) < 1e-4, 'upsample_nearest2d gradients.'


def test_softmax_is_shift_invariant(rng):
    logits = rng.normal(size=(2, 3, 4, 4))
    shift = rng.normal(size=(2, 1, 4, 4)) * 50.0
    assert np.allclose(
        softmax_channels(Tensor(logits + shift)).data,
        softmax_channels(Tensor(logits)).data,
        rtol=0.0, atol=1e-12,
    ), 'Adding a per-pixel constant to every channel keeps the softmax.'


def test_maxpool_then_upsample_restores_block_constant_input(rng):
    blocks = upsample_nearest2d(Tensor(rng.normal(size=(2, 3, 4, 4))))
    pooled, _ = maxpool2d(blocks)
    restored = upsample_nearest2d(pooled)
    assert restored.shape == blocks.shape
    assert np.array_equal(restored.data, blocks.data), (
        'Pooling a 2x2 block-constant input and upsampling it again must '
        'give the input back.'
    )


@pytest.mark.parametrize('op, kernel_shape', [
    (lambda x, k, b: conv2d(x, k, b, padding=1), (4, 3, 3, 3)),
    (lambda x, k, b: conv_transpose2d(x, k, b), (3, 4, 2, 2)),
])
def test_conv_bias_shape_is_checked(image_batch, op, kernel_shape):
    with pytest.raises(ContractViolation):
        op(image_batch, Tensor(np.ones(kernel_shape)), Tensor(np.ones(3)))
