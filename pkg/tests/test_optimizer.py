import numpy as np
import pytest

from siamprint.autodiff import Tensor
from siamprint.core.exceptions import ContractViolation
from siamprint.models import build_semi_siamese
from siamprint.services.optimizer import Adam, adam_step, init_state


def test_zero_gradient_leaves_params_unchanged(rng):
    params = [rng.normal(size=(3, 3)), rng.normal(size=4)]
    before = [param.copy() for param in params]
    state = init_state(params)
    adam_step(params, [np.zeros((3, 3)), None], state, lr=1e-3)
    for param, original in zip(params, before):
        assert np.array_equal(param, original)
    assert state.step == 1


def test_first_step_moves_by_learning_rate(rng):
    param = rng.normal(size=10)
    grad = rng.normal(size=10)
    original = param.copy()
    adam_step([param], [grad], init_state([param]), lr=1e-3)
    assert np.allclose(param - original, -1e-3 * np.sign(grad), atol=1e-9), (
        'Bias correction makes the first step -lr * sign(g).'
    )


def test_steps_are_deterministic(rng):
    grads = [rng.normal(size=5) for _ in range(3)]

    def run():
        param = np.ones(5)
        state = init_state([param])
        for grad in grads:
            adam_step([param], [grad], state, lr=0.01)
        return param

    assert np.array_equal(run(), run())


def test_shape_mismatch_raises():
    param = np.zeros(3)
    with pytest.raises(ContractViolation):
        adam_step([param], [np.zeros(4)], init_state([param]), lr=0.1)
    with pytest.raises(ContractViolation):
        adam_step([param], [], init_state([param]), lr=0.1)


def test_tied_parameters_get_one_state_entry(tiny_model_config):
    model = build_semi_siamese(tiny_model_config, seed=0, tie_encoders=True)
    repeated = model.parameters() + list(model.encoder_ref.params.values())
    optimizer = Adam(repeated, lr=1e-3)
    assert len(optimizer.state) == len(model.parameters()), (
        'A tensor reachable twice is updated once.'
    )


def test_adam_minimizes_quadratic():
    x = Tensor(np.array([3.0, -2.0]), requires_grad=True)
    optimizer = Adam([x], lr=0.1)
    for _ in range(300):
        optimizer.zero_grad()
        x.grad = 2.0 * x.data
        optimizer.step()
    assert np.all(np.abs(x.data) < 0.1)
