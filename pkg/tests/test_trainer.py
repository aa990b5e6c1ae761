import math

import numpy as np
import pytest

from siamprint.autodiff import Tensor, backward, no_grad
from siamprint.constants import (
    CHECKPOINT_FILE,
    HISTORY_FILE,
    LAST_CHECKPOINT_FILE,
    RESOLVED_CONFIG_FILE,
)
from siamprint.core.config import load_run_config
from siamprint.core.exceptions import ContractViolation, DivergenceError
from siamprint.models import UNet, build_semi_siamese
from siamprint.schemas.config import FocalConfig, TrainConfig
from siamprint.schemas.dataset import PerturbationParams
from siamprint.services.augmentation import simulate_camera
from siamprint.services.dataset import iterate_batches, select_records
from siamprint.services.evaluation import evaluate, evaluate_records
from siamprint.services.optimizer import Adam
from siamprint.services.trainer import (
    model_state_equal,
    semi_siamese_loss,
    trainer_service,
)
from siamprint.storage.checkpoint import checkpoint_store
from siamprint.storage.history import read_history_csv, read_history_rows


def test_train_writes_run_artifacts(tmp_path, tiny_dataset, tiny_run_config):
    manifest, root = tiny_dataset
    result = trainer_service.train_semi_siamese(
        manifest, root, tiny_run_config, tmp_path,
    )
    for name in (
        CHECKPOINT_FILE, LAST_CHECKPOINT_FILE, HISTORY_FILE,
        RESOLVED_CONFIG_FILE,
    ):
        assert (tmp_path / name).is_file(), f'{name} was not written.'
    assert len(result.history) == 2
    assert read_history_csv(tmp_path / HISTORY_FILE) == result.history
    for record in result.history.records:
        assert math.isfinite(record.train_loss)
        assert 0.0 <= record.val_macro_f1 <= 1.0
    assert result.model.kind == 'semi_siamese'


def test_resolved_config_reloads(tmp_path, tiny_dataset, tiny_run_config):
    manifest, root = tiny_dataset
    result = trainer_service.train_semi_siamese(
        manifest, root, tiny_run_config, tmp_path,
    )
    reloaded = load_run_config(tmp_path / RESOLVED_CONFIG_FILE)
    assert reloaded == result.config, (
        'The resolved config must reproduce the run exactly.'
    )
    assert reloaded.focal.alpha is not None, (
        'Alpha from class frequencies is recorded in the resolved config.'
    )


def test_training_is_deterministic(tmp_path, tiny_dataset, tiny_run_config):
    manifest, root = tiny_dataset
    first = trainer_service.train_semi_siamese(
        manifest, root, tiny_run_config, tmp_path / 'a',
    )
    second = trainer_service.train_semi_siamese(
        manifest, root, tiny_run_config, tmp_path / 'b',
    )
    assert model_state_equal(first.model, second.model), (
        'Same data, config and seed must give the same weights.'
    )
    first_rows = read_history_rows(tmp_path / 'a' / HISTORY_FILE)
    assert first_rows == read_history_rows(tmp_path / 'b' / HISTORY_FILE), (
        'Loss and score columns of the history must match bit for bit.'
    )
    assert 'seconds' not in first_rows[0]


def test_training_reduces_loss(tmp_path, tiny_dataset, tiny_run_config):
    manifest, root = tiny_dataset
    config = tiny_run_config.copy(update={
        'train': TrainConfig(epochs=8, batch_size=4, learning_rate=3e-3),
    })
    result = trainer_service.train_semi_siamese(
        manifest, root, config, tmp_path,
    )
    losses = [record.train_loss for record in result.history.records]
    assert losses[-1] < losses[0], 'Training loss must go down.'


def test_pretrain_then_transfer(tmp_path, tiny_dataset, tiny_run_config):
    manifest, root = tiny_dataset
    pretrained = trainer_service.pretrain_unet(
        manifest, root, tiny_run_config, tmp_path / 'unet',
    )
    assert isinstance(pretrained.model, UNet)
    assert pretrained.model.config.output_channels == 3
    assert all(
        record.val_loss is not None for record in pretrained.history.records
    ), 'Pre-training is validated by reconstruction error.'
    result = trainer_service.train_semi_siamese(
        manifest, root, tiny_run_config, tmp_path / 'semi',
        init=pretrained.checkpoint_path,
    )
    assert result.model.kind == 'semi_siamese'


def test_init_must_be_a_unet(tmp_path, tiny_dataset, tiny_run_config):
    manifest, root = tiny_dataset
    model = build_semi_siamese(tiny_run_config.model, seed=0)
    path = checkpoint_store.save(model, tmp_path / 'semi.bin')
    with pytest.raises(ContractViolation):
        trainer_service.train_semi_siamese(
            manifest, root, tiny_run_config, tmp_path / 'run', init=path,
        )


@pytest.mark.parametrize('arm, kind', [
    ('siamese', 'siamese'),
    ('unet', 'unet'),
])
def test_train_arm(tmp_path, tiny_dataset, tiny_run_config, arm, kind):
    manifest, root = tiny_dataset
    result = trainer_service.train_arm(
        arm, manifest, root, tiny_run_config, tmp_path,
    )
    assert checkpoint_store.load(result.checkpoint_path).kind == kind
    metrics = evaluate(result.checkpoint_path, manifest, root, 'test')
    assert metrics.pixels == 4 * 16 * 16


def test_unknown_arm_raises(tmp_path, tiny_dataset, tiny_run_config):
    manifest, root = tiny_dataset
    with pytest.raises(ContractViolation):
        trainer_service.train_arm(
            'triplet', manifest, root, tiny_run_config, tmp_path,
        )


def test_non_finite_loss_aborts():
    with pytest.raises(DivergenceError) as error:
        trainer_service.check_finite(float('nan'), epoch=3)
    assert error.value.exit_code == 4


def test_explicit_alpha_is_kept(tiny_dataset, tiny_run_config):
    manifest, root = tiny_dataset
    config = tiny_run_config.copy(update={
        'focal': FocalConfig(alpha=(1.0, 2.0, 3.0)),
    })
    assert trainer_service.resolve_focal(config, manifest, root) is config


def test_semi_siamese_loss_is_scalar(tiny_dataset, tiny_model):
    manifest, root = tiny_dataset
    batch = next(iterate_batches(manifest, root, 'train', 2))
    loss = semi_siamese_loss(FocalConfig())(tiny_model, batch)
    assert loss.size == 1 and np.isfinite(loss.item())



def _with(config, section, **values):
    return config.copy(update={
        section: getattr(config, section).copy(update=values),
    })


def _test_f1(result, manifest, root):
    return evaluate(result.checkpoint_path, manifest, root, 'test').macro_f1


@pytest.mark.slow
@pytest.mark.parametrize('seed', range(3))
def test_semi_siamese_learns_desk_scale(tmp_path, desk_config, desk_dataset,
                                        seed):
    """Pretrain, transfer and train at desk scale; slow on a CPU."""
    manifest, root = desk_dataset
    config = _with(_with(desk_config, 'train', seed=seed), 'pretrain',
                   seed=seed)
    pretrained = trainer_service.pretrain_unet(
        manifest, root, config, tmp_path / 'unet',
    )
    result = trainer_service.train_semi_siamese(
        manifest, root, config, tmp_path / 'semi',
        init=pretrained.checkpoint_path,
    )
    assert _test_f1(result, manifest, root) >= 0.85, (
        'Semi-Siamese with transfer must detect defects at desk scale.'
    )


@pytest.mark.slow
def test_overfits_eight_pairs(tmp_path, desk_config, desk_dataset):
    manifest, root = desk_dataset
    config = _with(
        desk_config, 'train', max_samples=8, epochs=200, checkpoint_every=200,
    )
    result = trainer_service.train_semi_siamese(
        manifest, root, config, tmp_path,
    )
    losses = [record.train_loss for record in result.history.records]
    assert losses[-1] <= losses[0]
    model = checkpoint_store.load(tmp_path / LAST_CHECKPOINT_FILE).model
    records = select_records(manifest, 'train', max_samples=8)
    _, metrics = evaluate_records(model, manifest, root, records, 8)
    assert metrics.macro_f1 >= 0.99, (
        f'Train macro F1 {metrics.macro_f1:.4f} after overfitting 8 pairs.'
    )


@pytest.mark.slow
def test_pretrain_overfit_reconstructs_identity_view(
    tmp_path, desk_config, desk_dataset,
):
    manifest, root = desk_dataset
    config = _with(
        desk_config, 'pretrain',
        max_samples=4, epochs=200, checkpoint_every=200,
    )
    trainer_service.pretrain_unet(manifest, root, config, tmp_path)
    unet = checkpoint_store.load(tmp_path / LAST_CHECKPOINT_FILE).model
    record = select_records(manifest, 'train', only_clean=True)[0]
    batch = next(iterate_batches(manifest, root, 'train', 1,
                                 records=[record]))
    raster = (batch.i_ref[0].mean(axis=0) < 0.5).astype(np.uint8)
    camera = simulate_camera(raster, PerturbationParams())
    with no_grad():
        output = unet.forward(
            Tensor(camera.transpose(2, 0, 1)[None]), 'eval',
        ).data
    error = float(np.mean((output - batch.i_ref) ** 2))
    assert error < 0.01, f'Reconstruction MSE {error:.4f}.'


@pytest.mark.slow
def test_one_step_reduces_loss_on_a_defective_pair(desk_config,
                                                   desk_dataset):
    manifest, root = desk_dataset
    record = next(
        record for record in select_records(manifest, 'train')
        if record.defective
    )
    batch = next(iterate_batches(manifest, root, 'train', 1,
                                 records=[record]))
    loss_fn = semi_siamese_loss(FocalConfig())
    decreased = 0
    for seed in range(10):
        model = build_semi_siamese(desk_config.model, seed=seed)
        optimizer = Adam(model.parameters(), lr=1e-3)
        before = loss_fn(model, batch)
        backward(before)
        optimizer.step()
        with no_grad():
            after = loss_fn(model, batch)
        decreased += after.item() < before.item()
    assert decreased >= 9, f'Loss went down for {decreased} of 10 seeds.'


@pytest.mark.slow
def test_ablation_direction(tmp_path, desk_config, desk_dataset):
    """Five paired seeds per arm; hours on a CPU."""
    manifest, root = desk_dataset
    scores = {'semi': [], 'semi_scratch': [], 'siamese': [], 'unet': []}
    for seed in range(5):
        config = _with(_with(desk_config, 'train', seed=seed), 'pretrain',
                       seed=seed)
        run = tmp_path / f'seed{seed}'
        init = trainer_service.pretrain_unet(
            manifest, root, config, run / 'pretrain',
        ).checkpoint_path
        scores['semi'].append(_test_f1(trainer_service.train_semi_siamese(
            manifest, root, config, run / 'semi', init=init,
        ), manifest, root))
        scores['semi_scratch'].append(_test_f1(
            trainer_service.train_semi_siamese(
                manifest, root, config, run / 'semi_scratch',
            ), manifest, root,
        ))
        scores['siamese'].append(_test_f1(
            trainer_service.train_siamese_baseline(
                manifest, root, config, run / 'siamese', init=init,
            ), manifest, root,
        ))
        scores['unet'].append(_test_f1(trainer_service.train_unet(
            manifest, root, config, run / 'unet',
        ), manifest, root))
    mean = {arm: float(np.mean(values)) for arm, values in scores.items()}
    assert mean['semi'] >= mean['semi_scratch'], mean
    assert mean['semi'] - mean['siamese'] >= 0.02, mean
    assert mean['unet'] < mean['semi'], mean
