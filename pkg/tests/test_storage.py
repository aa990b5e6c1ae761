import numpy as np
import pytest

from siamprint.core.exceptions import DataIOError
from siamprint.models import build_semi_siamese
from siamprint.schemas.config import TrainConfig
from siamprint.schemas.history import EpochRecord, TrainHistory
from siamprint.services.trainer import model_state_equal
from siamprint.storage.checkpoint import checkpoint_store
from siamprint.storage.history import (
    read_history_csv,
    read_history_rows,
    write_history_csv,
)
from siamprint.storage.images import read_mask, read_rgb, write_mask, write_rgb


def test_checkpoint_round_trip_is_bit_exact(tmp_path, tiny_model, image_pair):
    tiny_model.forward(*image_pair, 'train')
    path = checkpoint_store.save(
        tiny_model, tmp_path / 'model.bin', TrainConfig(epochs=3),
        extra={'epoch': 2},
    )
    loaded = checkpoint_store.load(path)
    assert loaded.kind == 'semi_siamese'
    assert model_state_equal(tiny_model, loaded.model), (
        'Parameters and running statistics must survive the round trip.'
    )
    assert loaded.header.train_config.epochs == 3
    assert loaded.header.extra == {'epoch': 2}
    assert np.array_equal(
        tiny_model.forward(*image_pair, 'eval').probs.data,
        loaded.model.forward(*image_pair, 'eval').probs.data,
    )


def test_tied_checkpoint_stores_one_encoder(tmp_path, tiny_model_config):
    model = build_semi_siamese(tiny_model_config, seed=1, tie_encoders=True)
    path = checkpoint_store.save(model, tmp_path / 'siamese.bin')
    header = checkpoint_store.read_header(path)
    names = [entry.name for entry in header.tensors]
    assert not any(name.startswith('encoder_cam/') for name in names)
    loaded = checkpoint_store.load(path).model
    assert loaded.tied_encoders and loaded.kind == 'siamese'


def test_unet_checkpoint(tmp_path, tiny_unet):
    path = checkpoint_store.save(tiny_unet, tmp_path / 'unet.bin')
    loaded = checkpoint_store.load(path)
    assert loaded.kind == 'unet'
    assert model_state_equal(tiny_unet, loaded.model)


def test_truncated_checkpoint_raises(tmp_path, tiny_unet):
    path = checkpoint_store.save(tiny_unet, tmp_path / 'unet.bin')
    path.write_bytes(path.read_bytes()[:-16])
    with pytest.raises(DataIOError, match='truncated'):
        checkpoint_store.load(path)


def test_foreign_file_is_rejected(tmp_path):
    path = tmp_path / 'model.bin'
    path.write_bytes(b'not a checkpoint at all')
    with pytest.raises(DataIOError):
        checkpoint_store.load(path)
    with pytest.raises(DataIOError):
        checkpoint_store.load(tmp_path / 'missing.bin')


def test_float32_checkpoint_loads(tmp_path, tiny_unet):
    path = checkpoint_store.save(
        tiny_unet, tmp_path / 'unet.bin', dtype='float32',
    )
    loaded = checkpoint_store.load(path).model
    weight = loaded.encoder.params['block1.0.conv.weight'].data
    assert weight.dtype == np.float64
    assert np.allclose(
        weight, tiny_unet.encoder.params['block1.0.conv.weight'].data,
        atol=1e-6,
    )


def test_mask_png_round_trip(tmp_path, rng):
    mask = rng.integers(0, 3, size=(8, 12))
    path = write_mask(tmp_path / 'mask.png', mask)
    assert np.array_equal(read_mask(path), mask)


def test_mask_rejects_bad_classes(tmp_path):
    with pytest.raises(DataIOError):
        write_mask(tmp_path / 'mask.png', np.full((2, 2), 3))


def test_rgb_png_quantizes_to_8_bits(tmp_path, rng):
    image = rng.uniform(size=(8, 8, 3))
    loaded = read_rgb(write_rgb(tmp_path / 'image.png', image))
    assert loaded.shape == (8, 8, 3)
    assert np.abs(loaded - image).max() <= 0.5 / 255 + 1e-12


def test_history_csv_round_trip(tmp_path):
    history = TrainHistory()
    history.append(EpochRecord(epoch=1, train_loss=0.5, seconds=1.5))
    history.append(EpochRecord(
        epoch=2, train_loss=0.25, val_loss=0.3, val_macro_f1=0.75,
    ))
    path = write_history_csv(history, tmp_path / 'history.csv')
    assert read_history_csv(path) == history
    assert history.best().epoch == 2


def test_history_rows_drop_timing(tmp_path):
    history = TrainHistory()
    history.append(EpochRecord(epoch=1, train_loss=0.5, seconds=1.25))
    path = write_history_csv(history, tmp_path / 'history.csv')
    assert read_history_rows(path) == [{
        'epoch': '1', 'train_loss': '0.5', 'val_loss': '',
        'val_macro_f1': '',
    }]
    assert read_history_rows(path, include_timing=True)[0]['seconds'] == (
        '1.25'
    )
