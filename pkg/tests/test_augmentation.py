import numpy as np
import pytest

from siamprint.schemas.config import (
    CameraConfig,
    PerturbationRanges,
    SchematicSpec,
)
from siamprint.schemas.dataset import PerturbationParams
from siamprint.services.augmentation import (
    affine_matrix,
    apply_perturbation,
    sample_perturbation,
    simulate_camera,
)
from siamprint.services.schematics import generate_schematic, render_schematic

WHITE = (1.0, 1.0, 1.0)


@pytest.fixture
def cross():
    image = np.ones((9, 9, 3))
    image[4, :, :] = 0.0
    image[:, 4, :] = 0.0
    return image


def test_identity_is_bit_identical(rng):
    image = rng.uniform(size=(16, 16, 3))
    out = apply_perturbation(image, PerturbationParams())
    assert np.array_equal(out, image), 'Identity params change nothing.'


def test_quarter_turn_keeps_centered_cross(cross):
    out = apply_perturbation(
        cross, PerturbationParams(rotation=90.0), background=WHITE,
    )
    assert np.allclose(out, cross, atol=1e-6), (
        'A cross centered on the image maps onto itself.'
    )


def test_shift_moves_content(cross):
    out = apply_perturbation(
        cross, PerturbationParams(shift_x=2.0), background=WHITE,
    )
    assert np.allclose(out[:, 2:], cross[:, :-2], atol=1e-6), (
        'Positive shift_x moves content to the right.'
    )
    assert np.allclose(out[:, :2], 1.0), 'Uncovered pixels get background.'


def test_gain_and_bias_are_clamped():
    image = np.full((4, 4, 3), 0.8)
    out = apply_perturbation(image, PerturbationParams(gain=2.0, bias=0.1))
    assert np.all(out == 1.0)


def test_noise_is_seeded(rng):
    image = rng.uniform(size=(8, 8, 3))
    params = PerturbationParams(noise_sigma=0.05, seed=42)
    first = apply_perturbation(image, params)
    second = apply_perturbation(image, params)
    assert np.array_equal(first, second), 'Same seed, same noise.'
    assert not np.array_equal(first, image)
    assert first.min() >= 0.0 and first.max() <= 1.0


def test_affine_matrix_fixes_center():
    params = PerturbationParams(zoom=1.3, rotation=17.0, shear=0.1)
    matrix = affine_matrix(params, 9, 9)
    center = np.array([4.0, 4.0, 1.0])
    assert np.allclose(matrix @ center, center), (
        'Without shift the image center is a fixed point.'
    )


def test_sampled_params_stay_in_ranges():
    ranges = PerturbationRanges()
    generator = np.random.default_rng(0)
    for _ in range(20):
        params = sample_perturbation(ranges, 64, 64, generator)
        assert ranges.zoom[0] <= params.zoom <= ranges.zoom[1]
        assert ranges.rotation[0] <= params.rotation <= ranges.rotation[1]
        assert abs(params.shift_x) <= ranges.shift_fraction * 64


def test_camera_with_render_palette_equals_render():
    schematic = generate_schematic(0, SchematicSpec())
    camera = CameraConfig(
        ink_rgb=(0.0, 0.0, 0.0), powder_rgb=WHITE, speckle_sigma=0.0,
    )
    image = simulate_camera(schematic, PerturbationParams(), camera)
    assert np.array_equal(image, render_schematic(schematic)), (
        'A perfect camera sees exactly the schematic render.'
    )


def test_camera_palette_differs_from_render():
    schematic = generate_schematic(0, SchematicSpec())
    image = simulate_camera(schematic, PerturbationParams(seed=1))
    ink = schematic.raster.astype(bool)
    assert not np.allclose(image, render_schematic(schematic))
    assert image[ink].mean() < image[~ink].mean(), 'Ink stays darker.'


def test_shift_moves_centroid():
    image = np.zeros((32, 32, 3))
    image[16, 10] = 1.0
    out = apply_perturbation(
        image, PerturbationParams(shift_x=5.0), background=(0.0, 0.0, 0.0),
    )
    weights = out[..., 0]
    columns = np.arange(32)[None, :]
    centroid = (weights * columns).sum() / weights.sum()
    assert abs(centroid - 15.0) < 0.1
