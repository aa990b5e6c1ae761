import numpy as np
import pytest

from siamprint.constants import NO_DEFECT, OVER_EXTRUSION, UNDER_EXTRUSION
from siamprint.core.exceptions import ContractViolation
from siamprint.schemas.config import SchematicSpec
from siamprint.services.schematics import (
    derive_defect_mask,
    generate_schematic,
    render_schematic,
)

SPEC = SchematicSpec()
ORACLE_PAIRS = 100


def brute_force_mask(true_raster, presented_raster):
    mask = np.zeros(true_raster.shape, dtype=int)
    for row in range(true_raster.shape[0]):
        for column in range(true_raster.shape[1]):
            printed = true_raster[row, column]
            expected = presented_raster[row, column]
            if printed and not expected:
                mask[row, column] = OVER_EXTRUSION
            elif expected and not printed:
                mask[row, column] = UNDER_EXTRUSION
    return mask


def test_generation_is_deterministic():
    first = generate_schematic(11, SPEC)
    second = generate_schematic(11, SPEC)
    assert np.array_equal(first.raster, second.raster)
    assert first.lines == second.lines


def test_lines_respect_spec():
    for seed in range(10):
        schematic = generate_schematic(seed, SPEC)
        assert SPEC.min_lines <= len(schematic.lines) <= SPEC.max_lines
        columns = [line.column for line in schematic.lines]
        assert len(set(columns)) == len(columns), 'Slots are distinct.'
        for line in schematic.lines:
            assert SPEC.min_length <= line.length <= SPEC.max_length
            assert line.start_row + line.length <= SPEC.height
            assert line.column + line.thickness <= SPEC.width
        ink = sum(line.length * line.thickness for line in schematic.lines)
        assert schematic.raster.sum() == ink, 'Lines must not overlap.'


def test_raster_is_binary():
    raster = generate_schematic(3, SPEC).raster
    assert raster.dtype == np.uint8
    assert set(np.unique(raster)) <= {0, 1}


def test_mask_matches_brute_force():
    for seed in range(ORACLE_PAIRS):
        true_s = generate_schematic(seed, SPEC)
        presented_s = generate_schematic(seed + ORACLE_PAIRS, SPEC)
        assert np.array_equal(
            derive_defect_mask(true_s, presented_s),
            brute_force_mask(true_s.raster, presented_s.raster),
        ), 'Mask must label each pixel by its ink disagreement.'


def test_mask_is_antisymmetric():
    for seed in range(ORACLE_PAIRS):
        first = generate_schematic(seed, SPEC)
        second = generate_schematic(seed + ORACLE_PAIRS, SPEC)
        forward = derive_defect_mask(first, second)
        swapped = derive_defect_mask(second, first)
        assert np.array_equal(forward == OVER_EXTRUSION,
                              swapped == UNDER_EXTRUSION)
        assert np.array_equal(forward == UNDER_EXTRUSION,
                              swapped == OVER_EXTRUSION)
        assert np.array_equal(forward == NO_DEFECT, swapped == NO_DEFECT)


def test_identical_schematics_have_empty_mask():
    schematic = generate_schematic(4, SPEC)
    assert not derive_defect_mask(schematic, schematic).any()


def test_mask_size_mismatch_raises():
    with pytest.raises(ContractViolation):
        derive_defect_mask(np.zeros((4, 4)), np.zeros((4, 5)))


@pytest.mark.parametrize('overrides', [
    {'max_lines': 20, 'spacing': 6},
    {'max_length': 80},
])
def test_infeasible_spec_raises(overrides):
    with pytest.raises(ContractViolation):
        generate_schematic(0, SPEC.copy(update=overrides))


def test_render_colors_ink_black():
    schematic = generate_schematic(5, SPEC)
    image = render_schematic(schematic)
    assert image.shape == (SPEC.height, SPEC.width, 3)
    ink = schematic.raster.astype(bool)
    assert np.all(image[ink] == 0.0) and np.all(image[~ink] == 1.0)


def test_single_extra_ink_pixel():
    presented = np.zeros((16, 16), dtype=np.uint8)
    true_raster = presented.copy()
    true_raster[7, 3] = 1
    mask = derive_defect_mask(true_raster, presented)
    assert mask[7, 3] == OVER_EXTRUSION
    assert np.count_nonzero(mask) == 1
