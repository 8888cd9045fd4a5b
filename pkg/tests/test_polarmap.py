import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from crtpredict.domain import PolarmapSet
from crtpredict.polarmap import (
    BackboneInput,
    IMAGENET_CHANNEL_MEANS,
    compose_quadrants,
    prepare_for_backbone,
    threshold_perfusion,
)

unit_maps = arrays(
    dtype=np.float64,
    shape=(64, 64),
    elements=st.floats(0.0, 1.0, allow_nan=False),
)


def test_threshold_examples():
    grid = np.zeros((64, 64))
    grid[0, 0] = 0.60
    grid[0, 1] = 0.50
    out = threshold_perfusion(grid, 0.50)
    assert out[0, 0] == 0.60
    assert out[0, 1] == 0.0  # boundary pixel excluded: strict >
    assert threshold_perfusion(np.zeros((64, 64))).sum() == 0.0


def test_threshold_validates_inputs():
    with pytest.raises(ValueError):
        threshold_perfusion(np.zeros((4, 4)), tau=1.5)
    with pytest.raises(ValueError):
        threshold_perfusion(np.full((4, 4), 2.0))


@settings(max_examples=25)
@given(grid=unit_maps, tau=st.floats(0.0, 1.0))
def test_threshold_idempotent(grid, tau):
    once = threshold_perfusion(grid, tau)
    np.testing.assert_array_equal(threshold_perfusion(once, tau), once)


def _maps(perf=None, dys=None, wt=None):
    z = np.zeros((64, 64))
    return PolarmapSet(
        perfusion=z if perf is None else perf,
        systolic_dyssynchrony=z if dys is None else dys,
        wall_thickening=z if wt is None else wt,
    )


def test_compose_all_zero():
    comp = compose_quadrants(_maps())
    assert comp.pixels.shape == (128, 128)
    assert comp.pixels.sum() == 0.0


def test_compose_corner_index_arithmetic():
    rng = np.random.default_rng(1)
    perf = rng.random((64, 64))
    dys = rng.random((64, 64))
    wt = rng.random((64, 64))
    comp = compose_quadrants(_maps(perf, dys, wt))
    # brute-force corner oracle for each quadrant's origin
    assert comp.pixels[0, 0] == perf[0, 0]
    assert comp.pixels[0, 64] == dys[0, 0]
    assert comp.pixels[64, 0] == wt[0, 0]
    assert comp.pixels[64, 64] == threshold_perfusion(perf)[0, 0]


def test_compose_single_pixel_placement():
    perf = np.zeros((64, 64))
    perf[3, 3] = 0.6
    comp = compose_quadrants(_maps(perf=perf), tau=0.5)
    assert comp.pixels[3, 3] == 0.6
    assert comp.pixels[67, 67] == 0.6  # survives the 0.5 threshold into BR
    assert comp.pixels.sum() == pytest.approx(1.2)


@settings(max_examples=10)
@given(perf=unit_maps, dys=unit_maps, wt=unit_maps)
def test_compose_lossless(perf, dys, wt):
    comp = compose_quadrants(_maps(perf, dys, wt))
    np.testing.assert_array_equal(comp.quadrant("TL"), perf)
    np.testing.assert_array_equal(comp.quadrant("TR"), dys)
    np.testing.assert_array_equal(comp.quadrant("BL"), wt)
    np.testing.assert_array_equal(comp.quadrant("BR"), threshold_perfusion(perf))


def test_prepare_centering_constants():
    comp = compose_quadrants(_maps())
    out = prepare_for_backbone(comp)
    assert out.tensor.shape == (128, 128, 3)
    np.testing.assert_allclose(out.tensor[0, 0], [-123.68, -116.779, -103.939])

    ones = compose_quadrants(_maps(np.ones((64, 64)), np.ones((64, 64)), np.ones((64, 64))))
    top = prepare_for_backbone(ones)
    np.testing.assert_allclose(top.tensor[0, 0], [131.32, 138.221, 151.061])


def test_prepare_tiling_channels_identical_before_centering():
    rng = np.random.default_rng(2)
    comp = compose_quadrants(_maps(rng.random((64, 64)), rng.random((64, 64)), rng.random((64, 64))))
    out = prepare_for_backbone(comp)
    r, g, b = (out.tensor[:, :, c] + IMAGENET_CHANNEL_MEANS[c] for c in range(3))
    np.testing.assert_allclose(r, g, atol=1e-10)
    np.testing.assert_allclose(g, b, atol=1e-10)


@settings(max_examples=15)
@given(perf=unit_maps)
def test_prepare_affine_per_channel(perf):
    comp = compose_quadrants(_maps(perf=perf))
    out = prepare_for_backbone(comp)
    for c, mean in enumerate(IMAGENET_CHANNEL_MEANS):
        np.testing.assert_array_equal(out.tensor[:, :, c], comp.pixels * 255.0 - mean)


def test_backbone_input_shape_check():
    with pytest.raises(ValueError):
        BackboneInput(tensor=np.zeros((64, 64, 3)))
