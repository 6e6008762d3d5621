import numpy as np
import pytest

from dsmsharp import tophat
from dsmsharp.raster import Heightfield
from dsmsharp.tophat import TophatParams, TophatStack


def block_field(size, block, height, at=None):
    """Flat ground with one raised square block; returns the field and footprint."""
    vals = np.zeros((size, size))
    y0, x0 = at if at is not None else ((size - block) // 2, (size - block) // 2)
    vals[y0 : y0 + block, x0 : x0 + block] = height
    fp = np.zeros((size, size), bool)
    fp[y0 : y0 + block, x0 : x0 + block] = True
    return Heightfield(vals), fp


def _axis_extreme(values, k, axis, op, pad):
    out = np.full_like(values, pad)
    for off in range(-k, k + 1):
        shifted = np.roll(values, off, axis=axis)
        if off > 0:
            idx = [slice(None)] * 2
            idx[axis] = slice(0, off)
            shifted[tuple(idx)] = pad
        elif off < 0:
            idx = [slice(None)] * 2
            idx[axis] = slice(off, None)
            shifted[tuple(idx)] = pad
        out = op(out, shifted)
    return out


def naive_tophat(values, se_size):
    """Reference opening built from explicit shift-and-compare passes."""
    k = se_size // 2
    eroded = _axis_extreme(values, k, 0, np.minimum, np.inf)
    eroded = _axis_extreme(eroded, k, 1, np.minimum, np.inf)
    opened = _axis_extreme(eroded, k, 0, np.maximum, -np.inf)
    opened = _axis_extreme(opened, k, 1, np.maximum, -np.inf)
    return values - opened


def test_tophat_constant_is_zero():
    hf = Heightfield(np.full((20, 20), 7.0))
    resp = tophat.white_tophat(hf, 5)
    assert np.allclose(resp.values, 0.0)


def test_tophat_block_smaller_than_element():
    hf, fp = block_field(48, 8, 10.0)
    resp = tophat.white_tophat(hf, 21)
    assert np.allclose(resp.values[fp], 10.0)
    assert np.allclose(resp.values[~fp], 0.0)
    assert np.array_equal(resp.values, naive_tophat(hf.values, 21))


def test_tophat_block_larger_than_element():
    hf, fp = block_field(48, 8, 10.0)
    resp = tophat.white_tophat(hf, 5)
    interior = np.zeros_like(fp)
    interior[22:26, 22:26] = True  # block core, clear of its own edges
    assert np.allclose(resp.values[interior], 0.0)
    assert np.array_equal(resp.values, naive_tophat(hf.values, 5))


def test_tophat_nonnegative_and_bounded():
    rng = np.random.default_rng(5)
    hf = Heightfield(rng.normal(10.0, 4.0, (32, 32)))
    resp = tophat.white_tophat(hf, 7)
    assert (resp.values >= -1e-9).all()
    assert (resp.values <= hf.values.max() - hf.values.min() + 1e-9).all()


def test_params_validation():
    with pytest.raises(ValueError):
        TophatParams(scale_min=0)
    with pytest.raises(ValueError):
        TophatParams(scale_min=50, scale_max=10)
    with pytest.raises(ValueError):
        TophatParams(height_threshold=0.0)


def test_default_stack_has_40_scales():
    params = TophatParams()
    assert params.scales() == list(range(10, 401, 10))
    hf = Heightfield(np.zeros((8, 8)))
    stack = tophat.build_stack(hf, params)
    assert len(stack) == 40


def test_flat_field_gives_empty_stack():
    hf = Heightfield(np.zeros((32, 32)))
    stack = tophat.build_stack(hf, TophatParams(scale_min=5, scale_max=25, scale_step=5))
    assert all(m.count() == 0 for m in stack.cumulative_masks)
    assert all(c.count() == 0 for c in stack.contour_images)
    assert tophat.building_mask(stack).count() == 0
    assert tophat.boundary_contours(stack) == []


def test_appearance_scales_of_two_blocks():
    """A block enters the per-scale mask at the first element exceeding it."""
    vals = np.zeros((200, 200))
    vals[20:28, 20:28] = 10.0  # 8 px block
    vals[60:160, 60:160] = 10.0  # 100 px block
    hf = Heightfield(vals)
    params = TophatParams(scale_min=10, scale_max=120, scale_step=10, height_threshold=2.5)
    stack = tophat.build_stack(hf, params)
    small = (slice(20, 28), slice(20, 28))
    large = (slice(60, 160), slice(60, 160))
    # scale 10: window 11 > 8 catches the small block, not the large one
    assert stack.cumulative_masks[0].bits[small].all()
    assert not stack.cumulative_masks[0].bits[large].any()
    # the large block stays absent until the element is strictly wider than it
    acc = np.zeros(hf.values.shape, bool)
    for i, scale in enumerate(params.scales()):
        window = 2 * (scale // 2) + 1
        covered = stack.cumulative_masks[i].bits[large].all()
        assert covered == (window > 100), (scale, window, covered)
        acc |= naive_tophat(hf.values, scale) > params.height_threshold
        assert np.array_equal(stack.cumulative_masks[i].bits, acc)


def test_cumulative_masks_are_nested():
    rng = np.random.default_rng(6)
    vals = np.zeros((60, 60))
    for _ in range(4):
        y, x = rng.integers(5, 40, 2)
        s = int(rng.integers(4, 12))
        vals[y : y + s, x : x + s] = 8.0
    stack = tophat.build_stack(Heightfield(vals), TophatParams(scale_min=5, scale_max=45, scale_step=5))
    for a, b in zip(stack.cumulative_masks, stack.cumulative_masks[1:]):
        assert (a.bits <= b.bits).all()
    final = tophat.building_mask(stack)
    for m in stack.cumulative_masks:
        assert (m.bits <= final.bits).all()


def test_contour_images_inside_masks():
    hf, _ = block_field(40, 10, 9.0)
    stack = tophat.build_stack(hf, TophatParams(scale_min=15, scale_max=30, scale_step=15))
    for mask, cimg in zip(stack.cumulative_masks, stack.contour_images):
        assert (cimg.bits <= mask.bits).all()


def test_single_scale_stack_equals_thresholded_tophat():
    hf, _ = block_field(40, 6, 12.0)
    params = TophatParams(scale_min=9, scale_max=9, scale_step=1, height_threshold=2.5)
    stack = tophat.build_stack(hf, params)
    resp = tophat.white_tophat(hf, 9)
    want = resp.valid_mask() & (resp.values > 2.5)
    assert np.array_equal(stack.cumulative_masks[0].bits, want)


def test_boundary_contours_of_block():
    hf, fp = block_field(40, 10, 9.0)
    stack = tophat.build_stack(hf, TophatParams(scale_min=15, scale_max=15, scale_step=1))
    contours = tophat.boundary_contours(stack)
    assert len(contours) == 1
    # border pixel count of a 10x10 block
    assert len(contours[0]) == 36


def test_building_mask_matches_footprint():
    hf, fp = block_field(64, 12, 10.0)
    stack = tophat.build_stack(hf, TophatParams(scale_min=15, scale_max=30, scale_step=15))
    assert np.array_equal(tophat.building_mask(stack).bits, fp)


def test_empty_stack_rejected():
    with pytest.raises(ValueError):
        tophat.building_mask(TophatStack(scales=[]))
