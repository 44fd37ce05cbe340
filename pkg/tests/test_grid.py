import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from midframe.errors import DimensionError
from midframe.grid import (as_field, build_feature_pyramid, cap_flow, central_gradients, downsample_image_x2,
                           pyramid_shapes, to_luma, upsample_flow_x2)


def test_luma_weights():
    img = np.zeros((1, 3, 3))
    img[0, 0] = (1, 0, 0)
    img[0, 1] = (0, 1, 0)
    img[0, 2] = (0, 0, 1)
    np.testing.assert_allclose(to_luma(img)[0], [0.299, 0.587, 0.114])


def test_luma_of_grey_is_identity(rng):
    g = rng.random((5, 4, 1))
    np.testing.assert_array_equal(to_luma(g), g[..., 0])


def test_to_luma_rejects_two_channels():
    with pytest.raises(DimensionError):
        to_luma(np.zeros((3, 3, 2)))


def test_as_field_promotes_planes():
    assert as_field(np.zeros((4, 5))).shape == (4, 5, 1)
    with pytest.raises(DimensionError):
        as_field(np.zeros(5))


def test_central_gradients_of_ramp():
    plane = np.tile(np.arange(6.0), (4, 1)) * 0.1
    gx, gy = central_gradients(plane)
    np.testing.assert_allclose(gx[:, 1:-1], 0.1)
    np.testing.assert_allclose(gx[:, 0], 0.05)  # replicated border halves the edge difference
    np.testing.assert_array_equal(gy, 0.0)


def test_downsample_drops_odd_tail():
    img = np.arange(5 * 7, dtype=float).reshape(5, 7)
    out = downsample_image_x2(img)
    assert out.shape == (2, 3, 1)
    assert out[0, 0, 0] == pytest.approx((0 + 1 + 7 + 8) / 4)


def test_pyramid_shapes_floor_halving():
    assert pyramid_shapes(37, 50, 4) == [(37, 50), (18, 25), (9, 12), (4, 6)]


def test_feature_pyramid_layout(rng):
    img = rng.random((32, 24, 3))
    pyr = build_feature_pyramid(img, levels=3)
    assert pyr.level_count == 3
    assert pyr.channels == 11
    assert pyr.shape_chain() == [(32, 24), (16, 12), (8, 6)]
    np.testing.assert_allclose(pyr[0][..., 0], to_luma(img))
    plain = build_feature_pyramid(img, levels=3, feature_kind="luma_grad")
    assert plain.channels == 3


def test_pyramid_pooling_preserves_means(rng):
    pyr = build_feature_pyramid(rng.random((16, 16, 3)), levels=4)
    for lv in range(1, 4):
        np.testing.assert_allclose(pyr[lv].mean(axis=(0, 1)), pyr[0].mean(axis=(0, 1)), atol=1e-12)


def test_pyramid_too_small():
    with pytest.raises(DimensionError):
        build_feature_pyramid(np.zeros((6, 6, 3)), levels=4)


def test_upsample_constant_flow_doubles():
    flow = np.full((5, 6, 2), (1.5, -0.25))
    for th, tw in ((10, 12), (11, 13), (9, 11)):
        up = upsample_flow_x2(flow, th, tw)
        assert up.shape == (th, tw, 2)
        np.testing.assert_allclose(up, np.broadcast_to((3.0, -0.5), (th, tw, 2)))


def test_upsample_linear_flow_interior():
    ys, xs = np.mgrid[0:6, 0:6].astype(float)
    flow = np.stack([xs, ys], axis=2)
    up = upsample_flow_x2(flow, 12, 12)
    # fine pixel i sits at coarse position (i + 0.5) / 2 - 0.5
    i = np.arange(1, 11)
    np.testing.assert_allclose(up[5, 1:11, 0], 2 * ((i + 0.5) / 2 - 0.5))


def test_upsample_rejects_wrong_target():
    with pytest.raises(DimensionError):
        upsample_flow_x2(np.zeros((4, 4, 2)), 12, 8)


def test_cap_flow_limits_magnitude():
    flow = np.zeros((2, 2, 2))
    flow[0, 0] = (30.0, 40.0)
    flow[1, 1] = (1.0, 0.0)
    capped = cap_flow(flow, 10.0)
    np.testing.assert_allclose(capped[0, 0], (6.0, 8.0))
    np.testing.assert_array_equal(capped[1, 1], (1.0, 0.0))


@settings(max_examples=30, deadline=None)
@given(h=st.integers(2, 40), w=st.integers(2, 40))
def test_downsample_shape_property(h, w):
    assert downsample_image_x2(np.zeros((h, w, 2))).shape == (h // 2, w // 2, 2)
