import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from midframe._backend import use_backend
from midframe.errors import DimensionError
from midframe.warp import backward_warp, backward_warp_grad
from oracles import central_difference, rel_err, warp_loop


def test_zero_flow_is_identity(backend, rng):
    img = rng.random((7, 9, 3))
    res = backward_warp(img, np.zeros((7, 9, 2)))
    np.testing.assert_array_equal(res.warped, img)
    np.testing.assert_array_equal(res.validity, 1.0)


def test_integer_shift(backend, rng):
    img = rng.random((8, 10, 2))
    flow = np.zeros((8, 10, 2))
    flow[..., 0] = 3.0
    flow[..., 1] = -1.0
    out = backward_warp(img, flow).warped
    np.testing.assert_array_equal(out[1:, :7], img[:-1, 3:])


@pytest.mark.parametrize("border", ["clamp", "zero"])
def test_matches_loop_oracle(backend, rng, border):
    img = rng.random((9, 11, 3))
    flow = rng.normal(0.0, 3.0, (9, 11, 2))
    np.testing.assert_allclose(backward_warp(img, flow, border).warped, warp_loop(img, flow, border),
                               atol=1e-12)


def test_validity_marks_inside_samples(backend):
    flow = np.zeros((4, 5, 2))
    flow[0, 0] = (-0.5, 0.0)     # left of column 0
    flow[1, 4] = (0.0, 0.0)      # exactly on the last column
    flow[3, 2] = (0.0, 0.01)     # below the last row
    v = backward_warp(np.ones((4, 5, 1)), flow).validity
    assert v[0, 0] == 0 and v[1, 4] == 1 and v[3, 2] == 0 and v[2, 2] == 1


def test_zero_border_outside_reads_zero(backend):
    flow = np.full((3, 3, 2), 10.0)
    assert np.all(backward_warp(np.ones((3, 3, 1)), flow, "zero").warped == 0)
    assert np.all(backward_warp(np.ones((3, 3, 1)), flow, "clamp").warped == 1)


def test_backends_agree(rng):
    img = rng.random((12, 13, 4))
    flow = rng.normal(0, 4, (12, 13, 2))
    up = rng.standard_normal((12, 13, 4))
    out = {}
    for name in ("numba", "numpy"):
        with use_backend(name):
            out[name] = (backward_warp(img, flow).warped, *backward_warp_grad(img, flow, up))
    for a, b in zip(out["numba"], out["numpy"]):
        np.testing.assert_allclose(a, b, atol=1e-12)


@pytest.mark.parametrize("border", ["clamp", "zero"])
def test_gradients_match_finite_differences(backend, rng, border):
    h, w, c = 6, 7, 2
    img = rng.random((h, w, c))
    # keep samples away from the lattice where bilinear sampling has kinks
    flow = rng.integers(-2, 3, (h, w, 2)) + rng.uniform(0.2, 0.8, (h, w, 2))
    up = rng.standard_normal((h, w, c))
    g_img, g_flow = backward_warp_grad(img, flow, up, border)
    f = lambda: float(np.sum(backward_warp(img, flow, border).warped * up))
    errs = []
    for _ in range(12):
        idx = (rng.integers(h), rng.integers(w), rng.integers(c))
        errs.append(rel_err(central_difference(f, img, idx), g_img[idx]))
        idx = (rng.integers(h), rng.integers(w), rng.integers(2))
        errs.append(rel_err(central_difference(f, flow, idx), g_flow[idx]))
    assert max(errs) < 1e-4


def test_target_gradient_is_adjoint(backend, rng):
    img = rng.random((8, 8, 3))
    flow = rng.normal(0, 2, (8, 8, 2))
    up = rng.standard_normal((8, 8, 3))
    g_img, _ = backward_warp_grad(img, flow, up)
    lhs = np.sum(backward_warp(img, flow).warped * up)
    assert lhs == pytest.approx(np.sum(img * g_img), rel=1e-12)


def test_clamped_samples_have_no_flow_gradient(backend, rng):
    flow = np.full((4, 4, 2), -20.0)
    _, g = backward_warp_grad(rng.random((4, 4, 1)), flow, np.ones((4, 4, 1)))
    np.testing.assert_array_equal(g, 0.0)


def test_shape_mismatch():
    with pytest.raises(DimensionError):
        backward_warp(np.zeros((4, 4, 1)), np.zeros((4, 5, 2)))
    with pytest.raises(ValueError):
        backward_warp(np.zeros((4, 4, 1)), np.zeros((4, 4, 2)), border="wrap")


@settings(max_examples=25, deadline=None)
@given(value=st.floats(0, 1), seed=st.integers(0, 1000))
def test_constant_image_stays_constant(value, seed):
    flow = np.random.default_rng(seed).normal(0, 5, (5, 6, 2))
    out = backward_warp(np.full((5, 6, 1), value), flow).warped
    np.testing.assert_allclose(out, value, atol=1e-12)
