import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from midframe._backend import use_backend
from midframe.approx import approximate
from midframe.bme import BilateralMotion
from midframe.errors import ConfigError, DimensionError
from midframe.grid import to_luma
from midframe.synth import (CANDIDATE_NAMES, FilterStack, apply_dynamic_filters, apply_dynamic_filters_grad,
                            blend_raw, build_candidates, extract_context, selector_indices)
from midframe.synthetic import SyntheticScene, generate_triplet
from oracles import blend_loop, central_difference, rel_err


def random_filters(rng, h, w, n, k):
    c = rng.random((h, w, n, k, k))
    return c / c.sum(axis=(2, 3, 4), keepdims=True)


# context -------------------------------------------------------------------

def test_context_of_constant_image():
    ctx = extract_context(np.full((5, 6, 3), 0.4))
    assert ctx.shape == (5, 6, 8)
    np.testing.assert_allclose(ctx[..., 0], 0.4)
    np.testing.assert_array_equal(ctx[..., 1:], 0.0)


def test_context_luma_channel_is_luma(rng):
    img = rng.random((6, 7, 3))
    np.testing.assert_array_equal(extract_context(img)[..., 0], to_luma(img))


def test_vertical_edge_lights_two_columns():
    img = np.zeros((6, 8, 1))
    img[:, 4:] = 1.0
    ctx = extract_context(img)
    cols = np.nonzero(ctx[..., 1].any(axis=0))[0]
    np.testing.assert_array_equal(cols, [3, 4])
    np.testing.assert_allclose(ctx[:, 3:5, 1], 1.0)      # |gx| = 0.5 scaled by 2
    np.testing.assert_array_equal(ctx[..., 2], 0.0)
    np.testing.assert_array_equal(ctx[..., 5], 0.0)      # no falling edge


def test_context_channels_in_unit_range(rng):
    ctx = extract_context((rng.random((20, 20, 3)) > 0.5).astype(float))
    assert ctx.min() >= 0.0 and ctx.max() <= 1.0


# candidates ----------------------------------------------------------------

def _motions(shape, v01, v10, t, bm0=None, bm1=None):
    z = np.zeros((*shape, 2))
    bm = BilateralMotion(t, z if bm0 is None else bm0, z if bm1 is None else bm1)
    return bm, approximate(np.broadcast_to(v01, (*shape, 2)), np.broadcast_to(v10, (*shape, 2)), t)


def test_static_scene_candidates_equal_input(rng):
    img = rng.random((8, 9, 3))
    ctx = extract_context(img)
    bm, ap = _motions((8, 9), (0.0, 0.0), (0.0, 0.0), 0.5)
    cs = build_candidates(img, img, ctx, ctx, bm, ap)
    assert cs.names == CANDIDATE_NAMES
    for f in cs.frames:
        np.testing.assert_array_equal(f, img)


def test_candidate_order_with_distinct_constants():
    f0 = np.full((4, 4, 3), 0.2)
    f1 = np.full((4, 4, 3), 0.7)
    c0, c1 = np.zeros((4, 4, 8)), np.ones((4, 4, 8))
    bm, ap = _motions((4, 4), (1.0, 0.0), (-1.0, 0.0), 0.5)
    cs = build_candidates(f0, f1, c0, c1, bm, ap)
    np.testing.assert_allclose(cs.frames[:, 0, 0, 0], [0.2, 0.7, 0.2, 0.7, 0.2, 0.7])
    np.testing.assert_allclose(cs.contexts[:, 0, 0, 0], [0, 1, 0, 1, 0, 1])


@pytest.mark.parametrize("selector, n", [("BM", 2), ("Appx4", 4), ("BM+Appx2", 4), ("BM+Appx4", 6)])
def test_selectors(selector, n):
    assert len(selector_indices(selector)) == n
    img = np.zeros((4, 4, 3))
    ctx = np.zeros((4, 4, 8))
    bm, ap = _motions((4, 4), (0, 0), (0, 0), 0.5)
    cs = build_candidates(img, img, ctx, ctx, bm, ap, selector)
    assert len(cs) == n
    if selector == "BM+Appx2":
        assert cs.names == ("bm_t0", "bm_t1", "fw_t0", "bw_t1")


def test_unknown_selector():
    with pytest.raises(ConfigError):
        selector_indices("BM+Appx3")


def test_exact_flows_reproduce_midframe():
    tr = generate_triplet(SyntheticScene("global_shift", 40, 40, seed=4, shift=(6.0, 2.0)), 0.5)
    v = np.broadcast_to((6.0, 2.0), (40, 40, 2))
    bm = BilateralMotion(0.5, -0.5 * v, 0.5 * v)
    ap = approximate(v, -v, 0.5)
    ctx0, ctx1 = extract_context(tr.frame0), extract_context(tr.frame1)
    cs = build_candidates(tr.frame0, tr.frame1, ctx0, ctx1, bm, ap)
    # integer half-shifts: every candidate is an exact copy on pixels whose sources are inside
    for f in cs.frames:
        np.testing.assert_allclose(f[2:-2, 4:-4], tr.frame_t[2:-2, 4:-4], atol=1e-3)


def test_candidate_dimension_checks(rng):
    img = rng.random((6, 6, 3))
    ctx = extract_context(img)
    bm, ap = _motions((6, 6), (0, 0), (0, 0), 0.5)
    with pytest.raises(DimensionError):
        build_candidates(img, img[:5], ctx, ctx, bm, ap)
    bm_bad, _ = _motions((5, 6), (0, 0), (0, 0), 0.5)
    with pytest.raises(DimensionError):
        build_candidates(img, img, ctx, ctx, bm_bad, ap)


# dynamic filters ------------------------------------------------------------

def test_one_hot_filter_selects_candidate(backend, rng):
    frames = rng.random((6, 7, 8, 3))
    for c in range(6):
        out = apply_dynamic_filters(frames, FilterStack.one_hot(7, 8, 6, 5, c))
        np.testing.assert_array_equal(out, frames[c])


def test_uniform_filter_on_constant_candidates(backend):
    out = apply_dynamic_filters(np.full((6, 5, 5, 3), 0.3), FilterStack.uniform(5, 5, 6, 5))
    np.testing.assert_allclose(out, 0.3, atol=1e-15)


@pytest.mark.parametrize("k", [3, 5, 7])
def test_matches_loop_oracle(backend, rng, k):
    frames = rng.random((6, 9, 9, 3))
    coeffs = random_filters(rng, 9, 9, 6, k)
    np.testing.assert_allclose(apply_dynamic_filters(frames, coeffs), blend_loop(frames, coeffs), atol=1e-12)


def test_backends_agree(rng):
    frames = rng.random((4, 10, 11, 3))
    coeffs = random_filters(rng, 10, 11, 4, 5)
    up = rng.standard_normal((10, 11, 3))
    res = {}
    for name in ("numba", "numpy"):
        with use_backend(name):
            res[name] = (apply_dynamic_filters(frames, coeffs), *apply_dynamic_filters_grad(frames, coeffs, up))
    for a, b in zip(res["numba"], res["numpy"]):
        np.testing.assert_allclose(a, b, atol=1e-12)


def test_gradients_match_finite_differences(backend, rng):
    frames = rng.random((6, 7, 8, 3))
    coeffs = random_filters(rng, 7, 8, 6, 5)
    up = rng.standard_normal((7, 8, 3))
    g_f, g_c = apply_dynamic_filters_grad(frames, coeffs, up)
    f = lambda: float(np.sum(blend_raw(frames, coeffs) * up))
    errs = []
    for _ in range(20):
        idx = tuple(rng.integers(s) for s in coeffs.shape)
        errs.append(rel_err(central_difference(f, coeffs, idx), g_f[idx]))
        idx = tuple(rng.integers(s) for s in frames.shape)
        errs.append(rel_err(central_difference(f, frames, idx), g_c[idx]))
    assert max(errs) < 1e-4


def test_coefficient_gradient_closed_form(backend, rng):
    frames = rng.random((6, 6, 6, 3))
    coeffs = random_filters(rng, 6, 6, 6, 3)
    up = rng.standard_normal((6, 6, 3))
    g_f, _ = apply_dynamic_filters_grad(frames, coeffs, up)
    # pixel (y, x) = (2, 3), candidate 4, tap (dy, dx) = (-1, +1)
    assert g_f[2, 3, 4, 0, 2] == pytest.approx(np.dot(frames[4, 1, 4], up[2, 3]), rel=1e-12)


def test_zero_upstream_gives_zero_gradients(backend, rng):
    frames = rng.random((2, 5, 5, 3))
    g_f, g_c = apply_dynamic_filters_grad(frames, random_filters(rng, 5, 5, 2, 3), np.zeros((5, 5, 3)))
    assert not g_f.any() and not g_c.any()


def test_filter_dimension_checks(rng):
    with pytest.raises(DimensionError):
        apply_dynamic_filters(rng.random((6, 5, 5, 3)), random_filters(rng, 5, 5, 4, 3))
    with pytest.raises(DimensionError):
        FilterStack(np.zeros((5, 5, 6, 4, 4)))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), k=st.sampled_from([1, 3, 5]), n=st.integers(1, 6))
def test_output_is_convex_combination(seed, k, n):
    rng = np.random.default_rng(seed)
    frames = rng.random((n, 6, 6, 3))
    out = apply_dynamic_filters(frames, random_filters(rng, 6, 6, n, k))
    assert out.min() >= frames.min() - 1e-12 and out.max() <= frames.max() + 1e-12


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_candidate_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    frames = rng.random((6, 5, 6, 3))
    coeffs = random_filters(rng, 5, 6, 6, 3)
    perm = rng.permutation(6)
    a = apply_dynamic_filters(frames, coeffs)
    b = apply_dynamic_filters(frames[perm], coeffs[:, :, perm])
    np.testing.assert_allclose(a, b, atol=1e-13)
