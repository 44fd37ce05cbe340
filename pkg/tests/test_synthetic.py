import numpy as np
import pytest

from midframe.errors import ConfigError, DomainError
from midframe.synthetic import (SyntheticScene, generate_triplet, occlusion_suite, render, rotation_flow,
                                scene_suite)
from midframe.warp import backward_warp


def test_global_shift_midframe_is_half_shift():
    tr = generate_triplet(SyntheticScene("global_shift", 32, 40, seed=1, shift=(8.0, 0.0)), 0.5)
    np.testing.assert_array_equal(tr.frame_t[:, 4:], tr.frame0[:, :-4])
    np.testing.assert_array_equal(tr.v01, np.broadcast_to((8.0, 0.0), (32, 40, 2)))
    np.testing.assert_array_equal(tr.v10, -tr.v01)


@pytest.mark.parametrize("kind", ["global_shift", "two_layer_occlusion", "rotation", "brightness_ramp"])
def test_deterministic(kind):
    scene = SyntheticScene(kind, 24, 24, seed=3)
    a, b = generate_triplet(scene, 0.3), generate_triplet(scene, 0.3)
    for x, y in ((a.frame0, b.frame0), (a.frame_t, b.frame_t), (a.frame1, b.frame1), (a.v01, b.v01)):
        np.testing.assert_array_equal(x, y)
    assert a.frame0.min() >= 0 and a.frame0.max() <= 1


def test_rotation_flow_probes(rng):
    deg = 4.0
    flow = rotation_flow(33, 41, deg)
    cx, cy = 20.0, 16.0
    a = np.deg2rad(deg)
    for _ in range(10):
        y, x = rng.integers(33), rng.integers(41)
        ex = cx + np.cos(a) * (x - cx) - np.sin(a) * (y - cy) - x
        ey = cy + np.sin(a) * (x - cx) + np.cos(a) * (y - cy) - y
        np.testing.assert_allclose(flow[y, x], (ex, ey), atol=1e-6)


@pytest.mark.parametrize("kind", ["global_shift", "rotation", "brightness_ramp", "two_layer_occlusion"])
def test_flow_explains_frames(kind):
    scene = SyntheticScene(kind, 48, 48, seed=8, shift=(3.3, -2.1), angle=3.0, gain=0.02,
                           v_bg=(1.0, 0.5), v_fg=(4.0, -2.0), fg_radius=9.0)
    tr = generate_triplet(scene)
    res = backward_warp(tr.frame1, tr.v01)
    mask = res.validity > 0
    if kind == "two_layer_occlusion":
        # drop frame-0 pixels on the disc and pixels whose match lands on it in frame 1
        ys, xs = np.mgrid[0:48, 0:48]
        c = 23.5
        for dx, dy in ((0, 0), np.subtract(scene.v_fg, scene.v_bg)):
            mask &= np.hypot(xs - c - dx, ys - c - dy) > scene.fg_radius + 1.5
    err = np.abs(res.warped - tr.frame0)[mask]
    assert err.max() < 2e-2


def test_scene_validation():
    with pytest.raises(ConfigError):
        SyntheticScene("spiral")
    with pytest.raises(ConfigError):
        SyntheticScene("global_shift", 4, 4)
    with pytest.raises(ConfigError):
        SyntheticScene("rotation", angle=90)
    with pytest.raises(DomainError):
        generate_triplet(SyntheticScene("global_shift"), 1.5)


def test_render_endpoints_match_triplet():
    scene = SyntheticScene("rotation", 20, 20, seed=2)
    tr = generate_triplet(scene, 0.25)
    np.testing.assert_array_equal(render(scene, 0.0), tr.frame0)
    np.testing.assert_array_equal(render(scene, 0.25), tr.frame_t)


def test_suites():
    scenes = occlusion_suite(5, 32, seed=1)
    assert len(scenes) == 5 and all(s.kind == "two_layer_occlusion" for s in scenes)
    assert scenes == occlusion_suite(5, 32, seed=1)
    for kind in ("global_shift", "rotation", "brightness_ramp"):
        assert len(scene_suite(kind, 3, 24)) == 3
