import json
from math import pi

import numpy as np
import pytest

from paramball import lighting, shapes
from paramball.mesh import save_obj
from paramball.scene import SceneError, load_scene, scene_from_dict

CAM = {"position": [0, -3, 2], "look_at": [0, 0, 0], "up": [0, 0, 1], "fov": 3.0}


def scene_dict(**kw):
    d = {"scene_version": 1, "mesh": {"shape": "sphere", "detail": 1}, "lighting": {"default": True},
         "camera": CAM, "resolution": [8, 6]}
    d.update(kw)
    return d


def test_minimal_scene_renders():
    s = scene_from_dict(scene_dict(background=0.25, label=2))
    img = s.render()
    assert img.shape == (6, 8, 3)
    assert s.label == 2
    np.testing.assert_array_equal(s.lighting, lighting.default_lighting())
    # the corner is background
    np.testing.assert_array_equal(img[0, 0], 0.25)


def test_resolution_override_and_camera_ring():
    d = scene_dict(camera_ring={"count": 4, "zenith": pi / 3})
    del d["camera"]
    s = scene_from_dict(d, resolution=(3, 2))
    assert len(s.cameras) == 4
    assert (s.cameras[0].width, s.cameras[0].height) == (3, 2)


def test_scene_file_with_relative_paths(tmp_path):
    save_obj(shapes.icosphere(1, albedo=(0.2, 0.4, 0.6)), tmp_path / "ball.obj")
    U = lighting.default_lighting(2)
    lighting.save_shc(lighting.ShCoeffs(U), tmp_path / "light.shc")
    (tmp_path / "scene.json").write_text(json.dumps(scene_dict(mesh="ball.obj", lighting={"sh": "light.shc"})))
    s = load_scene(tmp_path / "scene.json")
    np.testing.assert_allclose(s.mesh.albedo[0], [0.2, 0.4, 0.6])
    np.testing.assert_allclose(s.lighting, U, atol=1e-12)


def test_constant_albedo_override():
    s = scene_from_dict(scene_dict(albedo=[0.1, 0.2, 0.3]))
    np.testing.assert_array_equal(s.mesh.albedo, np.tile([0.1, 0.2, 0.3], (s.mesh.n_faces, 1)))


def test_skylight_lighting_matches_fit():
    s = scene_from_dict(scene_dict(lighting={"skylight": {"theta_s": 0.6, "phi_s": 1.0, "turbidity": 4.0}}))
    fit = lighting.load_fit()
    np.testing.assert_array_equal(s.lighting, lighting.skylight_sh(lighting.SkylightParams(0.6, 1.0, 4.0), fit))
    assert s.skylight.turbidity == 4.0


@pytest.mark.parametrize(
    "bad",
    [
        {"scene_version": 2},
        {"lighting": {"default": True, "sh": "x.shc"}},
        {"lighting": {}},
        {"lighting": "default"},
        {"mesh": None},
        {"mesh": "missing.obj"},
        {"cameras": [CAM]},
        {"camera": {"fov": 2}},
        {"background": [1, 2]},
        {"background": "missing.pfm"},
        {"resolution": [0, 4]},
    ],
)
def test_invalid_scenes_raise(bad):
    with pytest.raises(SceneError):
        scene_from_dict(scene_dict(**bad))


def test_invalid_json(tmp_path):
    p = tmp_path / "s.json"
    p.write_text("{not json")
    with pytest.raises(SceneError):
        load_scene(p)


def test_background_image_must_match_resolution(tmp_path):
    from paramball import imageio

    imageio.save_pfm(np.zeros((5, 5, 3)), tmp_path / "bg.pfm")
    with pytest.raises(SceneError):
        scene_from_dict(scene_dict(background="bg.pfm"), tmp_path)
    imageio.save_pfm(np.full((6, 8, 3), 0.3), tmp_path / "bg.pfm")
    s = scene_from_dict(scene_dict(background="bg.pfm"), tmp_path)
    assert s.render()[0, 0, 0] == pytest.approx(0.3, abs=1e-7)


def test_with_lighting_drops_skylight():
    s = scene_from_dict(scene_dict(lighting={"skylight": {"theta_s": 0.6}}))
    t = s.with_lighting(s.lighting * 2)
    assert t.skylight is None and t.fit is None
    np.testing.assert_array_equal(t.lighting, 2 * s.lighting)
