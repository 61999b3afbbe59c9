import json
import sys
from math import pi

import numpy as np
import pytest

from paramball import cli, imageio, lighting, toyworld
from paramball.adversary import AttackConfig, run_attack


def write_scene(path, **kw):
    spec = {
        "scene_version": 1,
        "mesh": {"shape": "sphere", "detail": 2},
        "lighting": {"default": True},
        "camera": {"position": [0, -3, 2], "fov": 3.0},
        "background": 0.0,
        "resolution": [16, 12],
    }
    spec.update(kw)
    path.write_text(json.dumps(spec))
    return path


def toy_scene(path, scene):
    cam = scene.cameras[0].to_dict()
    return write_scene(
        path,
        mesh={"shape": toyworld.CLASSES[scene.label], "detail": toyworld.DETAIL},
        camera=cam,
        background=float(scene.backgrounds[0][0]) if np.ndim(scene.backgrounds[0]) else scene.backgrounds[0],
        resolution=list(toyworld.RESOLUTION),
        label=scene.label,
    )


def test_render_sphere_has_foreground(tmp_path):
    scene = write_scene(tmp_path / "s.json")
    assert cli.main(["render", str(scene), "--out", str(tmp_path / "r"), "--format", "pfm"]) == 0
    img = imageio.load_pfm(tmp_path / "r" / "view00.pfm")
    assert img.shape == (12, 16, 3)
    assert (img.max(axis=-1) > 0).sum() > 20


def test_render_single_pixel(tmp_path):
    scene = write_scene(tmp_path / "s.json")
    assert cli.main(["render", str(scene), "--resolution", "1x1", "--format", "raw", "--out", str(tmp_path / "r")]) == 0
    assert (tmp_path / "r" / "view00.raw").stat().st_size == 12


def test_render_is_deterministic_across_runs_and_threads(tmp_path):
    scene = write_scene(tmp_path / "s.json", camera_ring={"count": 3, "fov": 3.0})
    spec = json.loads(scene.read_text())
    del spec["camera"]
    scene.write_text(json.dumps(spec))
    for name, threads in (("a", "1"), ("b", "1"), ("c", "3")):
        assert cli.main(["render", str(scene), "--format", "raw", "--threads", threads, "--out", str(tmp_path / name)]) == 0
    for v in range(3):
        ref = (tmp_path / "a" / f"view{v:02d}.raw").read_bytes()
        assert (tmp_path / "b" / f"view{v:02d}.raw").read_bytes() == ref
        assert (tmp_path / "c" / f"view{v:02d}.raw").read_bytes() == ref


def test_project_env_and_skylight(tmp_path):
    imageio.save_pfm(np.ones((16, 32, 3)), tmp_path / "env.pfm")
    assert cli.main(["project-env", str(tmp_path / "env.pfm"), "--bands", "2", "--out", str(tmp_path / "e.shc")]) == 0
    U = lighting.load_shc(tmp_path / "e.shc")
    assert U.shape == (9, 3)
    np.testing.assert_allclose(U[0], 2 * np.sqrt(pi), rtol=1e-6)
    assert cli.main(["skylight", "--theta-s", "0.5", "--out", str(tmp_path / "k.shc")]) == 0
    assert lighting.load_shc(tmp_path / "k.shc").shape == (49, 3)


def test_gradcheck_verb(tmp_path, capsys):
    scene = write_scene(tmp_path / "s.json")
    assert cli.main(["gradcheck", str(scene), "--samples", "5"]) == 0
    out = capsys.readouterr().out
    for space in ("lighting", "albedo", "geometry"):
        assert f"{space}: max rel. error" in out
    sky = write_scene(tmp_path / "k.json", lighting={"skylight": {"theta_s": 0.7, "phi_s": 0.3}})
    assert cli.main(["gradcheck", str(sky), "--space", "skylight"]) == 0


def test_gradcheck_failure_exit(tmp_path, monkeypatch):
    from paramball import gradcheck

    monkeypatch.setitem(gradcheck.TOLERANCES, "geometry", 0.0)
    scene = write_scene(tmp_path / "s.json")
    assert cli.main(["gradcheck", str(scene), "--space", "geometry", "--samples", "3"]) == 1


@pytest.fixture(scope="module")
def suite():
    clf = toyworld.bundled_classifier()
    return clf, toyworld.attack_suite(clf, per_class=2)


def test_attack_exit_codes_and_artifacts(tmp_path, suite):
    clf, scenes = suite
    fooled = None
    for s in scenes:
        if run_attack(s, clf, AttackConfig(s.label, eps=0.1, gamma=0.05, max_iter=30)).fooled:
            fooled = s
            break
    assert fooled is not None
    path = toy_scene(tmp_path / "s.json", fooled)
    out = tmp_path / "a"
    assert cli.main(["attack", str(path), "--out", str(out)]) == 0
    rows = [json.loads(l) for l in (out / "trace.jsonl").read_text().splitlines()]
    assert rows[0]["config"]["eps"] == 0.1 and rows[0]["config"]["gamma"] == 0.05
    assert rows[0]["config"]["max_iter"] == 30
    assert (out / "before_view00.png").exists() and (out / "after_view00.png").exists()
    assert lighting.load_shc(out / "final_lighting.shc").shape == (49, 3)
    # zero step size never fools, but the trace is still written
    out2 = tmp_path / "b"
    assert cli.main(["attack", str(path), "--gamma", "0", "--max-iter", "2", "--out", str(out2)]) == 2
    assert len((out2 / "trace.jsonl").read_text().splitlines()) == 3


def test_geometry_attack_default_eps(tmp_path, suite):
    _, scenes = suite
    path = toy_scene(tmp_path / "s.json", scenes[0])
    out = tmp_path / "g"
    code = cli.main(["attack", str(path), "--space", "geometry", "--max-iter", "2", "--out", str(out)])
    assert code in (0, 2)
    head = json.loads((out / "trace.jsonl").read_text().splitlines()[0])
    assert head["config"]["eps"] == 0.002
    assert (out / "final_mesh.obj").exists()


def test_skylight_attack_params_in_range(tmp_path, suite):
    _, scenes = suite
    path = toy_scene(tmp_path / "s.json", scenes[0])
    spec = json.loads(path.read_text())
    spec["lighting"] = {"skylight": {"theta_s": 0.9, "phi_s": 6.2, "turbidity": 3.0}}
    path.write_text(json.dumps(spec))
    out = tmp_path / "k"
    code = cli.main(["attack", str(path), "--space", "skylight", "--gamma", "5", "--eps", "inf", "--max-iter", "5", "--out", str(out)])
    assert code in (0, 2)
    p = json.loads((out / "final_skylight.json").read_text())
    lo, hi = lighting.load_fit().turbidity_range
    assert set(p) == {"theta_s", "phi_s", "turbidity"}
    assert 0 <= p["theta_s"] <= pi / 2 and 0 <= p["phi_s"] < 2 * pi and lo <= p["turbidity"] <= hi


def test_attack_through_provider(tmp_path, suite):
    _, scenes = suite
    path = toy_scene(tmp_path / "s.json", scenes[0])
    provider = f"{sys.executable} -m paramball.protocol --echo"
    out = tmp_path / "p"
    assert cli.main(["attack", str(path), "--provider", provider, "--classes", "4", "--max-iter", "2", "--out", str(out)]) == 2
    assert cli.main(["attack", str(path), "--provider", provider, "--out", str(out)]) == 3


def test_augment_random_count(tmp_path):
    out = tmp_path / "aug"
    assert cli.main(["augment", "--mode", "random", "--count", "50", "--seed", "7", "--out", str(out)]) == 0
    rows = [json.loads(l) for l in (out / "manifest.jsonl").read_text().splitlines()]
    assert len(rows) == 50 and len(list(out.glob("*.png"))) == 50
    assert rows[0]["provenance"]["seed"] == 7 and rows[0]["provenance"]["mode"] == "random"
    assert len(rows[0]["lighting"]) == 49 and rows[0]["label"] in range(4)


def test_info(capsys):
    assert cli.main(["info"]) == 0
    assert "toy classifier" in capsys.readouterr().out


def exit_code(argv):
    """Return code of main, whether returned or raised by the argument parser."""
    try:
        return cli.main(argv)
    except SystemExit as exc:
        return exc.code


@pytest.mark.parametrize(
    "argv, code",
    [
        (["render"], 3),
        (["bogus"], 3),
        (["render", "missing.json"], 4),
        (["render", "{scene}", "--resolution", "axb"], 3),
        (["render", "{scene}", "--threads", "0"], 3),
        (["attack", "{scene}"], 3),
        (["attack", "{scene}", "--label", "0"], 5),
    ],
)
def test_error_exit_codes(tmp_path, argv, code):
    scene = write_scene(tmp_path / "s.json")
    argv = [a.replace("{scene}", str(scene)) for a in argv] + ["--out", str(tmp_path / "o")]
    assert exit_code(argv) == code
