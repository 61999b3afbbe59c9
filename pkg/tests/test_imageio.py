import numpy as np
import pytest

from paramball import imageio


@pytest.fixture
def img(rng):
    return rng.uniform(0, 2, size=(5, 7, 3))


def test_raw_round_trip(tmp_path, img):
    imageio.save_raw(img, tmp_path / "a.raw")
    assert (tmp_path / "a.raw").stat().st_size == 5 * 7 * 3 * 4
    np.testing.assert_array_equal(imageio.load_raw(tmp_path / "a.raw", 5, 7), img.astype(np.float32))
    with pytest.raises(ValueError):
        imageio.load_raw(tmp_path / "a.raw", 5, 6)


def test_pfm_round_trip_and_row_order(tmp_path, img):
    imageio.save_pfm(img, tmp_path / "a.pfm")
    np.testing.assert_array_equal(imageio.load_pfm(tmp_path / "a.pfm"), img.astype(np.float32))
    data = (tmp_path / "a.pfm").read_bytes()
    head = b"PF\n7 5\n-1.0\n"
    assert data.startswith(head)
    # first stored row is the bottom one
    first = np.frombuffer(data[len(head) : len(head) + 7 * 12], "<f4").reshape(7, 3)
    np.testing.assert_array_equal(first, img[-1].astype(np.float32))


def test_grayscale_big_endian_pfm(tmp_path):
    vals = np.arange(6, dtype=">f4")
    (tmp_path / "g.pfm").write_bytes(b"Pf\n3 2\n1.0\n" + vals.tobytes())
    out = imageio.load_pfm(tmp_path / "g.pfm")
    assert out.shape == (2, 3, 3)
    np.testing.assert_array_equal(out[:, :, 1], [[3, 4, 5], [0, 1, 2]])


def test_ppm_round_trip_within_quantization(tmp_path, img):
    img = np.clip(img, 0, 1)
    imageio.save_ppm(img, tmp_path / "a.ppm")
    back = imageio.load_ppm(tmp_path / "a.ppm")
    enc = back ** (1 / imageio.GAMMA)
    np.testing.assert_allclose(enc, img ** (1 / imageio.GAMMA), atol=0.5 / 255 + 1e-9)


def test_ppm_header_comments(tmp_path):
    (tmp_path / "c.ppm").write_bytes(b"P6\n# comment\n1 1\n255\n\xff\x00\x80")
    np.testing.assert_allclose(imageio.load_ppm(tmp_path / "c.ppm", linearize=False)[0, 0], [1, 0, 128 / 255])


@pytest.mark.parametrize("data", [b"P3\n1 1\n255\n1 2 3", b"P6\n1 1\n65535\n", b"P6\n2 2\n255\n\x00", b"P6\n1"])
def test_bad_ppm(tmp_path, data):
    (tmp_path / "b.ppm").write_bytes(data)
    with pytest.raises(ValueError):
        imageio.load_ppm(tmp_path / "b.ppm")


def test_display_encoding_clamps():
    out = imageio.to_display(np.array([-1.0, 0.0, 1.0, 4.0]))
    np.testing.assert_array_equal(out, [0, 0, 255, 255])
    np.testing.assert_allclose(imageio.from_display(np.array([255])), [1.0])


def test_save_image_dispatch(tmp_path, img):
    from PIL import Image

    for ext in ("png", "ppm", "pfm", "raw"):
        assert imageio.save_image(img, tmp_path / f"x.{ext}").exists()
    assert Image.open(tmp_path / "x.png").size == (7, 5)
    with pytest.raises(ValueError):
        imageio.save_image(img, tmp_path / "x.tiff")
    with pytest.raises(ValueError):
        imageio.load_environment(tmp_path / "x.png")
