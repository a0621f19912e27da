import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from actionrec.errors import FormatError, ShapeError, TruncatedFileError
from actionrec.imaging import (
    ImageBuffer, convert_colorspace, filter2d, gaussian, laplacian_of_gaussian, load_ppm,
    read_pnm, save_ppm, write_pnm,
)


def _write(path, header, payload):
    path.write_bytes(header + payload)
    return path


def test_load_white_p6(tmp_path):
    img = load_ppm(_write(tmp_path / "w.ppm", b"P6\n2 2\n255\n", b"\xff" * 12))
    assert img.data.shape == (2, 2, 3)
    assert np.all(img.data == 1.0)


def test_load_black_p5(tmp_path):
    img = load_ppm(_write(tmp_path / "b.pgm", b"P5 1 1 255\n", b"\x00"))
    assert img.channels == 1
    assert img.data[0, 0, 0] == 0.0


def test_header_comments(tmp_path):
    img = load_ppm(_write(tmp_path / "c.pgm", b"P5\n# made by hand\n2 1\n255\n", b"\x00\x80"))
    assert img.data[0, 1, 0] == 128 / 255


def test_truncated_payload(tmp_path):
    path = _write(tmp_path / "t.ppm", b"P6\n4 4\n255\n", b"\x00" * 9)
    with pytest.raises(TruncatedFileError):
        load_ppm(path)
    with pytest.raises(OSError):
        load_ppm(path)


@pytest.mark.parametrize("header", [b"P3\n1 1\n255\n", b"P6\n0 1\n255\n", b"P6\nx 1\n255\n", b"P6\n1 1\n0\n"])
def test_malformed_header(tmp_path, header):
    with pytest.raises(FormatError):
        load_ppm(_write(tmp_path / "m.ppm", header, b"\x00" * 3))


def test_sixteen_bit_roundtrip(tmp_path):
    raw = np.arange(12, dtype=np.int64).reshape(3, 4, 1) * 5000
    write_pnm(tmp_path / "l.pgm", raw, 65535)
    back, maxval = read_pnm(tmp_path / "l.pgm")
    assert maxval == 65535
    np.testing.assert_array_equal(back, raw)


@settings(max_examples=50, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(1, 7), st.integers(1, 7), st.sampled_from([1, 3]))))
def test_save_load_roundtrip(tmp_path_factory, raw):
    path = tmp_path_factory.mktemp("rt") / "img.ppm"
    img = ImageBuffer(raw / 255.0)
    save_ppm(path, img)
    again = load_ppm(path)
    np.testing.assert_array_equal(again.data, img.data)
    save_ppm(path, again)
    np.testing.assert_array_equal(load_ppm(path).data, img.data)


def test_image_buffer_validation():
    with pytest.raises(ShapeError):
        ImageBuffer(np.zeros((2, 2, 2)))
    with pytest.raises(ShapeError):
        ImageBuffer(np.zeros((0, 2, 3)))


def test_gray_of_white():
    out = convert_colorspace(ImageBuffer(np.ones((1, 1, 3))), "GRAY")
    assert out.channels == 1
    assert out.data[0, 0, 0] == pytest.approx(1.0, abs=1e-12)


def test_lab_of_black():
    out = convert_colorspace(ImageBuffer(np.zeros((1, 1, 3))), "LAB")
    np.testing.assert_allclose(out.data[0, 0], [0.0, 0.5, 0.5], atol=1e-12)


def test_lab_of_white_is_neutral():
    out = convert_colorspace(ImageBuffer(np.ones((1, 1, 3))), "LAB")
    np.testing.assert_allclose(out.data[0, 0], [1.0, 0.5, 0.5], atol=1e-4)


def test_ycrcb_of_mid_gray():
    # hand evaluation: Y = 0.5, Cr = (R - Y) * 0.713 + 0.5, Cb = (B - Y) * 0.564 + 0.5
    out = convert_colorspace(ImageBuffer(np.full((1, 1, 3), 0.5)), "YCrCb")
    np.testing.assert_allclose(out.data[0, 0], [0.5, 0.5, 0.5], atol=1e-12)


def test_ycrcb_of_pure_red():
    out = convert_colorspace(ImageBuffer(np.array([[[1.0, 0.0, 0.0]]])), "YCrCb")
    y = 0.299
    np.testing.assert_allclose(out.data[0, 0], [y, (1 - y) * 0.713 + 0.5, -y * 0.564 + 0.5], atol=1e-12)


def test_gray_input_conversions():
    g = ImageBuffer(np.full((2, 2, 1), 0.3))
    assert convert_colorspace(g, "GRAY") is g or np.array_equal(convert_colorspace(g, "GRAY").data, g.data)
    for target in ("RGB", "LAB", "YCrCb"):
        with pytest.raises(ShapeError):
            convert_colorspace(g, target)
    with pytest.raises(ValueError):
        convert_colorspace(ImageBuffer(np.zeros((1, 1, 3))), "HSV")


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 5), st.just(3)),
              elements=st.floats(0, 1)))
def test_gray_in_unit_interval(data):
    out = convert_colorspace(ImageBuffer(data), "GRAY").data
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_filter_constant_image():
    img = ImageBuffer(np.full((5, 7, 1), 0.25))
    kernel = np.random.default_rng(0).random((3, 5))
    kernel /= kernel.sum()
    np.testing.assert_allclose(filter2d(img, kernel).data, 0.25, rtol=0, atol=1e-15)


def test_filter_identity():
    data = np.random.default_rng(1).random((4, 6, 1))
    np.testing.assert_array_equal(filter2d(ImageBuffer(data), np.array([[1.0]])).data, data)


def test_filter_impulse_box():
    data = np.zeros((7, 7, 1))
    data[3, 3] = 1.0
    out = filter2d(ImageBuffer(data), np.full((3, 3), 1 / 9)).data[:, :, 0]
    expected = np.zeros((7, 7))
    expected[2:5, 2:5] = 1 / 9
    np.testing.assert_allclose(out, expected, atol=1e-15)


def test_filter_is_convolution_not_correlation():
    data = np.zeros((5, 5, 1))
    data[2, 2] = 1.0
    kernel = np.zeros((3, 3))
    kernel[0, 0] = 1.0
    out = filter2d(ImageBuffer(data), kernel).data[:, :, 0]
    # flipped kernel: the impulse lands up-left of the centre
    assert out[1, 1] == 1.0 and out.sum() == 1.0


def test_filter_clamps_borders():
    data = np.zeros((1, 3, 1))
    data[0, 0] = 1.0
    out = filter2d(ImageBuffer(data), np.full((1, 3), 1 / 3)).data[0, :, 0]
    # left neighbour of column 0 replicates column 0
    np.testing.assert_allclose(out, [2 / 3, 1 / 3, 0.0])


def test_filter_rejects_bad_shapes():
    img = ImageBuffer(np.zeros((3, 3, 1)))
    with pytest.raises(ShapeError):
        filter2d(img, np.ones((2, 3)))
    with pytest.raises(ShapeError):
        filter2d(ImageBuffer(np.zeros((3, 3, 3))), np.ones((3, 3)))


def test_gaussian_and_log_of_constant():
    img = ImageBuffer(np.full((20, 20, 1), 0.6))
    np.testing.assert_allclose(gaussian(img, 2.0).data, 0.6, atol=1e-12)
    np.testing.assert_allclose(laplacian_of_gaussian(img, 2.0).data, 0.0, atol=1e-12)
