"""
Tests for cropping, resizing and tensor conversion
"""
import numpy as np
import pytest

from numisnet.errors import ConfigError, PreprocessingError
from numisnet.imaging import (
    RawImage,
    crop_reverse,
    dump_ppm,
    is_suspect_crop,
    isotropic_resize,
    load_image,
    load_tensors,
    prepare_image,
    save_image,
    to_input_tensor,
)


def gradient_image(height, width):
    """Pixels encode their own column so crops can be located"""
    columns = np.tile(np.arange(width) % 256, (height, 1)).astype(np.uint8)
    rows = np.tile((np.arange(height) % 256)[:, np.newaxis], (1, width)).astype(np.uint8)
    return RawImage(np.stack([columns, rows, np.zeros_like(rows)], axis=-1))


class TestCropReverse:
    """Test crop_reverse"""

    def test_left_right_square_halves(self):
        img = RawImage(np.zeros((400, 800, 3), np.uint8))
        img.pixels[:, 400:] = 200
        crop = crop_reverse(img, "left-right")
        assert (crop.width, crop.height) == (400, 400)
        assert np.all(crop.pixels == 200)

    def test_single_is_identity(self):
        img = gradient_image(400, 400)
        np.testing.assert_array_equal(crop_reverse(img, "single").pixels, img.pixels)

    def test_left_right_centered(self):
        img = gradient_image(400, 700)
        crop = crop_reverse(img, "left-right")
        assert (crop.width, crop.height) == (350, 350)
        np.testing.assert_array_equal(crop.pixels, img.pixels[25:375, 350:700])

    def test_unknown_layout(self):
        with pytest.raises(ConfigError):
            crop_reverse(gradient_image(4, 4), "top-bottom")

    def test_too_narrow(self):
        with pytest.raises(PreprocessingError):
            crop_reverse(RawImage(np.zeros((5, 1, 3), np.uint8), source="thin.png"),
                         "left-right")

    def test_zero_area_names_file(self):
        with pytest.raises(PreprocessingError, match="empty.png"):
            RawImage(np.zeros((0, 4, 3), np.uint8), source="empty.png")


class TestIsotropicResize:
    """Test isotropic_resize"""

    @pytest.mark.parametrize("side", [600, 150])
    def test_constant_stays_constant(self, side):
        img = RawImage(np.full((side, side, 3), 123, np.uint8))
        resized = isotropic_resize(img, 300)
        assert resized.pixels.shape == (300, 300, 3)
        assert np.all(resized.pixels == 123)

    def test_checkerboard_interpolates(self):
        board = np.array([[0, 255], [255, 0]], dtype=np.uint8)
        img = RawImage(np.repeat(board[..., np.newaxis], 3, axis=2))
        center = isotropic_resize(img, 4).pixels[1:3, 1:3].astype(int)
        assert np.all(center > 0)
        assert np.all(center < 255)

    def test_same_size_copies(self):
        img = gradient_image(8, 8)
        resized = isotropic_resize(img, 8)
        np.testing.assert_array_equal(resized.pixels, img.pixels)
        assert resized.pixels is not img.pixels

    def test_requires_square(self):
        with pytest.raises(PreprocessingError):
            isotropic_resize(gradient_image(4, 6), 4)

    def test_bad_target(self):
        with pytest.raises(ConfigError):
            isotropic_resize(gradient_image(4, 4), 0)


class TestTensors:
    """Test tensor conversion and file IO"""

    def test_scaling(self):
        pixels = np.zeros((1, 2, 3), np.uint8)
        pixels[0, 1] = 255
        tensor = to_input_tensor(RawImage(pixels))
        assert tensor.dtype == np.float32
        assert tensor[0, 0].tolist() == [0.0, 0.0, 0.0]
        assert tensor[0, 1].tolist() == [1.0, 1.0, 1.0]

    @pytest.mark.parametrize("suffix", [".png", ".ppm"])
    def test_save_load(self, tmp_path, suffix):
        img = gradient_image(6, 9)
        path = tmp_path / f"coin{suffix}"
        save_image(img, path)
        np.testing.assert_array_equal(load_image(path).pixels, img.pixels)

    def test_unreadable(self, tmp_path):
        path = tmp_path / "broken.png"
        path.write_bytes(b"not an image")
        with pytest.raises(PreprocessingError, match="broken.png"):
            load_image(path)

    def test_prepare_pipeline(self, tmp_path):
        img = RawImage(np.full((40, 80, 3), 255, np.uint8))
        img.pixels[:, :40] = 0
        path = tmp_path / "lot.png"
        save_image(img, path)
        tensor = prepare_image(path, "left-right", 20)
        assert tensor.shape == (20, 20, 3)
        assert np.all(tensor == 1.0)
        assert load_tensors([path, path], "left-right", 20).shape == (2, 20, 20, 3)

    def test_suspect_crop(self):
        assert is_suspect_crop(RawImage(np.full((5, 5, 3), 90, np.uint8)))
        assert not is_suspect_crop(gradient_image(20, 20))

    def test_dump_ppm(self, tmp_path):
        dump_ppm(np.full((3, 3, 3), 0.5, np.float32), tmp_path / "debug.png")
        assert load_image(tmp_path / "debug.ppm").pixels[0, 0, 0] == 128
