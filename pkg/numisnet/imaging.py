"""
Image preparation: reverse cropping, isotropic resizing, tensor conversion
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

from .errors import ConfigError, PreprocessingError

logger = logging.getLogger(__name__)

LAYOUTS = ("left-right", "single")
SUSPECT_STD = 2.0

PathLike = Union[str, Path]


@dataclass
class RawImage:
    """8-bit RGB pixels stored as an (height, width, 3) array"""
    pixels: np.ndarray
    source: str = ""

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise PreprocessingError(f"expected RGB pixels, got shape {self.pixels.shape}",
                                     self.source)
        if self.pixels.shape[0] < 1 or self.pixels.shape[1] < 1:
            raise PreprocessingError("image has zero area", self.source)
        if self.pixels.dtype != np.uint8:
            self.pixels = self.pixels.astype(np.uint8)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def to_pil(self) -> Image.Image:
        return Image.fromarray(self.pixels)


def load_image(path: PathLike) -> RawImage:
    """Read a PNG or binary PPM file as RGB"""
    try:
        with Image.open(path) as img:
            pixels = np.asarray(img.convert("RGB"), dtype=np.uint8).copy()
    except (OSError, ValueError) as e:
        raise PreprocessingError(f"cannot read image: {e}", str(path))
    return RawImage(pixels, source=str(path))


def save_image(img: RawImage, path: PathLike):
    """Write PNG or PPM depending on the file suffix"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fmt = "PPM" if path.suffix.lower() in (".ppm", ".pnm") else "PNG"
    img.to_pil().save(path, format=fmt)


def crop_reverse(img: RawImage, layout: str = "single") -> RawImage:
    """Square crop holding just the reverse

    left-right images show the obverse on the left and the reverse on the
    right; the centred square of the right half is kept.
    """
    if layout not in LAYOUTS:
        raise ConfigError(f"unknown layout '{layout}' (expected one of {', '.join(LAYOUTS)})")
    x0, x1 = 0, img.width
    if layout == "left-right":
        if img.width < 2:
            raise PreprocessingError("left-right layout needs width >= 2", img.source)
        x0 = img.width // 2
    width = x1 - x0
    side = min(width, img.height)
    if side < 1:
        raise PreprocessingError("degenerate crop", img.source)
    left = x0 + (width - side) // 2
    top = (img.height - side) // 2
    return RawImage(img.pixels[top:top + side, left:left + side].copy(), source=img.source)


def isotropic_resize(img: RawImage, target: int) -> RawImage:
    """Bilinear resize of a square image to target x target"""
    if img.width != img.height:
        raise PreprocessingError(f"expected a square image, got {img.width}x{img.height}",
                                 img.source)
    if target < 1:
        raise ConfigError(f"resize target must be positive, got {target}")
    if img.width == target:
        return RawImage(img.pixels.copy(), source=img.source)
    resized = img.to_pil().resize((target, target), resample=Image.Resampling.BILINEAR)
    return RawImage(np.asarray(resized, dtype=np.uint8).copy(), source=img.source)


def to_input_tensor(img: RawImage) -> np.ndarray:
    """H x W x 3 float32 tensor scaled to [0, 1]"""
    return img.pixels.astype(np.float32) / np.float32(255.0)


def is_suspect_crop(img: RawImage, threshold: float = SUSPECT_STD) -> bool:
    """Near-constant crops usually come from unusual lot layouts"""
    return float(img.pixels.std()) < threshold


def prepare_image(path: PathLike, layout: str, side: int) -> np.ndarray:
    """Load, crop, resize and scale one image"""
    return to_input_tensor(isotropic_resize(crop_reverse(load_image(path), layout), side))


def load_tensors(paths, layout: str, side: int) -> np.ndarray:
    """Stack prepared inputs into an (N, side, side, 3) array"""
    out = np.empty((len(paths), side, side, 3), dtype=np.float32)
    for i, path in enumerate(paths):
        out[i] = prepare_image(path, layout, side)
    return out


def dump_ppm(tensor: np.ndarray, path: PathLike):
    """Debug dump of a [0, 1] input tensor"""
    pixels = np.clip(np.rint(tensor * 255.0), 0, 255).astype(np.uint8)
    save_image(RawImage(pixels), Path(path).with_suffix(".ppm"))
