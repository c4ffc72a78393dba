"""
Image and mask containers plus PNG/PGM/PPM file I/O.

Samples are float64 in the nominal range [0, 255]; 8-bit only exists at the
file boundary.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Tuple, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

SUPPORTED_FORMATS = {"PNG", "PPM"}  # Pillow reports binary PGM as PPM too


class ImageIOError(Exception):
    """Base class for image file errors"""


class ImageNotFoundError(ImageIOError):
    pass


class UnsupportedFormatError(ImageIOError):
    pass


class CorruptImageError(ImageIOError):
    pass


class ImageWriteError(ImageIOError):
    pass


class DimensionMismatchError(ValueError):
    """Raised when two buffers that must be paired differ in shape"""


@dataclass(frozen=True)
class ImageBuffer:
    """Multi-channel real raster stored as an (height, width, channels) array."""

    data: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, np.newaxis]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ValueError(f"image data must be (H, W, 1|3), got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"image must be at least 1x1, got shape {data.shape}")
        if not np.isfinite(data).all():
            raise ValueError("image data contains non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def channel(self, index: int) -> np.ndarray:
        return self.data[:, :, index]

    def copy(self) -> "ImageBuffer":
        return ImageBuffer(self.data.copy())


@dataclass(frozen=True)
class Mask:
    """Per-pixel hole indicator; True marks a pixel to inpaint."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.ascontiguousarray(self.bits, dtype=bool)
        if bits.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {bits.shape}")
        object.__setattr__(self, "bits", bits)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.bits))

    @classmethod
    def empty(cls, width: int, height: int) -> "Mask":
        return cls(np.zeros((height, width), dtype=bool))


def check_pair(img: ImageBuffer, mask: Mask) -> None:
    """Raise DimensionMismatchError unless mask and image share dimensions"""
    if (img.width, img.height) != (mask.width, mask.height):
        raise DimensionMismatchError(
            f"image is {img.width}x{img.height} but mask is {mask.width}x{mask.height}"
        )


def _sample_is_16bit(pil_image: Image.Image) -> bool:
    # Pillow silently narrows 48-bit RGB PNGs to RGB, the decoder rawmode keeps the depth
    for tile in getattr(pil_image, "tile", None) or []:
        args = tile[3] if len(tile) > 3 else None
        rawmode = args[0] if isinstance(args, tuple) and args else args
        if isinstance(rawmode, str) and "16" in rawmode:
            return True
    return False


def _open(path: PathLike) -> Image.Image:
    path = Path(path)
    if not path.is_file():
        raise ImageNotFoundError(f"no such image file: {path}")
    try:
        pil_image = Image.open(path)
    except UnidentifiedImageError as e:
        raise UnsupportedFormatError(f"{path}: not a PNG/PGM/PPM image") from e
    except OSError as e:
        raise CorruptImageError(f"{path}: {e}") from e
    if pil_image.format not in SUPPORTED_FORMATS:
        raise UnsupportedFormatError(f"{path}: format {pil_image.format} is not supported")
    if pil_image.mode in ("I", "I;16", "I;16B", "I;16L", "F") or _sample_is_16bit(pil_image):
        raise UnsupportedFormatError(f"{path}: only 8-bit samples are supported (mode {pil_image.mode})")
    try:
        pil_image.load()
    except (OSError, SyntaxError, ValueError) as e:
        raise CorruptImageError(f"{path}: corrupt image stream ({e})") from e
    return pil_image


def load_image(path: PathLike) -> ImageBuffer:
    """Load an 8-bit PNG/PGM/PPM file; gray gives 1 channel, colour gives 3"""
    pil_image = _open(path)
    mode = pil_image.mode
    if mode == "P":
        pil_image = pil_image.convert("RGBA" if "transparency" in pil_image.info else "RGB")
    elif mode == "1":
        pil_image = pil_image.convert("L")
    mode = pil_image.mode
    if mode in ("LA", "RGBA"):
        logger.warning("%s: alpha channel stripped", path)
        pil_image = pil_image.convert(mode[:-1] if mode == "LA" else "RGB")
        mode = pil_image.mode
    if mode not in ("L", "RGB"):
        raise UnsupportedFormatError(f"{path}: unsupported pixel mode {mode}")
    return ImageBuffer(np.asarray(pil_image, dtype=np.uint8).astype(np.float64))


def to_bytes(img: ImageBuffer) -> np.ndarray:
    """Clamp to [0, 255] and round half away from zero to uint8"""
    clamped = np.clip(img.data, 0.0, 255.0)
    # values are non-negative after clamping, so floor(x + 0.5) rounds half away from zero
    return np.floor(clamped + 0.5).astype(np.uint8)


def save_image(img: ImageBuffer, path: PathLike) -> None:
    """Write an 8-bit PNG/PGM/PPM; the format follows the file suffix"""
    path = Path(path)
    raw = to_bytes(img)
    pil_image = Image.fromarray(raw[:, :, 0], "L") if img.channels == 1 else Image.fromarray(raw, "RGB")
    try:
        pil_image.save(path)
    except (OSError, ValueError, KeyError) as e:
        raise ImageWriteError(f"cannot write {path}: {e}") from e


def save_float_field(field: np.ndarray, path: PathLike) -> None:
    """Write a 2-D real field as a 32-bit float TIFF for inspection"""
    path = Path(path)
    try:
        Image.fromarray(np.asarray(field, dtype=np.float32), "F").save(path, format="TIFF")
    except (OSError, ValueError) as e:
        raise ImageWriteError(f"cannot write {path}: {e}") from e


def mask_from_color(img: ImageBuffer, key: Sequence[float], tol: float = 0.0) -> Mask:
    """Mark pixels whose largest per-channel distance from key is within tol"""
    if img.channels != 3:
        raise ValueError("colour-key masks need a 3-channel image")
    if tol < 0:
        raise ValueError(f"tol must be >= 0, got {tol}")
    key = np.asarray(key, dtype=np.float64).reshape(1, 1, 3)
    distance = np.abs(img.data - key).max(axis=2)
    return Mask(distance <= tol)


def mask_from_file(path: PathLike) -> Mask:
    """Load a grayscale mask image; any nonzero sample marks the hole"""
    img = load_image(path)
    if img.channels != 1:
        raise UnsupportedFormatError(f"{path}: mask images must be grayscale")
    return Mask(img.data[:, :, 0] != 0)


def damage(img: ImageBuffer, mask: Mask, fill: Union[float, Tuple[float, ...]] = 0.0) -> ImageBuffer:
    """Overwrite the hole pixels with a fill colour"""
    check_pair(img, mask)
    fill = np.broadcast_to(np.asarray(fill, dtype=np.float64), (img.channels,))
    data = img.data.copy()
    data[mask.bits] = fill
    return ImageBuffer(data)


def save_mask(mask: Mask, path: PathLike) -> None:
    """Write a mask as an 8-bit grayscale image, hole = 255"""
    save_image(ImageBuffer(np.where(mask.bits, 255.0, 0.0)), path)
