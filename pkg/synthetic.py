"""
Deterministic synthetic scenes with a known ground truth and a square hole
or a set of thin scratches.

Every scene is 3-channel (gray tones replicated) so the colour code paths are
exercised; damaged copies paint the hole with the red key colour.
"""

from dataclasses import dataclass, replace
from typing import Tuple

import cv2
import numpy as np

from imagecore import ImageBuffer, Mask, damage

KINDS = ("edge", "ramp", "stripes", "disk", "spiral")
MASK_SHAPES = ("square", "scratches")
KEY_COLOR = (255.0, 0.0, 0.0)
MIN_SIZE = 32

# scratch end points as fractions of the image side, (x, y); all stay clear of the centre
SCRATCHES = (
    ((0.10, 0.18), (0.90, 0.26)),
    ((0.78, 0.90), (0.86, 0.10)),
    ((0.12, 0.80), (0.70, 0.74)),
)


@dataclass(frozen=True)
class SyntheticCase:
    kind: str
    truth: ImageBuffer
    mask: Mask

    @property
    def damaged(self) -> ImageBuffer:
        return damage(self.truth, self.mask, KEY_COLOR)


def _check_size(size: int, hole: int) -> None:
    if size < MIN_SIZE:
        raise ValueError(f"size must be >= {MIN_SIZE}, got {size}")
    if not 1 <= hole <= size - 2:
        raise ValueError(f"hole must lie in [1, {size - 2}], got {hole}")


def centered_hole(size: int, hole: int) -> Mask:
    """Square hole of side `hole` centred in a size x size image"""
    bits = np.zeros((size, size), dtype=bool)
    start = (size - hole) // 2
    bits[start : start + hole, start : start + hole] = True
    return Mask(bits)


def _rgb(gray: np.ndarray) -> ImageBuffer:
    return ImageBuffer(np.repeat(gray[:, :, np.newaxis], 3, axis=2))


def edge(size: int = 64, tones: Tuple[float, float] = (64.0, 192.0), hole: int = 16) -> SyntheticCase:
    """Vertical edge through the centre of column size // 2.

    Columns to the left take tones[0], columns to the right tones[1]; the
    column the edge passes through takes their mean.
    """
    _check_size(size, hole)
    x = np.arange(size)
    centre = size // 2
    row = np.where(x < centre, tones[0], tones[1]).astype(np.float64)
    row[centre] = 0.5 * (tones[0] + tones[1])
    return SyntheticCase("edge", _rgb(np.tile(row, (size, 1))), centered_hole(size, hole))


def ramp(size: int = 64, alpha: float = 2.0, hole: int = 16) -> SyntheticCase:
    """Horizontal ramp u = alpha * x"""
    _check_size(size, hole)
    if alpha < 0 or alpha * (size - 1) > 255:
        raise ValueError(f"alpha {alpha} takes the ramp outside [0, 255]")
    gray = np.tile(alpha * np.arange(size, dtype=np.float64), (size, 1))
    return SyntheticCase("ramp", _rgb(gray), centered_hole(size, hole))


def stripes(
    size: int = 64, period: int = 8, tones: Tuple[float, float] = (80.0, 176.0), hole: int = 16
) -> SyntheticCase:
    """Horizontal bands, period rows per light/dark pair"""
    _check_size(size, hole)
    if period < 2 or period % 2:
        raise ValueError(f"period must be an even number >= 2, got {period}")
    band = (np.arange(size) // (period // 2)) % 2
    column = np.where(band == 0, tones[0], tones[1]).astype(np.float64)
    return SyntheticCase("stripes", _rgb(np.tile(column[:, np.newaxis], (1, size))), centered_hole(size, hole))


def disk(size: int = 64, tones: Tuple[float, float] = (64.0, 192.0), hole: int = 16) -> SyntheticCase:
    """Disk of radius size/4 whose rim passes through the image centre"""
    _check_size(size, hole)
    radius = size / 4.0
    y, x = np.mgrid[0:size, 0:size].astype(np.float64)
    cx, cy = size / 2.0 - radius, size / 2.0
    inside = (x - cx) ** 2 + (y - cy) ** 2 <= radius * radius
    return SyntheticCase("disk", _rgb(np.where(inside, tones[1], tones[0])), centered_hole(size, hole))


def spiral(
    size: int = 64, period: float = 16.0, tones: Tuple[float, float] = (64.0, 192.0), hole: int = 16
) -> SyntheticCase:
    """Two-tone Archimedean spiral bands centred in the image.

    The band profile is tanh(3 cos(phase)), so each isophote is a curved edge
    about two pixels wide instead of a jagged staircase.
    """
    _check_size(size, hole)
    if period < 4:
        raise ValueError(f"period must be >= 4, got {period}")
    y, x = np.mgrid[0:size, 0:size].astype(np.float64)
    dx, dy = x - (size - 1) / 2.0, y - (size - 1) / 2.0
    phase = 2.0 * np.pi * np.hypot(dx, dy) / period - np.arctan2(dy, dx)
    mid, half = 0.5 * (tones[0] + tones[1]), 0.5 * (tones[1] - tones[0])
    gray = mid + half * np.tanh(3.0 * np.cos(phase))
    return SyntheticCase("spiral", _rgb(gray), centered_hole(size, hole))


def scratch_mask(size: int, width: int = 3) -> Mask:
    """Three thin straight scratches crossing the image at different angles"""
    if size < MIN_SIZE:
        raise ValueError(f"size must be >= {MIN_SIZE}, got {size}")
    if not 1 <= width <= size // 8:
        raise ValueError(f"scratch width must lie in [1, {size // 8}], got {width}")
    canvas = np.zeros((size, size), dtype=np.uint8)
    for (x0, y0), (x1, y1) in SCRATCHES:
        start = (int(round(x0 * (size - 1))), int(round(y0 * (size - 1))))
        end = (int(round(x1 * (size - 1))), int(round(y1 * (size - 1))))
        cv2.line(canvas, start, end, 255, thickness=width, lineType=cv2.LINE_8)
    return Mask(canvas > 0)


def make(kind: str, size: int = 64, hole: int = 16, mask_shape: str = "square", scratch_width: int = 3,
         **params) -> SyntheticCase:
    builders = {"edge": edge, "ramp": ramp, "stripes": stripes, "disk": disk, "spiral": spiral}
    if kind not in builders:
        raise ValueError(f"unknown scene {kind!r}; choose from {', '.join(KINDS)}")
    if mask_shape not in MASK_SHAPES:
        raise ValueError(f"unknown mask shape {mask_shape!r}; choose from {', '.join(MASK_SHAPES)}")
    case = builders[kind](size=size, hole=hole, **params)
    if mask_shape == "scratches":
        case = replace(case, mask=scratch_mask(size, scratch_width))
    return case


def noisy(img: ImageBuffer, std: float, seed: int = 0) -> ImageBuffer:
    """Add seeded Gaussian noise, clipped to [0, 255]"""
    rng = np.random.default_rng(seed)
    return ImageBuffer(np.clip(img.data + rng.normal(0.0, std, img.data.shape), 0.0, 255.0))
