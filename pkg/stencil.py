"""
Finite-difference stencils and separable Gaussian smoothing on single channels.

Grid convention, used everywhere: x is the column index (increasing to the
right), y is the row index (increasing downward). A Channel is a 2-D float64
array indexed [y, x]. Borders are mirror-reflected (half-sample symmetric,
``dcba|abcd``), which makes every derivative vanish on constants and keeps the
Gaussian mass-preserving.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple, Tuple

import cv2
import numpy as np

Channel = np.ndarray

UNIT_TOLERANCE = 1e-6


class Hessian(NamedTuple):
    uxx: Channel
    uxy: Channel
    uyy: Channel


@dataclass(frozen=True)
class Kernel1D:
    radius: int
    weights: np.ndarray

    def __post_init__(self):
        if self.weights.shape != (2 * self.radius + 1,):
            raise ValueError(f"kernel of radius {self.radius} needs {2 * self.radius + 1} taps")


def gaussian_kernel(sigma: float) -> Kernel1D:
    """Sampled Gaussian truncated at ceil(3 sigma) and renormalized to sum 1"""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return Kernel1D(0, np.ones(1))
    radius = int(math.ceil(3.0 * sigma))
    weights = cv2.getGaussianKernel(2 * radius + 1, sigma, cv2.CV_64F).ravel()
    return Kernel1D(radius, weights / weights.sum())


def convolve_gaussian(ch: Channel, sigma: float) -> Channel:
    """Separable Gaussian blur, rows first then columns, mirrored borders"""
    kernel = gaussian_kernel(sigma)
    if kernel.radius == 0:
        return np.array(ch, dtype=np.float64, copy=True)
    src = np.ascontiguousarray(ch, dtype=np.float64)
    return cv2.sepFilter2D(
        src, cv2.CV_64F, kernel.weights, kernel.weights, borderType=cv2.BORDER_REFLECT
    )


def _mirror(ch: Channel) -> np.ndarray:
    return np.pad(np.asarray(ch, dtype=np.float64), 1, mode="symmetric")


def gradient(ch: Channel) -> Tuple[Channel, Channel]:
    """Central differences (ux, uy)"""
    p = _mirror(ch)
    ux = (p[1:-1, 2:] - p[1:-1, :-2]) / 2.0
    uy = (p[2:, 1:-1] - p[:-2, 1:-1]) / 2.0
    return ux, uy


def hessian(ch: Channel) -> Hessian:
    """Second differences (uxx, uxy, uyy) on the 3x3 neighbourhood"""
    p = _mirror(ch)
    centre = p[1:-1, 1:-1]
    uxx = p[1:-1, 2:] - 2.0 * centre + p[1:-1, :-2]
    uyy = p[2:, 1:-1] - 2.0 * centre + p[:-2, 1:-1]
    uxy = (p[2:, 2:] + p[:-2, :-2] - p[:-2, 2:] - p[2:, :-2]) / 4.0
    return Hessian(uxx, uxy, uyy)


def directional_second_derivative(h: Hessian, theta: np.ndarray) -> Channel:
    """theta^T H theta for a unit direction field theta[..., (x, y)]"""
    theta = np.asarray(theta, dtype=np.float64)
    tx, ty = theta[..., 0], theta[..., 1]
    norm = np.hypot(tx, ty)
    if np.any(np.abs(norm - 1.0) > UNIT_TOLERANCE):
        raise ValueError("direction field must be unit-norm")
    return tx * tx * h.uxx + 2.0 * tx * ty * h.uxy + ty * ty * h.uyy


def flux_divergence(ch: Channel, g: np.ndarray) -> Channel:
    """div(g grad u) with half-pixel fluxes and zero flux through the border.

    g is sampled on pixels and averaged arithmetically onto the half-pixel
    positions between neighbours.
    """
    u = np.asarray(ch, dtype=np.float64)
    g = np.broadcast_to(np.asarray(g, dtype=np.float64), u.shape)
    flux_x = (g[:, :-1] + g[:, 1:]) * 0.5 * (u[:, 1:] - u[:, :-1])
    flux_y = (g[:-1, :] + g[1:, :]) * 0.5 * (u[1:, :] - u[:-1, :])
    div = np.zeros_like(u)
    div[:, :-1] += flux_x
    div[:, 1:] -= flux_x
    div[:-1, :] += flux_y
    div[1:, :] -= flux_y
    return div


def tensor_divergence(ch: Channel, d11: np.ndarray, d12: np.ndarray, d22: np.ndarray) -> Channel:
    """div(D grad u) for a per-pixel symmetric tensor D, in flux form.

    On each half-pixel edge the normal derivative is the forward difference,
    the tangential one is the mean of the two adjacent central differences, and
    the tensor entries are averaged from the two pixels.
    """
    u = np.asarray(ch, dtype=np.float64)
    ux, uy = gradient(u)

    def half_x(a):
        return (a[:, :-1] + a[:, 1:]) * 0.5

    def half_y(a):
        return (a[:-1, :] + a[1:, :]) * 0.5

    flux_x = half_x(d11) * (u[:, 1:] - u[:, :-1]) + half_x(d12) * half_x(uy)
    flux_y = half_y(d12) * half_y(ux) + half_y(d22) * (u[1:, :] - u[:-1, :])
    div = np.zeros_like(u)
    div[:, :-1] += flux_x
    div[:, 1:] -= flux_x
    div[:-1, :] += flux_y
    div[1:, :] -= flux_y
    return div
