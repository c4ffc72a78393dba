"""
Structure tensor field, its closed-form eigensystem, and diffusion weights.

All per-pixel functions accept numpy arrays of any (matching) shape as well as
plain floats, and evaluate elementwise.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from imagecore import ImageBuffer, save_float_field
from stencil import convolve_gaussian, gradient

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

DEFAULT_EPS = 1e-12
EQUAL_EIGENVALUES = 1e-12


@dataclass(frozen=True)
class TensorField:
    """Symmetric 2x2 tensor per pixel; j21 is stored once as j12."""

    j11: np.ndarray
    j12: np.ndarray
    j22: np.ndarray

    @property
    def height(self) -> int:
        return self.j11.shape[0]

    @property
    def width(self) -> int:
        return self.j11.shape[1]


@dataclass(frozen=True)
class EigenField:
    """Per-pixel (lam_plus, lam_minus, theta_minus); theta_minus[..., (x, y)] is the isophote direction."""

    lam_plus: np.ndarray
    lam_minus: np.ndarray
    theta_minus: np.ndarray

    @property
    def theta_plus(self) -> np.ndarray:
        return perpendicular(self.theta_minus)


@dataclass(frozen=True)
class CedParams:
    c1: float = 0.001
    c2: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.c1 <= 1.0:
            raise ValueError(f"c1 must lie in [0, 1], got {self.c1}")
        if self.c2 <= 0:
            raise ValueError(f"c2 must be > 0, got {self.c2}")


def perpendicular(theta: np.ndarray) -> np.ndarray:
    """Rotate a direction field by +90 degrees: (x, y) -> (-y, x)"""
    theta = np.asarray(theta, dtype=np.float64)
    return np.stack([-theta[..., 1], theta[..., 0]], axis=-1)


def structure_tensor(img: ImageBuffer, sigma: float, rho: float) -> TensorField:
    """K_rho * sum_i grad(K_sigma * u_i) grad(K_sigma * u_i)^T"""
    if sigma < 0 or rho < 0:
        raise ValueError(f"sigma and rho must be >= 0, got {sigma}, {rho}")
    shape = (img.height, img.width)
    s11, s12, s22 = np.zeros(shape), np.zeros(shape), np.zeros(shape)
    for i in range(img.channels):
        ux, uy = gradient(convolve_gaussian(img.channel(i), sigma))
        s11 += ux * ux
        s12 += ux * uy
        s22 += uy * uy
    return TensorField(
        convolve_gaussian(s11, rho),
        convolve_gaussian(s12, rho),
        convolve_gaussian(s22, rho),
    )


def eigen_decompose(tf: TensorField, eps: float = DEFAULT_EPS) -> EigenField:
    """Closed-form eigenvalues and the isophote eigenvector of each tensor.

    theta_minus is normalized so that its y component is >= 0 (x >= 0 on ties).
    Where j12 vanishes the formula degenerates to 0/0 and the axis-aligned
    eigenvector is used instead, (0, 1) for isotropic tensors.
    """
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    j11 = np.asarray(tf.j11, dtype=np.float64)
    j12 = np.asarray(tf.j12, dtype=np.float64)
    j22 = np.asarray(tf.j22, dtype=np.float64)

    diff = j11 - j22
    root = np.sqrt(diff * diff + 4.0 * j12 * j12)
    trace = j11 + j22
    lam_plus = 0.5 * (trace + root)
    lam_minus = 0.5 * (trace - root)

    # (-(j22 - j11 + root), 2 j12) and (2 j12, -(j11 - j22 + root)) span the same
    # eigenvector; pick the one whose leading sum does not cancel.
    a = -diff + root
    b = diff + root
    use_first = j22 >= j11
    vx = np.where(use_first, -a, 2.0 * j12)
    vy = np.where(use_first, 2.0 * j12, -b)

    degenerate = np.abs(j12) < eps
    axis_x = degenerate & (np.abs(diff) >= eps) & (j11 < j22)
    vx = np.where(degenerate, np.where(axis_x, 1.0, 0.0), vx)
    vy = np.where(degenerate, np.where(axis_x, 0.0, 1.0), vy)

    norm = np.hypot(vx, vy)
    vx, vy = vx / norm, vy / norm
    flip = (vy < 0) | ((vy == 0) & (vx < 0))
    vx = np.where(flip, -vx, vx)
    vy = np.where(flip, -vy, vy)
    return EigenField(lam_plus, lam_minus, np.stack([vx, vy], axis=-1))


def diffusion_weight(lam_plus: ArrayLike, lam_minus: ArrayLike, c: float, k: float) -> ArrayLike:
    """f = c / (1 + sqrt(lam_plus + lam_minus) / k)"""
    if k <= 0:
        raise ValueError(f"k must be > 0, got {k}")
    contrast = np.maximum(np.asarray(lam_plus, dtype=np.float64) + lam_minus, 0.0)
    f = c / (1.0 + np.sqrt(contrast) / k)
    return float(f) if np.ndim(f) == 0 else f


def ced_eigenvalues(lam_plus: ArrayLike, lam_minus: ArrayLike, p: CedParams) -> Tuple[ArrayLike, ArrayLike]:
    """Coherence-enhancing diffusion speeds across (lam1) and along (lam2) the structure"""
    gap = np.asarray(lam_plus, dtype=np.float64) - lam_minus
    equal = np.abs(gap) <= EQUAL_EIGENVALUES
    safe_gap = np.where(equal, 1.0, gap)
    lam2 = np.where(equal, p.c1, p.c1 + (1.0 - p.c1) * np.exp(-p.c2 / (safe_gap * safe_gap)))
    lam1 = np.full_like(lam2, p.c1)
    if lam2.ndim == 0:
        return float(lam1), float(lam2)
    return lam1, lam2


def assemble_tensor(lam1: ArrayLike, lam2: ArrayLike, theta_minus: np.ndarray) -> Tuple[ArrayLike, ArrayLike, ArrayLike]:
    """D = lam1 theta+ theta+^T + lam2 theta- theta-^T with theta+ = perp(theta-)"""
    theta_minus = np.asarray(theta_minus, dtype=np.float64)
    tx, ty = theta_minus[..., 0], theta_minus[..., 1]
    d11 = lam1 * ty * ty + lam2 * tx * tx
    d12 = (lam2 - lam1) * tx * ty
    d22 = lam1 * tx * tx + lam2 * ty * ty
    return d11, d12, d22


def dump_fields(eig: EigenField, directory: Union[str, Path]) -> None:
    """Write lam_plus, lam_minus and both theta_minus components as float TIFFs"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_float_field(eig.lam_plus, directory / "lam_plus.tiff")
    save_float_field(eig.lam_minus, directory / "lam_minus.tiff")
    save_float_field(eig.theta_minus[..., 0], directory / "theta_minus_x.tiff")
    save_float_field(eig.theta_minus[..., 1], directory / "theta_minus_y.tiff")
    logger.info("eigen fields written to %s", directory)
