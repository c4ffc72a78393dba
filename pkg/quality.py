"""
Image comparison metrics: MSE, PSNR and mean structural similarity (MSSIM),
plus CSV/JSON serialization of benchmark rows.
"""

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, List, Optional, TextIO, Union

import numpy as np
from skimage.metrics import mean_squared_error, structural_similarity

from imagecore import DimensionMismatchError, ImageBuffer

logger = logging.getLogger(__name__)

NMAX = 255.0
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

# structural similarity settings: Gaussian window sigma 1.5 (11x11 support), K1, K2
SSIM_SIGMA = 1.5
SSIM_WINDOW = 11
SSIM_K1 = 0.01
SSIM_K2 = 0.03

CSV_COLUMNS = ["method", "image", "psnr_db", "mssim", "mse", "iterations", "seconds"]


@dataclass(frozen=True)
class QualityReport:
    mse: float
    psnr: float
    mssim: float

    def row(self, method: str, image: str, iterations: int, seconds: Optional[float]) -> dict:
        return {
            "method": method,
            "image": image,
            "psnr_db": self.psnr,
            "mssim": self.mssim,
            "mse": self.mse,
            "iterations": iterations,
            "seconds": seconds,
        }

    def to_json(self) -> str:
        return json.dumps({key: _json_number(value) for key, value in asdict(self).items()}, sort_keys=True)

    def format(self) -> str:
        return f"mse={format_number(self.mse)} psnr_db={format_number(self.psnr)} mssim={format_number(self.mssim)}"


def format_number(value: Optional[float]) -> str:
    """Shortest round-trip text for a float; +inf prints as 'inf', None as empty"""
    if value is None:
        return ""
    if isinstance(value, float) and math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return repr(value) if isinstance(value, float) else str(value)


def _json_number(value):
    if isinstance(value, float) and math.isinf(value):
        return format_number(value)
    return value


def _check_same(a: ImageBuffer, b: ImageBuffer) -> None:
    if a.data.shape != b.data.shape:
        raise DimensionMismatchError(
            f"cannot compare {a.width}x{a.height}x{a.channels} with {b.width}x{b.height}x{b.channels}"
        )


def luminance(img: ImageBuffer) -> np.ndarray:
    """Gray channel as is; RGB as 0.299 R + 0.587 G + 0.114 B"""
    if img.channels == 1:
        return img.data[:, :, 0]
    r, g, b = LUMA_WEIGHTS
    return r * img.data[:, :, 0] + g * img.data[:, :, 1] + b * img.data[:, :, 2]


def mse(a: ImageBuffer, b: ImageBuffer, use_luminance: bool = False) -> float:
    """Mean squared difference over every sample (pixels x channels)"""
    _check_same(a, b)
    if use_luminance:
        return float(mean_squared_error(luminance(a), luminance(b)))
    return float(mean_squared_error(a.data, b.data))


def psnr(
    a: ImageBuffer, b: ImageBuffer, nmax: float = NMAX, literal: bool = False, use_luminance: bool = False
) -> float:
    """10 log10(nmax^2 / MSE) in dB; identical images give +inf.

    literal=True drops the square on the peak, matching a common misprint of
    the formula; its values are not comparable with standard PSNR.
    """
    error = mse(a, b, use_luminance)
    if error == 0:
        return math.inf
    peak = nmax if literal else nmax * nmax
    return 10.0 * math.log10(peak / error)


def mssim(
    a: ImageBuffer, b: ImageBuffer, sigma: float = SSIM_SIGMA, k1: float = SSIM_K1, k2: float = SSIM_K2
) -> float:
    """Mean of the Gaussian-windowed SSIM map of the luminance images"""
    _check_same(a, b)
    if min(a.width, a.height) < SSIM_WINDOW:
        raise ValueError(f"image {a.width}x{a.height} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    return float(
        structural_similarity(
            luminance(a),
            luminance(b),
            gaussian_weights=True,
            sigma=sigma,
            use_sample_covariance=False,
            data_range=NMAX,
            K1=k1,
            K2=k2,
        )
    )


def report(original: ImageBuffer, restored: ImageBuffer) -> QualityReport:
    """MSE, PSNR and MSSIM of a restoration against its ground truth"""
    return QualityReport(mse(original, restored), psnr(original, restored), mssim(original, restored))


def write_csv(rows: Iterable[dict], stream: TextIO) -> None:
    writer = csv.DictWriter(stream, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({key: format_number(row.get(key)) for key in CSV_COLUMNS})


def rows_to_csv(rows: Iterable[dict]) -> str:
    buffer = io.StringIO()
    write_csv(rows, buffer)
    return buffer.getvalue()


def rows_to_json(rows: Iterable[dict]) -> str:
    payload = [{key: _json_number(row.get(key)) for key in CSV_COLUMNS} for row in rows]
    return json.dumps(payload, indent=2) + "\n"


def read_csv(text: str) -> List[dict]:
    """Parse rows written by write_csv back into typed values"""
    parsed = []
    for row in csv.DictReader(io.StringIO(text)):
        parsed.append(
            {
                "method": row["method"],
                "image": row["image"],
                "psnr_db": float(row["psnr_db"]),
                "mssim": float(row["mssim"]),
                "mse": float(row["mse"]),
                "iterations": int(row["iterations"]),
                "seconds": float(row["seconds"]) if row["seconds"] else None,
            }
        )
    return parsed


def save_rows(rows: List[dict], csv_path: Optional[Union[str, Path]] = None, json_path: Optional[Union[str, Path]] = None) -> None:
    if csv_path:
        Path(csv_path).write_text(rows_to_csv(rows), encoding="utf-8")
        logger.info("wrote %s", csv_path)
    if json_path:
        Path(json_path).write_text(rows_to_json(rows), encoding="utf-8")
        logger.info("wrote %s", json_path)
