"""Quality indexes: per-band PSNR/SSIM, their means, and mean spectral angle.

PSNR uses peak 1.0 by default (cubes are normalized) and caps the zero-MSE
case at 100 dB so aggregation stays finite. SSIM follows the canonical
single-scale form: 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
dynamic range 1.0, evaluated where the window fits entirely inside the band.
The spectral angle is computed per pixel over the band axis and reported in
degrees; zero-norm spectra are skipped and counted rather than assigned an
arbitrary angle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .cube import HsiCube
from .errors import ShapeMismatchError

PSNR_CAP_DB = 100.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(ref_band: np.ndarray, test_band: np.ndarray, peak: float = 1.0) -> float:
    """10 * log10(peak^2 / MSE); identical inputs return the 100 dB cap."""
    if ref_band.shape != test_band.shape:
        raise ShapeMismatchError(
            f"band shapes differ: {ref_band.shape} vs {test_band.shape}"
        )
    if peak <= 0:
        raise ValueError(f"peak must be positive, got {peak}")
    diff = ref_band.astype(np.float64) - test_band.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNR_CAP_DB
    return float(10.0 * np.log10(peak * peak / mse))


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    window = np.outer(g, g)
    return window / window.sum()


def _local_weighted_means(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    win = sliding_window_view(img, window.shape)
    return np.tensordot(win, window, axes=([2, 3], [0, 1]))


def ssim(ref_band: np.ndarray, test_band: np.ndarray) -> float:
    """Mean local structural similarity over all fully interior windows."""
    if ref_band.shape != test_band.shape:
        raise ShapeMismatchError(
            f"band shapes differ: {ref_band.shape} vs {test_band.shape}"
        )
    if min(ref_band.shape) < SSIM_WINDOW:
        raise ShapeMismatchError(
            f"band {ref_band.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )
    x = ref_band.astype(np.float64)
    y = test_band.astype(np.float64)
    window = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    mu_x = _local_weighted_means(x, window)
    mu_y = _local_weighted_means(y, window)
    sig_xx = _local_weighted_means(x * x, window) - mu_x * mu_x
    sig_yy = _local_weighted_means(y * y, window) - mu_y * mu_y
    sig_xy = _local_weighted_means(x * y, window) - mu_x * mu_y
    c1 = SSIM_K1 * SSIM_K1
    c2 = SSIM_K2 * SSIM_K2
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * sig_xy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (sig_xx + sig_yy + c2)
    return float(np.mean(num / den))


def spectral_angles(ref_cube: HsiCube, test_cube: HsiCube) -> tuple[np.ndarray, int]:
    """Per-pixel spectral angle in degrees plus the count of skipped pixels."""
    if ref_cube.data.shape != test_cube.data.shape:
        raise ShapeMismatchError(
            f"cube shapes differ: {ref_cube.data.shape} vs {test_cube.data.shape}"
        )
    if ref_cube.bands < 2:
        raise ShapeMismatchError("spectral angle needs at least 2 bands")
    r = ref_cube.data.reshape(ref_cube.bands, -1).astype(np.float64)
    t = test_cube.data.reshape(test_cube.bands, -1).astype(np.float64)
    dot = np.sum(r * t, axis=0)
    norm_r = np.sqrt(np.sum(r * r, axis=0))
    norm_t = np.sqrt(np.sum(t * t, axis=0))
    valid = (norm_r > 0) & (norm_t > 0)
    cosine = np.clip(dot[valid] / (norm_r[valid] * norm_t[valid]), -1.0, 1.0)
    angles = np.degrees(np.arccos(cosine))
    return angles, int(np.count_nonzero(~valid))


def msa(ref_cube: HsiCube, test_cube: HsiCube) -> float:
    """Mean spectral angle in degrees over all nonzero-norm pixels."""
    angles, _ = spectral_angles(ref_cube, test_cube)
    return float(np.mean(angles)) if angles.size else 0.0


@dataclass
class QualityReport:
    mpsnr: float
    mssim: float
    msa: Optional[float]  # None when the cube has a single band
    per_band_psnr: list[float]
    per_band_ssim: list[float]
    msa_skipped: Optional[int] = None


def report(ref_cube: HsiCube, test_cube: HsiCube, peak: float = 1.0) -> QualityReport:
    if ref_cube.data.shape != test_cube.data.shape:
        raise ShapeMismatchError(
            f"cube shapes differ: {ref_cube.data.shape} vs {test_cube.data.shape}"
        )
    band_psnr = [
        psnr(ref_cube.data[n], test_cube.data[n], peak) for n in range(ref_cube.bands)
    ]
    band_ssim = [
        ssim(ref_cube.data[n], test_cube.data[n]) for n in range(ref_cube.bands)
    ]
    angle: Optional[float] = None
    skipped: Optional[int] = None
    if ref_cube.bands >= 2:
        angles, skipped = spectral_angles(ref_cube, test_cube)
        angle = float(np.mean(angles)) if angles.size else 0.0
    return QualityReport(
        mpsnr=float(np.mean(band_psnr)),
        mssim=float(np.mean(band_ssim)),
        msa=angle,
        per_band_psnr=band_psnr,
        per_band_ssim=band_ssim,
        msa_skipped=skipped,
    )


def write_report_csv(rep: QualityReport, path) -> None:
    """Per-band rows under 'band,psnr_db,ssim', then one summary row."""
    with open(path, "w") as fh:
        fh.write("band,psnr_db,ssim\n")
        for n, (p, s) in enumerate(zip(rep.per_band_psnr, rep.per_band_ssim)):
            fh.write(f"{n},{p!r},{s!r}\n")
        angle = "na" if rep.msa is None else repr(rep.msa)
        fh.write(f"summary,{rep.mpsnr!r},{rep.mssim!r},{angle}\n")
