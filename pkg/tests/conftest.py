import numpy as np
import pytest

from hsdenoise.cube import HsiCube


def make_synthetic_cube(width: int, height: int, bands: int, seed: int = 0) -> HsiCube:
    """Smooth fields plus hard edges, spectrally smooth, normalized to [0, 1].

    Four spatial patterns (sinusoid, ramp, rectangle, disk) are mixed with
    smooth per-band signatures so adjacent bands correlate strongly, the way
    real hyperspectral data does.
    """
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    patterns = [
        np.sin(2 * np.pi * xs / width) * np.cos(2 * np.pi * ys / height),
        (xs + ys) / (width + height),
        ((xs > width * 0.3) & (xs < width * 0.7) & (ys > height * 0.2) & (ys < height * 0.6)).astype(float),
        (((xs - width * 0.7) ** 2 + (ys - height * 0.75) ** 2) < (min(width, height) * 0.18) ** 2).astype(float),
    ]
    b = np.arange(bands, dtype=np.float64)
    centers = rng.uniform(0, bands, size=len(patterns))
    widths = rng.uniform(bands * 0.2, bands * 0.6, size=len(patterns))
    data = np.zeros((bands, height, width))
    for pat, c, w in zip(patterns, centers, widths):
        signature = 0.3 + np.exp(-((b - c) ** 2) / (2 * w**2))
        data += signature[:, None, None] * pat[None]
    lo = data.min(axis=(1, 2), keepdims=True)
    hi = data.max(axis=(1, 2), keepdims=True)
    return HsiCube((data - lo) / (hi - lo))


@pytest.fixture
def small_cube() -> HsiCube:
    return make_synthetic_cube(24, 20, 8, seed=11)
