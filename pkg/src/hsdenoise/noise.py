"""Seeded simulation of additive Gaussian noise over a hyperspectral cube.

Three noise cases are supported, all parameterized on the 0-255 gray scale
and divided by 255 when applied to [0, 1]-normalized cubes:

    fixed           one sigma for every band
    uniform         per-band sigma drawn i.i.d. uniform on (0, sigma_max]
    gaussian_curve  sigma_n follows a bell profile over the band axis whose
                    squared values sum exactly to beta**2

Noisy cubes are NOT clipped to [0, 1]: metrics and training operate on the
unclipped signal, and clipping only ever happens when emitting display
images. Sampling is fully deterministic: see rng for the stream layout. The
``stream`` argument of add_noise selects an independent substream so that
each augmented copy of a cube receives independent noise under one seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .cube import HsiCube
from .errors import BadDimensionsError, NotNormalizedError

GRAY_SCALE = 255.0

#: Guard band accepted by add_noise around the nominal [0, 1] range.
RANGE_GUARD = 0.01


@dataclass(frozen=True)
class NoiseSpec:
    """Parametric description of one simulated noise case."""

    case: str  # "fixed" | "uniform" | "gaussian_curve"
    sigma: float = 0.0
    sigma_max: float = 0.0
    beta: float = 0.0
    eta: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.case == "fixed":
            if self.sigma <= 0:
                raise ValueError("fixed noise requires sigma > 0")
        elif self.case == "uniform":
            if self.sigma_max <= 0:
                raise ValueError("uniform noise requires sigma_max > 0")
        elif self.case == "gaussian_curve":
            if self.beta <= 0 or self.eta <= 0:
                raise ValueError("gaussian_curve noise requires beta > 0 and eta > 0")
        else:
            raise ValueError(f"unknown noise case: {self.case!r}")

    @classmethod
    def fixed(cls, sigma: float, seed: int = 0) -> "NoiseSpec":
        return cls(case="fixed", sigma=sigma, seed=seed)

    @classmethod
    def uniform(cls, sigma_max: float, seed: int = 0) -> "NoiseSpec":
        return cls(case="uniform", sigma_max=sigma_max, seed=seed)

    @classmethod
    def gaussian_curve(cls, beta: float, eta: float, seed: int = 0) -> "NoiseSpec":
        return cls(case="gaussian_curve", beta=beta, eta=eta, seed=seed)


def sigma_profile(spec: NoiseSpec, bands: int) -> np.ndarray:
    """Per-band noise standard deviations on the 0-255 scale.

    For the bell-shaped case the profile is

        sigma_n = beta * sqrt( w_n / sum_i w_i ),
        w_n = exp(-(n - B/2)**2 / (2 * eta**2)),  n = 1..B

    so that sum_n sigma_n**2 == beta**2 exactly in algebra.
    """
    if bands < 1:
        raise BadDimensionsError(f"band count must be >= 1, got {bands}")
    if spec.case == "fixed":
        return np.full(bands, float(spec.sigma))
    if spec.case == "uniform":
        u = rng.uniforms(spec.seed, rng.PROFILE_STREAM, bands)
        return spec.sigma_max * (1.0 - u)  # (0, sigma_max]
    n = np.arange(1, bands + 1, dtype=np.float64)
    w = np.exp(-((n - bands / 2.0) ** 2) / (2.0 * spec.eta**2))
    return spec.beta * np.sqrt(w / w.sum())


def add_noise(cube: HsiCube, spec: NoiseSpec, stream: int = 0) -> HsiCube:
    """X + V with band n of V i.i.d. zero-mean Gaussian, std sigma_n / 255.

    The cube must already be normalized (values inside [-0.01, 1.01]); the
    result is deliberately not clipped. Band n of variant ``stream`` draws
    from the Philox substream keyed (seed, stream << 32 | n), so bands can be
    generated in any order, or in parallel, with identical output.
    """
    lo, hi = float(cube.data.min()), float(cube.data.max())
    if lo < -RANGE_GUARD or hi > 1.0 + RANGE_GUARD:
        raise NotNormalizedError(
            f"cube values span [{lo:.4g}, {hi:.4g}]; normalize to [0, 1] before adding noise"
        )
    if not 0 <= stream < 2**31:
        raise ValueError(f"stream must be in [0, 2**31), got {stream}")
    sigmas = sigma_profile(spec, cube.bands) / GRAY_SCALE
    out = np.empty_like(cube.data, dtype=np.float64)
    npix = cube.height * cube.width
    for n in range(cube.bands):
        z = rng.normals(spec.seed, (stream << 32) | n, npix)
        out[n] = cube.data[n] + sigmas[n] * z.reshape(cube.height, cube.width)
    return HsiCube(out.astype(cube.data.dtype, copy=False))
