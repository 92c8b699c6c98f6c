"""Whole-cube denoising by band traversal, plus display-image emission.

Each band is denoised independently: gather its adjacent-band stack, run the
network over the full band (convolutions are size-agnostic), and add the
predicted residual. Optional tiling bounds memory: the band is covered by
core tiles, each evaluated on a margin-extended region and stitched from
core pixels only; with a margin of at least the receptive-field radius the
stitched result matches the untiled one.

Display output clips to [0, 1] at emission only; the numeric pipeline never
clips. PGM (P5) and PPM (P6) files carry 16-bit big-endian samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .cube import HsiCube, load_cube, save_cube
from .errors import BandWindowError, NotNormalizedError, ShapeMismatchError
from .checkpoint import load_checkpoint
from .model import ArchitectureSpec, ModelParams, forward
from .ops import residual_add
from .pipeline import adjacent_bands

# Sanity bounds on denoising input: a normalized-then-noised cube stays well
# inside these even at the heaviest simulated noise, while raw-sensor scales
# (hundreds or thousands) are caught immediately. Noise is never clipped, so
# the bounds must leave room beyond [0, 1].
INPUT_LO = -2.0
INPUT_HI = 3.0


@dataclass(frozen=True)
class DenoiseJob:
    """File-level description of one denoising run."""

    input_path: str
    checkpoint_path: str
    output_path: str
    tile_size: Optional[int] = None
    tile_overlap: Optional[int] = None  # defaults to the receptive-field radius


def _denoise_band(
    y_spatial: np.ndarray,
    y_spectral: np.ndarray,
    params: ModelParams,
    spec: ArchitectureSpec,
    tile_size: Optional[int],
    overlap: int,
) -> np.ndarray:
    if tile_size is None:
        phi, _ = forward(y_spatial, y_spectral, params, spec, want_cache=False)
        return residual_add(y_spatial, phi)
    core = tile_size - 2 * overlap
    if core < 1:
        raise ValueError(
            f"tile size {tile_size} leaves no core pixels at overlap {overlap}"
        )
    _, h, w = y_spatial.shape
    out = np.empty_like(y_spatial)
    for cy in range(0, h, core):
        for cx in range(0, w, core):
            y1, x1 = min(cy + core, h), min(cx + core, w)
            ey0, ex0 = max(cy - overlap, 0), max(cx - overlap, 0)
            ey1, ex1 = min(y1 + overlap, h), min(x1 + overlap, w)
            phi, _ = forward(
                y_spatial[:, ey0:ey1, ex0:ex1],
                y_spectral[:, ey0:ey1, ex0:ex1],
                params,
                spec,
                want_cache=False,
            )
            out[:, cy:y1, cx:x1] = residual_add(
                y_spatial[:, cy:y1, cx:x1],
                phi[:, cy - ey0 : cy - ey0 + (y1 - cy), cx - ex0 : cx - ex0 + (x1 - cx)],
            )
    return out


def denoise_cube(
    cube: HsiCube,
    spec: ArchitectureSpec,
    params: ModelParams,
    tile_size: Optional[int] = None,
    tile_overlap: Optional[int] = None,
) -> HsiCube:
    """Denoise every band of a normalized cube; dims are preserved exactly."""
    if spec.k_adjacent >= cube.bands:
        raise BandWindowError(
            f"checkpoint expects {spec.k_adjacent} adjacent bands but the cube "
            f"has only {cube.bands}"
        )
    lo, hi = float(cube.data.min()), float(cube.data.max())
    if lo < INPUT_LO or hi > INPUT_HI:
        raise NotNormalizedError(
            f"cube values span [{lo:.4g}, {hi:.4g}]; normalize to [0, 1] before denoising"
        )
    overlap = tile_overlap if tile_overlap is not None else spec.receptive_radius
    if tile_size is not None and overlap < spec.receptive_radius:
        raise ValueError(
            f"tile overlap {overlap} below the receptive-field radius "
            f"{spec.receptive_radius}; tiles would not stitch cleanly"
        )
    dtype = np.result_type(cube.data.dtype, params.head.weights.dtype)
    out = np.empty(cube.data.shape, dtype=dtype)
    for band in range(cube.bands):
        y_spatial = cube.data[band][None].astype(dtype, copy=False)
        y_spectral = adjacent_bands(cube, band, spec.k_adjacent).astype(dtype, copy=False)
        out[band] = _denoise_band(y_spatial, y_spectral, params, spec, tile_size, overlap)[0]
    return HsiCube(out)


def run_denoise_job(job: DenoiseJob) -> HsiCube:
    cube = load_cube(job.input_path)
    spec, params, _ = load_checkpoint(job.checkpoint_path)
    result = denoise_cube(cube, spec, params, job.tile_size, job.tile_overlap)
    save_cube(result, job.output_path)
    return result


def _to_u16(band: np.ndarray) -> np.ndarray:
    # Round half up; clipping happens here and nowhere else in the pipeline.
    clipped = np.clip(band.astype(np.float64), 0.0, 1.0)
    return np.floor(clipped * 65535.0 + 0.5).astype(">u2")


def emit_band_image(cube: HsiCube, band: int, path: str | Path) -> None:
    """Write one band as a 16-bit binary PGM (P5), [0,1] mapped to [0,65535]."""
    if not 0 <= band < cube.bands:
        raise BandWindowError(f"band {band} out of range [0, {cube.bands})")
    samples = _to_u16(cube.data[band])
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cube.width} {cube.height}\n65535\n".encode("ascii"))
        fh.write(samples.tobytes())


def emit_pseudocolor(
    cube: HsiCube, bands: tuple[int, int, int], path: str | Path
) -> None:
    """Write three bands as a 16-bit binary PPM (P6), in (R, G, B) order."""
    if len(bands) != 3:
        raise ShapeMismatchError(f"pseudocolor needs exactly 3 bands, got {len(bands)}")
    for b in bands:
        if not 0 <= b < cube.bands:
            raise BandWindowError(f"band {b} out of range [0, {cube.bands})")
    # np.stack drops explicit byte order; force big-endian samples back.
    channels = np.stack([_to_u16(cube.data[b]) for b in bands], axis=-1).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P6\n{cube.width} {cube.height}\n65535\n".encode("ascii"))
        fh.write(np.ascontiguousarray(channels).tobytes())
