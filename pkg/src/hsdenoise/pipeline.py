"""Patch pipeline: band windows, patch extraction, augmentation, spatial split.

Training triples are (clean label, noisy spatial band, noisy adjacent-band
stack). Augmentation applies to the CLEAN cube; noise is added afterwards so
every augmented copy carries independent noise. Rotations are exact index
permutations; rescaling is corner-aligned bilinear interpolation per band.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from .cube import HsiCube
from .errors import BandWindowError, ShapeMismatchError

VALID_ROTATIONS = (0, 90, 180, 270)


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle: origin (x0, y0), size width x height."""

    x0: int
    y0: int
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"rectangle must have positive size, got {self}")

    @property
    def x1(self) -> int:
        return self.x0 + self.width

    @property
    def y1(self) -> int:
        return self.y0 + self.height

    def contains(self, x: int, y: int) -> bool:
        return self.x0 <= x < self.x1 and self.y0 <= y < self.y1

    def intersects(self, other: "Rect") -> bool:
        return (
            self.x0 < other.x1
            and other.x0 < self.x1
            and self.y0 < other.y1
            and other.y0 < self.y1
        )


@dataclass
class PatchSample:
    """One training example plus its provenance."""

    y_spatial: np.ndarray  # (1, p, p) noisy current band
    y_spectral: np.ndarray  # (K, p, p) noisy adjacent bands
    label: np.ndarray  # (1, p, p) clean current band
    band: int
    y0: int
    x0: int


@dataclass(frozen=True)
class AugmentSpec:
    """Rotation angles and rescale factors applied to the clean cube."""

    rotations: tuple[int, ...] = (0,)
    scales: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        if not self.rotations or not self.scales:
            raise ValueError("augmentation needs at least one rotation and one scale")
        for r in self.rotations:
            if r not in VALID_ROTATIONS:
                raise ValueError(f"rotation must be one of {VALID_ROTATIONS}, got {r}")
        for s in self.scales:
            if s <= 0:
                raise ValueError(f"scale must be positive, got {s}")


def adjacent_bands(cube: HsiCube, band: int, k_adjacent: int) -> np.ndarray:
    """The k_adjacent bands nearest to ``band``, excluding it, ascending.

    Interior bands get the symmetric window of K/2 per side; near the
    spectrum edges the window shifts inward so exactly K in-range bands are
    still returned.
    """
    nbands = cube.bands
    if not 0 <= band < nbands:
        raise BandWindowError(f"band {band} out of range [0, {nbands})")
    if not 1 <= k_adjacent < nbands:
        raise BandWindowError(
            f"adjacent band count {k_adjacent} must satisfy 1 <= K < {nbands} bands"
        )
    lo = band - k_adjacent // 2
    hi = lo + k_adjacent  # inclusive window [lo, hi] spans K+1 bands incl. `band`
    if lo < 0:
        lo, hi = 0, k_adjacent
    elif hi > nbands - 1:
        hi, lo = nbands - 1, nbands - 1 - k_adjacent
    idx = [n for n in range(lo, hi + 1) if n != band]
    return cube.data[idx].copy()


def patch_grid_count(width: int, height: int, patch: int, stride: int, bands: int) -> int:
    """Closed-form number of samples extract_patches yields (no exclusions)."""
    if patch > width or patch > height:
        return 0
    return bands * ((width - patch) // stride + 1) * ((height - patch) // stride + 1)


def iter_patches(
    noisy: HsiCube,
    clean: HsiCube,
    patch: int = 20,
    stride: int = 20,
    k_adjacent: int = 24,
    exclude: Optional[Rect] = None,
) -> Iterator[PatchSample]:
    """Yield training samples band by band over the aligned window grid.

    Windows overlapping ``exclude`` are skipped so training patches never
    touch a held-out test region. Output order is fixed: band-major, then
    row-major over windows.
    """
    if noisy.data.shape != clean.data.shape:
        raise ShapeMismatchError(
            f"noisy cube {noisy.data.shape} does not match clean cube {clean.data.shape}"
        )
    if patch > noisy.width or patch > noisy.height:
        warnings.warn(
            f"patch size {patch} exceeds cube extent "
            f"{noisy.width}x{noisy.height}; no samples extracted"
        )
        return
    for band in range(noisy.bands):
        spectral = adjacent_bands(noisy, band, k_adjacent)
        for y0 in range(0, noisy.height - patch + 1, stride):
            for x0 in range(0, noisy.width - patch + 1, stride):
                if exclude is not None and exclude.intersects(Rect(x0, y0, patch, patch)):
                    continue
                yield PatchSample(
                    y_spatial=noisy.data[band, y0 : y0 + patch, x0 : x0 + patch][None].copy(),
                    y_spectral=spectral[:, y0 : y0 + patch, x0 : x0 + patch].copy(),
                    label=clean.data[band, y0 : y0 + patch, x0 : x0 + patch][None].copy(),
                    band=band,
                    y0=y0,
                    x0=x0,
                )


def extract_patches(
    noisy: HsiCube,
    clean: HsiCube,
    patch: int = 20,
    stride: int = 20,
    k_adjacent: int = 24,
    exclude: Optional[Rect] = None,
) -> list[PatchSample]:
    return list(iter_patches(noisy, clean, patch, stride, k_adjacent, exclude))


def rotate_cube(cube: HsiCube, degrees: int) -> HsiCube:
    """Rotate every band by a multiple of 90 degrees (exact permutation)."""
    if degrees not in VALID_ROTATIONS:
        raise ValueError(f"rotation must be one of {VALID_ROTATIONS}, got {degrees}")
    turns = degrees // 90
    if turns == 0:
        return cube.copy()
    return HsiCube(np.ascontiguousarray(np.rot90(cube.data, k=turns, axes=(1, 2))))


def _resize_band(band: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = band.shape
    ys = np.zeros(out_h) if out_h == 1 else np.arange(out_h) * ((h - 1) / (out_h - 1))
    xs = np.zeros(out_w) if out_w == 1 else np.arange(out_w) * ((w - 1) / (out_w - 1))
    y0 = np.minimum(ys.astype(int), h - 1)
    x0 = np.minimum(xs.astype(int), w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = band[np.ix_(y0, x0)] * (1 - wx) + band[np.ix_(y0, x1)] * wx
    bottom = band[np.ix_(y1, x0)] * (1 - wx) + band[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bottom * wy


def rescale_cube(cube: HsiCube, scale: float) -> HsiCube:
    """Corner-aligned bilinear rescale of every band by the same factor."""
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    if scale == 1.0:
        return cube.copy()
    out_h = int(np.floor(cube.height * scale + 0.5))
    out_w = int(np.floor(cube.width * scale + 0.5))
    if out_h < 1 or out_w < 1:
        raise ValueError(f"scale {scale} collapses {cube.width}x{cube.height} to nothing")
    out = np.empty((cube.bands, out_h, out_w), dtype=np.float64)
    for n in range(cube.bands):
        out[n] = _resize_band(cube.data[n].astype(np.float64), out_h, out_w)
    return HsiCube(out)


def transform_rect(rect: Rect, cube: HsiCube, degrees: int, scale: float) -> Rect:
    """Track an excluded region through rescale_cube followed by rotate_cube.

    Scaled coordinates are rounded outward with a one-pixel margin, since
    bilinear resampling mixes each source pixel into its neighbors.
    """
    if scale != 1.0:
        out_h = int(np.floor(cube.height * scale + 0.5))
        out_w = int(np.floor(cube.width * scale + 0.5))
        sx = 1.0 if cube.width == 1 else (out_w - 1) / (cube.width - 1)
        sy = 1.0 if cube.height == 1 else (out_h - 1) / (cube.height - 1)
        x0 = max(0, int(np.floor(rect.x0 * sx)) - 1)
        y0 = max(0, int(np.floor(rect.y0 * sy)) - 1)
        x1 = min(out_w, int(np.ceil((rect.x1 - 1) * sx)) + 2)
        y1 = min(out_h, int(np.ceil((rect.y1 - 1) * sy)) + 2)
        rect = Rect(x0, y0, x1 - x0, y1 - y0)
        w, h = out_w, out_h
    else:
        w, h = cube.width, cube.height
    for _ in range((degrees // 90) % 4):
        # np.rot90 on (row, col): new_row = w-1-x span, new_col = y span
        rect = Rect(rect.y0, w - rect.x1, rect.height, rect.width)
        w, h = h, w
    return rect


def augment(
    cube: HsiCube, spec: AugmentSpec, exclude: Optional[Rect] = None
) -> list[tuple[HsiCube, Optional[Rect]]]:
    """Cross product of scales and rotations applied to the clean cube.

    Returns (cube, transformed exclude rect) pairs; the rect keeps held-out
    pixels out of training patches in every augmented copy.
    """
    out: list[tuple[HsiCube, Optional[Rect]]] = []
    for scale in spec.scales:
        scaled = rescale_cube(cube, scale)
        for degrees in spec.rotations:
            rect = None
            if exclude is not None:
                rect = transform_rect(exclude, cube, degrees, scale)
            out.append((rotate_cube(scaled, degrees), rect))
    return out


@dataclass
class MaskedCube:
    """A cube paired with an excluded rectangle (the held-out test region)."""

    cube: HsiCube
    excluded: Rect

    @property
    def train_area(self) -> int:
        return self.cube.width * self.cube.height - self.excluded.width * self.excluded.height

    def contains(self, x: int, y: int) -> bool:
        """True when the pixel belongs to the training region."""
        return not self.excluded.contains(x, y)


def split_spatial(cube: HsiCube, test_region: Rect) -> tuple[MaskedCube, HsiCube]:
    """Carve a test cube out of a larger one; the remainder trains.

    The train side is the full cube plus the exclusion record; patch
    extraction honors the record so training windows never overlap the test
    region.
    """
    if test_region.x0 < 0 or test_region.y0 < 0:
        raise ValueError(f"test region {test_region} has a negative origin")
    if test_region.x1 > cube.width or test_region.y1 > cube.height:
        raise ValueError(
            f"test region {test_region} exceeds cube extent {cube.width}x{cube.height}"
        )
    train = MaskedCube(cube, test_region)
    if train.train_area == 0:
        warnings.warn("test region covers the whole cube; no training pixels remain")
    test = HsiCube(
        cube.data[:, test_region.y0 : test_region.y1, test_region.x0 : test_region.x1].copy()
    )
    return train, test
