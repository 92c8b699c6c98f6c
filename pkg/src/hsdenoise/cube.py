"""Hyperspectral cube container and the HSIC v1 on-disk format.

A cube is stored band-sequentially: data[band, row, col], C-contiguous, so
each band's full spatial plane is one contiguous block. The HSIC v1 file
layout is:

    bytes 0-3   magic "HSIC"
    u32 LE      version (1)
    u32 LE      width, height, bands
    payload     width*height*bands little-endian 32-bit floats,
                band-sequential (band-major, row-major within a band)

save/load roundtrips are bit-exact for 32-bit payloads.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadDimensionsError,
    BadMagicError,
    FormatVersionError,
    ShapeMismatchError,
    TruncatedFileError,
)

MAGIC = b"HSIC"
VERSION = 1

# Refuse headers whose payload would exceed 32 GiB; catches corrupt dims early.
_MAX_ELEMENTS = 1 << 33


@dataclass
class HsiCube:
    """A width x height x bands cube, held as a (bands, height, width) array."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ShapeMismatchError(
                f"cube data must be (bands, height, width), got rank {self.data.ndim}"
            )

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def band(self, n: int) -> np.ndarray:
        return self.data[n]

    def copy(self) -> "HsiCube":
        return HsiCube(self.data.copy())


def save_cube(cube: HsiCube, path: str | Path) -> None:
    """Write a cube in HSIC v1 format (payload cast to float32)."""
    payload = np.ascontiguousarray(cube.data, dtype="<f4")
    header = MAGIC + struct.pack("<IIII", VERSION, cube.width, cube.height, cube.bands)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes())


def load_cube(path: str | Path) -> HsiCube:
    """Read an HSIC v1 cube; raises distinct errors for each way a file can be bad."""
    blob = Path(path).read_bytes()
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise BadMagicError(f"{path}: expected magic {MAGIC!r}, got {blob[:4]!r}")
    if len(blob) < 20:
        raise TruncatedFileError(f"{path}: header truncated at {len(blob)} bytes")
    version, width, height, bands = struct.unpack("<IIII", blob[4:20])
    if version != VERSION:
        raise FormatVersionError(f"{path}: unsupported HSIC version {version}")
    if min(width, height, bands) < 1 or width * height * bands > _MAX_ELEMENTS:
        raise BadDimensionsError(f"{path}: bad dimensions {width}x{height}x{bands}")
    expected = 20 + 4 * width * height * bands
    if len(blob) != expected:
        raise TruncatedFileError(
            f"{path}: payload is {len(blob) - 20} bytes, header implies {expected - 20}"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=20).reshape(bands, height, width)
    return HsiCube(data.copy())


def load_raw_bsq(path: str | Path, width: int, height: int, bands: int) -> HsiCube:
    """Import a headerless band-sequential raw file of little-endian float32."""
    if min(width, height, bands) < 1:
        raise BadDimensionsError(f"bad dimensions {width}x{height}x{bands}")
    blob = Path(path).read_bytes()
    expected = 4 * width * height * bands
    if len(blob) != expected:
        raise TruncatedFileError(f"{path}: {len(blob)} bytes, dimensions imply {expected}")
    data = np.frombuffer(blob, dtype="<f4").reshape(bands, height, width)
    return HsiCube(data.copy())


def normalize_bands(cube: HsiCube) -> tuple[HsiCube, list[tuple[float, float]]]:
    """Map each band affinely onto [0, 1]; returns the (min, max) records.

    A constant band cannot be scaled and is mapped to all zeros with a
    warning instead of aborting ingestion.
    """
    out = np.empty(cube.data.shape, dtype=np.float64)
    records: list[tuple[float, float]] = []
    for n in range(cube.bands):
        band = cube.data[n].astype(np.float64)
        lo, hi = float(band.min()), float(band.max())
        records.append((lo, hi))
        if hi > lo:
            out[n] = (band - lo) / (hi - lo)
        else:
            warnings.warn(f"band {n} is constant ({lo}); normalized to zero")
            out[n] = 0.0
    return HsiCube(out), records


def denormalize_bands(cube: HsiCube, records: list[tuple[float, float]]) -> HsiCube:
    """Invert normalize_bands using its (min, max) records."""
    if len(records) != cube.bands:
        raise ShapeMismatchError(
            f"{len(records)} normalization records for {cube.bands} bands"
        )
    out = np.empty(cube.data.shape, dtype=np.float64)
    for n, (lo, hi) in enumerate(records):
        out[n] = cube.data[n] * (hi - lo) + lo if hi > lo else lo
    return HsiCube(out)
