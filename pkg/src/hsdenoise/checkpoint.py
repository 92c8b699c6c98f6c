"""Versioned binary checkpoint format (HSCK v1).

Layout, all integers little-endian:

    bytes 0-3   magic "HSCK"
    u32         format version (1)
    arch block  u32 k_adjacent, u32 branch_channels,
                u32 n_scales then u32 per scale,
                u32 trunk_depth, u32 trunk_channels,
                u32 n_taps then u32 per tap layer,
                u32 head_kernel,
                u32 flags (bit0 branch_relu, bit1 multi_scale, bit2 multi_level)
    u32         tensor count
    per tensor  u32 name length, name bytes (utf-8),
                u32 rank, u32 per dimension,
                raw little-endian float32 values, row-major
    u32         has optimizer state (0 or 1)
    if 1        u64 step counter t, then u32 tensor count and the same
                tensor record format for the first-moment tensors
                ("m." + name) followed by the second-moment tensors ("v." + name)

Parameter tensors appear in the fixed architecture order, so
save -> load -> save is byte-identical.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import BinaryIO, Optional

import numpy as np

from .errors import (
    BadMagicError,
    FormatVersionError,
    ShapeMismatchError,
    TruncatedFileError,
)
from .model import ArchitectureSpec, ModelParams, validate_params
from .ops import ConvLayerParams

MAGIC = b"HSCK"
VERSION = 1


def _write_u32(fh: BinaryIO, *values: int) -> None:
    fh.write(struct.pack(f"<{len(values)}I", *values))


def _write_tensor(fh: BinaryIO, name: str, array: np.ndarray) -> None:
    raw = name.encode("utf-8")
    _write_u32(fh, len(raw))
    fh.write(raw)
    _write_u32(fh, array.ndim, *array.shape)
    fh.write(np.ascontiguousarray(array, dtype="<f4").tobytes())


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.at = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.at + n > len(self.blob):
            raise TruncatedFileError(f"{self.path}: truncated at byte {self.at}")
        out = self.blob[self.at : self.at + n]
        self.at += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def tensor(self) -> tuple[str, np.ndarray]:
        name = self.take(self.u32()).decode("utf-8")
        rank = self.u32()
        dims = [self.u32() for _ in range(rank)]
        count = int(np.prod(dims)) if dims else 1
        data = np.frombuffer(self.take(4 * count), dtype="<f4").reshape(dims)
        return name, data.copy()


def _pack_spec(fh: BinaryIO, spec: ArchitectureSpec) -> None:
    _write_u32(fh, spec.k_adjacent, spec.branch_channels)
    _write_u32(fh, len(spec.scales), *spec.scales)
    _write_u32(fh, spec.trunk_depth, spec.trunk_channels)
    _write_u32(fh, len(spec.tap_layers), *spec.tap_layers)
    flags = spec.branch_relu | (spec.multi_scale << 1) | (spec.multi_level << 2)
    _write_u32(fh, spec.head_kernel, flags)


def _unpack_spec(rd: _Reader) -> ArchitectureSpec:
    k_adjacent = rd.u32()
    branch_channels = rd.u32()
    scales = tuple(rd.u32() for _ in range(rd.u32()))
    trunk_depth = rd.u32()
    trunk_channels = rd.u32()
    taps = tuple(rd.u32() for _ in range(rd.u32()))
    head_kernel = rd.u32()
    flags = rd.u32()
    return ArchitectureSpec(
        k_adjacent=k_adjacent,
        branch_channels=branch_channels,
        scales=scales,
        trunk_depth=trunk_depth,
        trunk_channels=trunk_channels,
        tap_layers=taps,
        head_kernel=head_kernel,
        branch_relu=bool(flags & 1),
        multi_scale=bool(flags & 2),
        multi_level=bool(flags & 4),
    )


def save_checkpoint(
    path: str | Path,
    spec: ArchitectureSpec,
    params: ModelParams,
    adam_moments: Optional[tuple[ModelParams, ModelParams, int]] = None,
) -> None:
    """Write params (and optionally Adam (m, v, t) state) as HSCK v1."""
    validate_params(params, spec)
    named = list(params.named_tensors(spec))
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        _write_u32(fh, VERSION)
        _pack_spec(fh, spec)
        _write_u32(fh, len(named))
        for name, array in named:
            _write_tensor(fh, name, array)
        if adam_moments is None:
            _write_u32(fh, 0)
        else:
            m, v, t = adam_moments
            _write_u32(fh, 1)
            fh.write(struct.pack("<Q", t))
            _write_u32(fh, 2 * len(named))
            for prefix, moment in (("m", m), ("v", v)):
                for name, array in moment.named_tensors(spec):
                    _write_tensor(fh, f"{prefix}.{name}", array)


def _params_from_tensors(
    spec: ArchitectureSpec, tensors: list[tuple[str, np.ndarray]], path, prefix: str = ""
) -> ModelParams:
    defs = spec.layer_defs()
    if len(tensors) != 2 * len(defs):
        raise ShapeMismatchError(
            f"{path}: {len(tensors)} tensors for {len(defs)} layers"
        )
    groups: dict[str, list[ConvLayerParams]] = {"spatial": [], "spectral": [], "trunk": []}
    head = None
    for i, (name, c_in, c_out, k) in enumerate(defs):
        w_name, w = tensors[2 * i]
        b_name, b = tensors[2 * i + 1]
        if w_name != f"{prefix}{name}.weights" or b_name != f"{prefix}{name}.bias":
            raise ShapeMismatchError(
                f"{path}: tensor {w_name!r}/{b_name!r} where layer {name!r} expected"
            )
        if w.shape != (c_out, c_in, k, k) or b.shape != (c_out,):
            raise ShapeMismatchError(
                f"{path}: layer {name}: stored weights {w.shape}, "
                f"architecture implies {(c_out, c_in, k, k)}"
            )
        layer = ConvLayerParams(weights=w, bias=b)
        if name == "head":
            head = layer
        else:
            groups[name.split("_")[0]].append(layer)
    return ModelParams(
        spatial=groups["spatial"], spectral=groups["spectral"], trunk=groups["trunk"], head=head
    )


def load_checkpoint(
    path: str | Path, expected_spec: Optional[ArchitectureSpec] = None
) -> tuple[ArchitectureSpec, ModelParams, Optional[tuple[ModelParams, ModelParams, int]]]:
    """Read an HSCK v1 file; optionally insist it matches a given architecture."""
    blob = Path(path).read_bytes()
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise BadMagicError(f"{path}: expected magic {MAGIC!r}, got {blob[:4]!r}")
    rd = _Reader(blob, path)
    rd.take(4)
    version = rd.u32()
    if version != VERSION:
        raise FormatVersionError(f"{path}: unsupported HSCK version {version}")
    spec = _unpack_spec(rd)
    if expected_spec is not None and spec != expected_spec:
        raise ShapeMismatchError(
            f"{path}: checkpoint architecture {spec} does not match expected {expected_spec}"
        )
    n = rd.u32()
    tensors = [rd.tensor() for _ in range(n)]
    params = _params_from_tensors(spec, tensors, path)
    moments = None
    if rd.u32():
        t = rd.u64()
        n_state = rd.u32()
        state_tensors = [rd.tensor() for _ in range(n_state)]
        half = n_state // 2
        m = _params_from_tensors(spec, state_tensors[:half], path, prefix="m.")
        v = _params_from_tensors(spec, state_tensors[half:], path, prefix="v.")
        moments = (m, v, t)
    if rd.at != len(blob):
        raise TruncatedFileError(f"{path}: {len(blob) - rd.at} trailing bytes")
    return spec, params, moments
