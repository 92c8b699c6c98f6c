"""Harness config files: UTF-8 ``key = value`` lines with ``#`` comments.

Unknown keys are rejected, so typos fail loudly. Every seed is explicit or
defaults to a documented constant: init 101, shuffle 202, noise 303. The only
environment override is HSDENOISE_OUT_ROOT, under which a relative
paths.output_dir is resolved.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

from .errors import ConfigError
from .model import ArchitectureSpec
from .noise import NoiseSpec
from .pipeline import AugmentSpec, Rect
from .training import OptimizerConfig, TrainConfig

OUT_ROOT_ENV = "HSDENOISE_OUT_ROOT"

_TRUE = {"on", "true", "yes", "1"}
_FALSE = {"off", "false", "no", "0"}


def _to_bool(raw: str) -> bool:
    low = raw.lower()
    if low in _TRUE:
        return True
    if low in _FALSE:
        return False
    raise ValueError(f"expected on/off, got {raw!r}")


def _to_int_list(raw: str) -> tuple[int, ...]:
    return tuple(int(part.strip()) for part in raw.split(",") if part.strip())


def _to_float_list(raw: str) -> tuple[float, ...]:
    return tuple(float(part.strip()) for part in raw.split(",") if part.strip())


# key -> (converter, default)
SCHEMA: dict[str, tuple[Any, Any]] = {
    "noise.case": (str, "fixed"),
    "noise.sigma": (float, 25.0),
    "noise.sigma_max": (float, 25.0),
    "noise.beta": (float, 200.0),
    "noise.eta": (float, 30.0),
    "arch.k": (int, 24),
    "arch.branch_channels": (int, 20),
    "arch.trunk_channels": (int, 60),
    "arch.trunk_depth": (int, 9),
    "arch.multi_scale": (_to_bool, True),
    "arch.multi_level": (_to_bool, True),
    "arch.branch_relu": (_to_bool, True),
    "train.epochs": (int, 100),
    "train.batch_size": (int, 128),
    "train.patch_size": (int, 20),
    "train.stride": (int, 20),
    "train.max_iterations": (int, 0),
    "train.snapshot_every": (int, 0),
    "train.rotations": (_to_int_list, (0,)),
    "train.scales": (_to_float_list, (1.0,)),
    "opt.alpha": (float, 0.01),
    "opt.beta1": (float, 0.9),
    "opt.beta2": (float, 0.999),
    "opt.epsilon": (float, 1e-8),
    "opt.decay_every": (int, 0),
    "opt.decay_factor": (float, 1.0),
    "seed.init": (int, 101),
    "seed.shuffle": (int, 202),
    "seed.noise": (int, 303),
    "paths.clean_cube": (str, ""),
    "paths.noisy_cube": (str, ""),
    "paths.output_dir": (str, "."),
    "paths.checkpoint": (str, ""),
    "pipeline.normalize": (_to_bool, True),
    "test_region": (_to_int_list, ()),
}


@dataclass
class HarnessConfig:
    values: dict[str, Any]

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def noise_spec(self) -> NoiseSpec:
        case = self.values["noise.case"]
        seed = self.values["seed.noise"]
        try:
            if case == "fixed":
                return NoiseSpec.fixed(self.values["noise.sigma"], seed)
            if case == "uniform":
                return NoiseSpec.uniform(self.values["noise.sigma_max"], seed)
            if case == "gaussian_curve":
                return NoiseSpec.gaussian_curve(
                    self.values["noise.beta"], self.values["noise.eta"], seed
                )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        raise ConfigError(f"noise.case must be fixed, uniform, or gaussian_curve, got {case!r}")

    def arch_spec(self) -> ArchitectureSpec:
        depth = self.values["arch.trunk_depth"]
        # Tap odd depths 3/5/7/9 where they exist; always tap the last layer.
        taps = tuple(sorted({t for t in (3, 5, 7, 9) if t <= depth} | {depth}))
        try:
            return ArchitectureSpec(
                k_adjacent=self.values["arch.k"],
                branch_channels=self.values["arch.branch_channels"],
                trunk_channels=self.values["arch.trunk_channels"],
                trunk_depth=depth,
                tap_layers=taps,
                multi_scale=self.values["arch.multi_scale"],
                multi_level=self.values["arch.multi_level"],
                branch_relu=self.values["arch.branch_relu"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def train_config(self) -> TrainConfig:
        try:
            return TrainConfig(
                epochs=self.values["train.epochs"],
                batch_size=self.values["train.batch_size"],
                shuffle_seed=self.values["seed.shuffle"],
                snapshot_every=self.values["train.snapshot_every"],
                max_iterations=self.values["train.max_iterations"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def opt_config(self) -> OptimizerConfig:
        try:
            return OptimizerConfig(
                alpha=self.values["opt.alpha"],
                beta1=self.values["opt.beta1"],
                beta2=self.values["opt.beta2"],
                epsilon=self.values["opt.epsilon"],
                decay_every=self.values["opt.decay_every"],
                decay_factor=self.values["opt.decay_factor"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def augment_spec(self) -> AugmentSpec:
        try:
            return AugmentSpec(
                rotations=self.values["train.rotations"],
                scales=self.values["train.scales"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def test_region(self) -> Optional[Rect]:
        region = self.values["test_region"]
        if not region:
            return None
        if len(region) != 4:
            raise ConfigError(f"test_region needs x0,y0,width,height; got {region}")
        try:
            return Rect(*region)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def output_dir(self) -> Path:
        out = Path(self.values["paths.output_dir"])
        root = os.environ.get(OUT_ROOT_ENV)
        if root and not out.is_absolute():
            out = Path(root) / out
        return out

    def resolve_output(self, key: str, default_name: str) -> Path:
        configured = self.values[key]
        if configured:
            path = Path(configured)
            root = os.environ.get(OUT_ROOT_ENV)
            if root and not path.is_absolute():
                path = Path(root) / path
            return path
        return self.output_dir() / default_name


def parse_config_text(text: str) -> HarnessConfig:
    values = {key: default for key, (_, default) in SCHEMA.items()}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw_line!r}")
        key, raw_value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown config key: {key}")
        converter, _ = SCHEMA[key]
        try:
            values[key] = converter(raw_value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
    return HarnessConfig(values)


def load_config(path: str | Path) -> HarnessConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(encoding="utf-8"))
