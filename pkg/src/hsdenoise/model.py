"""The spatial-spectral residual denoising network.

Architecture: a single noisy band and its K adjacent bands each pass through
a bank of parallel convolutions at kernel sizes 3/5/7 (20 channels per
scale); the six ReLU-activated feature maps concatenate into a 120-channel
map; a trunk of nine 3x3 conv+ReLU layers at 60 channels follows; the
post-activation outputs of trunk layers 3, 5, 7, and 9 concatenate into a
240-channel map; a final 3x3 convolution with no activation maps that to the
single-channel residual. Adding the residual to the noisy band reconstructs
the estimate, so a zero-weight network is exactly the identity.

The spectral branch realizes its band-stack convolution as a 2D convolution
whose input-channel axis is the K adjacent bands, i.e. a kernel spanning the
full spectral extent; each branch then emits plain 2D feature maps and the
two branches concatenate cleanly. The head has no activation because the
residual must take negative values.

Toggles: ``multi_scale=False`` collapses each branch to a single 3x3 conv
(widened so the fused map keeps its channel count) and ``multi_level=False``
feeds the head from the last trunk layer alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from . import rng
from .errors import ShapeMismatchError
from .ops import (
    ConvLayerParams,
    concat_channels,
    conv2d_backward,
    conv2d_forward,
    relu_backward,
    relu_forward,
    residual_add,
    split_channels,
)


@dataclass(frozen=True)
class ArchitectureSpec:
    """Structural knobs of the network; defaults give the full architecture."""

    k_adjacent: int = 24
    branch_channels: int = 20
    scales: tuple[int, ...] = (3, 5, 7)
    trunk_depth: int = 9
    trunk_channels: int = 60
    tap_layers: tuple[int, ...] = (3, 5, 7, 9)
    head_kernel: int = 3
    branch_relu: bool = True
    multi_scale: bool = True
    multi_level: bool = True

    def __post_init__(self):
        if self.k_adjacent < 2 or self.k_adjacent % 2 != 0:
            raise ValueError(f"adjacent band count must be even and >= 2, got {self.k_adjacent}")
        if self.branch_channels < 1 or self.trunk_channels < 1 or self.trunk_depth < 1:
            raise ValueError("channel counts and trunk depth must be positive")
        for k in (*self.scales, self.head_kernel):
            if k < 1 or k % 2 == 0:
                raise ValueError(f"kernel sizes must be odd and positive, got {k}")
        if not self.tap_layers:
            raise ValueError("at least one tap layer is required")
        for t in self.tap_layers:
            if not 1 <= t <= self.trunk_depth:
                raise ValueError(f"tap layer {t} outside trunk depth {self.trunk_depth}")

    @property
    def effective_scales(self) -> tuple[int, ...]:
        return self.scales if self.multi_scale else (3,)

    @property
    def effective_branch_channels(self) -> int:
        # With the multi-scale unit off, one conv per branch is widened so the
        # fused map keeps its channel count and the trunk is unchanged.
        if self.multi_scale:
            return self.branch_channels
        return self.branch_channels * len(self.scales)

    @property
    def effective_taps(self) -> tuple[int, ...]:
        return self.tap_layers if self.multi_level else (self.trunk_depth,)

    @property
    def fused_channels(self) -> int:
        return 2 * len(self.effective_scales) * self.effective_branch_channels

    @property
    def tap_channels(self) -> int:
        return len(self.effective_taps) * self.trunk_channels

    @property
    def min_extent(self) -> int:
        """Smallest H and W forward accepts (the largest kernel in play)."""
        return max(*self.effective_scales, self.head_kernel, 3)

    @property
    def receptive_radius(self) -> int:
        """Pixels of y_spatial that can influence one output pixel, per side."""
        branch = (max(self.effective_scales) - 1) // 2
        trunk = self.trunk_depth  # nine 3x3 layers add 1 pixel each
        head = (self.head_kernel - 1) // 2
        return branch + trunk + head

    def layer_defs(self) -> list[tuple[str, int, int, int]]:
        """(name, in_channels, out_channels, kernel) for every layer, in order."""
        defs = []
        for k in self.effective_scales:
            defs.append((f"spatial_k{k}", 1, self.effective_branch_channels, k))
        for k in self.effective_scales:
            defs.append((f"spectral_k{k}", self.k_adjacent, self.effective_branch_channels, k))
        c_in = self.fused_channels
        for i in range(1, self.trunk_depth + 1):
            defs.append((f"trunk_{i}", c_in, self.trunk_channels, 3))
            c_in = self.trunk_channels
        defs.append(("head", self.tap_channels, 1, self.head_kernel))
        return defs

    def parameter_count(self) -> int:
        return sum(c_out * c_in * k * k + c_out for _, c_in, c_out, k in self.layer_defs())


@dataclass
class ModelParams:
    """All layer parameters. The same structure carries gradients and moments."""

    spatial: list[ConvLayerParams]
    spectral: list[ConvLayerParams]
    trunk: list[ConvLayerParams]
    head: ConvLayerParams

    def layers(self) -> list[ConvLayerParams]:
        return [*self.spatial, *self.spectral, *self.trunk, self.head]

    def named_tensors(self, spec: ArchitectureSpec) -> Iterator[tuple[str, np.ndarray]]:
        for (name, *_), layer in zip(spec.layer_defs(), self.layers()):
            yield f"{name}.weights", layer.weights
            yield f"{name}.bias", layer.bias

    def count(self) -> int:
        return sum(l.weights.size + l.bias.size for l in self.layers())

    def astype(self, dtype) -> "ModelParams":
        return map_params(lambda a: a.astype(dtype), self)


def map_params(fn, *param_sets: ModelParams) -> ModelParams:
    """Apply fn elementwise across aligned tensors of one or more ModelParams."""

    def conv(layers: tuple[ConvLayerParams, ...]) -> ConvLayerParams:
        return ConvLayerParams(
            weights=fn(*[l.weights for l in layers]),
            bias=fn(*[l.bias for l in layers]),
        )

    return ModelParams(
        spatial=[conv(ls) for ls in zip(*[p.spatial for p in param_sets])],
        spectral=[conv(ls) for ls in zip(*[p.spectral for p in param_sets])],
        trunk=[conv(ls) for ls in zip(*[p.trunk for p in param_sets])],
        head=conv(tuple(p.head for p in param_sets)),
    )


def zeros_like_params(params: ModelParams) -> ModelParams:
    return map_params(np.zeros_like, params)


def _build(spec: ArchitectureSpec, make_weights, dtype) -> ModelParams:
    spatial, spectral, trunk = [], [], []
    head = None
    for li, (name, c_in, c_out, k) in enumerate(spec.layer_defs()):
        w = make_weights(li, c_in, c_out, k).astype(dtype)
        layer = ConvLayerParams(weights=w, bias=np.zeros(c_out, dtype=dtype))
        if name.startswith("spatial"):
            spatial.append(layer)
        elif name.startswith("spectral"):
            spectral.append(layer)
        elif name.startswith("trunk"):
            trunk.append(layer)
        else:
            head = layer
    return ModelParams(spatial=spatial, spectral=spectral, trunk=trunk, head=head)


def init_params(spec: ArchitectureSpec, seed: int, dtype=np.float64) -> ModelParams:
    """He-style initialization: N(0, sqrt(2 / (in_channels * k^2))), zero biases.

    Weights for layer i come from the Philox substream (seed, 2**62 + i), so
    the draw is fully determined by the seed.
    """

    def make(li, c_in, c_out, k):
        std = np.sqrt(2.0 / (c_in * k * k))
        z = rng.normals(seed, rng.INIT_STREAM_BASE + li, c_out * c_in * k * k)
        return (std * z).reshape(c_out, c_in, k, k)

    return _build(spec, make, dtype)


def zero_params(spec: ArchitectureSpec, dtype=np.float64) -> ModelParams:
    return _build(spec, lambda li, ci, co, k: np.zeros((co, ci, k, k)), dtype)


def validate_params(params: ModelParams, spec: ArchitectureSpec) -> None:
    """Raise ShapeMismatchError naming the first layer whose shape is wrong."""
    defs = spec.layer_defs()
    layers = params.layers()
    if len(defs) != len(layers):
        raise ShapeMismatchError(
            f"parameter set has {len(layers)} layers, architecture defines {len(defs)}"
        )
    for (name, c_in, c_out, k), layer in zip(defs, layers):
        expected = (c_out, c_in, k, k)
        if layer.weights.shape != expected:
            raise ShapeMismatchError(
                f"layer {name}: expected weights {expected}, got {layer.weights.shape}"
            )


@dataclass
class ForwardCache:
    """Intermediate activations retained for the backward pass."""

    spec: ArchitectureSpec
    y_spatial: np.ndarray
    y_spectral: np.ndarray
    branch_pre: list[np.ndarray]  # pre-activation per branch conv, spatial first
    fused: np.ndarray
    trunk_pre: list[np.ndarray]
    trunk_post: list[np.ndarray]
    tap_concat: np.ndarray
    phi_shape: tuple[int, ...] = field(default=())


def forward(
    y_spatial: np.ndarray,
    y_spectral: np.ndarray,
    params: ModelParams,
    spec: ArchitectureSpec,
    want_cache: bool = True,
) -> tuple[np.ndarray, Optional[ForwardCache]]:
    """Predicted residual for one band, plus the cache backward needs.

    With want_cache=False (inference) intermediate activations are dropped
    as soon as the next layer has consumed them.
    """
    validate_params(params, spec)
    if y_spatial.ndim != 3 or y_spatial.shape[0] != 1:
        raise ShapeMismatchError(f"y_spatial must be (1, H, W), got {y_spatial.shape}")
    if y_spectral.shape != (spec.k_adjacent, *y_spatial.shape[1:]):
        raise ShapeMismatchError(
            f"y_spectral must be ({spec.k_adjacent}, {y_spatial.shape[1]}, "
            f"{y_spatial.shape[2]}), got {y_spectral.shape}"
        )
    h, w = y_spatial.shape[1:]
    if min(h, w) < spec.min_extent:
        raise ShapeMismatchError(
            f"spatial extent {h}x{w} below the largest kernel {spec.min_extent}"
        )

    branch_pre: list[np.ndarray] = []
    branch_out: list[np.ndarray] = []
    for layer, src in zip(
        [*params.spatial, *params.spectral],
        [y_spatial] * len(params.spatial) + [y_spectral] * len(params.spectral),
    ):
        pre = conv2d_forward(src, layer)
        branch_pre.append(pre if want_cache else None)
        branch_out.append(relu_forward(pre) if spec.branch_relu else pre)
    fused = concat_channels(branch_out)
    del branch_out

    trunk_pre: list[np.ndarray] = []
    trunk_post: list[np.ndarray] = []
    taps: dict[int, np.ndarray] = {}
    x = fused
    for i, layer in enumerate(params.trunk, start=1):
        pre = conv2d_forward(x, layer)
        post = relu_forward(pre)
        if want_cache:
            trunk_pre.append(pre)
            trunk_post.append(post)
        elif i in spec.effective_taps:
            taps[i] = post
        x = post
    if want_cache:
        tap_concat = concat_channels([trunk_post[t - 1] for t in spec.effective_taps])
    else:
        tap_concat = concat_channels([taps[t] for t in spec.effective_taps])
    phi = conv2d_forward(tap_concat, params.head)

    if not want_cache:
        return phi, None
    cache = ForwardCache(
        spec=spec,
        y_spatial=y_spatial,
        y_spectral=y_spectral,
        branch_pre=branch_pre,
        fused=fused,
        trunk_pre=trunk_pre,
        trunk_post=trunk_post,
        tap_concat=tap_concat,
        phi_shape=phi.shape,
    )
    return phi, cache


def backward(
    cache: ForwardCache, params: ModelParams, grad_phi: np.ndarray
) -> ModelParams:
    """Exact parameter gradients of sum(grad_phi * phi) through the whole net.

    Tap layers feed both the next trunk layer and the head concat; their
    gradients are the fan-in sum of both paths.
    """
    spec = cache.spec
    validate_params(params, spec)
    if grad_phi.shape != cache.phi_shape:
        raise ShapeMismatchError(
            f"grad_phi shape {grad_phi.shape} does not match cached output "
            f"{cache.phi_shape}; stale cache?"
        )

    grads = zeros_like_params(params)

    g_taps, g_head_w, g_head_b = conv2d_backward(cache.tap_concat, params.head, grad_phi)
    grads.head.weights += g_head_w
    grads.head.bias += g_head_b

    taps = spec.effective_taps
    tap_grads = dict(zip(taps, split_channels(g_taps, [spec.trunk_channels] * len(taps))))

    g_post = np.zeros_like(cache.trunk_post[-1])
    for i in range(spec.trunk_depth, 0, -1):
        if i in tap_grads:
            g_post = g_post + tap_grads[i]
        g_pre = relu_backward(cache.trunk_pre[i - 1], g_post)
        src = cache.fused if i == 1 else cache.trunk_post[i - 2]
        g_src, g_w, g_b = conv2d_backward(src, params.trunk[i - 1], g_pre)
        grads.trunk[i - 1].weights += g_w
        grads.trunk[i - 1].bias += g_b
        g_post = g_src

    g_fused = g_post
    n_branches = len(params.spatial) + len(params.spectral)
    branch_grads = split_channels(g_fused, [spec.effective_branch_channels] * n_branches)
    branch_layers = [*params.spatial, *params.spectral]
    branch_grad_slots = [*grads.spatial, *grads.spectral]
    branch_srcs = [cache.y_spatial] * len(params.spatial) + [cache.y_spectral] * len(
        params.spectral
    )
    for bi in range(n_branches):
        g = branch_grads[bi]
        if spec.branch_relu:
            g = relu_backward(cache.branch_pre[bi], g)
        _, g_w, g_b = conv2d_backward(branch_srcs[bi], branch_layers[bi], g)
        branch_grad_slots[bi].weights += g_w
        branch_grad_slots[bi].bias += g_b
    return grads


def denoise_patch(
    y_spatial: np.ndarray,
    y_spectral: np.ndarray,
    params: ModelParams,
    spec: ArchitectureSpec,
) -> np.ndarray:
    """Reconstructed band estimate: noisy input plus predicted residual."""
    phi, _ = forward(y_spatial, y_spectral, params, spec, want_cache=False)
    return residual_add(y_spatial, phi)
