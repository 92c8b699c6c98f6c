"""Full-network gradient verification against central finite differences.

The check projects the network output onto a fixed random cotangent, giving
a scalar function of the parameters whose analytic gradient is one backward
pass. A seeded sample of components from every parameter tensor is then
probed with central differences and compared per tensor, relative to the
tensor's own scale.

ReLU makes the network non-differentiable where a pre-activation is exactly
zero, so candidate random cases are redrawn until every pre-activation sits
safely outside the finite-difference step; probes then never straddle a
kink.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .model import ArchitectureSpec, ModelParams, backward, forward, init_params

#: Pre-activations must clear the FD step by this factor before probing.
KINK_CLEARANCE = 3.0

DEFAULT_TOLERANCE = 1e-5


@dataclass
class TensorCheck:
    name: str
    rel_err: float


@dataclass
class GradCheckReport:
    checks: list[TensorCheck]
    max_rel_err: float
    attempts: int  # random cases drawn before one cleared the ReLU kinks


def _draw_case(
    spec: ArchitectureSpec, extent: int, seed: int, attempt: int
) -> tuple[np.ndarray, np.ndarray, ModelParams]:
    base = 1_000_000 * attempt
    n = extent * extent
    y_spatial = 0.5 * rng.normals(seed, base + 1, n).reshape(1, extent, extent)
    y_spectral = 0.5 * rng.normals(seed, base + 2, spec.k_adjacent * n).reshape(
        spec.k_adjacent, extent, extent
    )
    params = init_params(spec, seed + attempt, dtype=np.float64)
    # Jittered biases keep whole channels from sitting exactly at the ReLU kink.
    for li, layer in enumerate(params.layers()):
        layer.bias = layer.bias + 0.05 * rng.normals(seed, base + 100 + li, layer.bias.size)
    return y_spatial, y_spectral, params


def run_gradcheck(
    spec: ArchitectureSpec | None = None,
    extent: int = 8,
    seed: int = 7,
    samples_per_tensor: int = 16,
    step: float = 1e-5,
    corrupt_backward: bool = False,
    max_attempts: int = 500,
) -> GradCheckReport:
    """Compare analytic and numeric gradients for every parameter tensor.

    ``corrupt_backward`` deliberately scales one analytic gradient tensor as
    a negative control; the report must then fail any sane tolerance.
    """
    if spec is None:
        spec = ArchitectureSpec(k_adjacent=4)

    clearance = KINK_CLEARANCE * step
    attempt = 0
    while True:
        y_spatial, y_spectral, params = _draw_case(spec, extent, seed, attempt)
        phi, cache = forward(y_spatial, y_spectral, params, spec)
        min_pre = min(
            float(np.min(np.abs(p))) for p in [*cache.branch_pre, *cache.trunk_pre]
        )
        attempt += 1
        if min_pre > clearance:
            break
        if attempt >= max_attempts:
            raise RuntimeError(
                f"no kink-free random case found in {max_attempts} attempts"
            )

    cotangent = rng.normals(seed, 999_999_999, phi.size).reshape(phi.shape)
    analytic = backward(cache, params, cotangent)
    if corrupt_backward:
        analytic.trunk[0].weights = analytic.trunk[0].weights * 1.01

    def objective() -> float:
        out, _ = forward(y_spatial, y_spectral, params, spec, want_cache=False)
        return float(np.sum(out * cotangent))

    checks: list[TensorCheck] = []
    named_params = list(params.named_tensors(spec))
    named_grads = list(analytic.named_tensors(spec))
    for ti, ((name, tensor), (_, grad)) in enumerate(zip(named_params, named_grads)):
        count = min(tensor.size, samples_per_tensor)
        idx = np.random.default_rng([seed, ti]).choice(tensor.size, count, replace=False)
        worst = 0.0
        scale = max(float(np.max(np.abs(grad))), 1e-12)
        for flat in idx:
            original = tensor.flat[flat]
            tensor.flat[flat] = original + step
            f_plus = objective()
            tensor.flat[flat] = original - step
            f_minus = objective()
            tensor.flat[flat] = original
            numeric = (f_plus - f_minus) / (2.0 * step)
            scale = max(scale, abs(numeric))
            worst = max(worst, abs(float(grad.flat[flat]) - numeric))
        checks.append(TensorCheck(name=name, rel_err=worst / scale))
    return GradCheckReport(
        checks=checks,
        max_rel_err=max(c.rel_err for c in checks),
        attempts=attempt,
    )
