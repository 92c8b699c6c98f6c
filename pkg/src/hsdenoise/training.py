"""Residual MSE objective, Adam optimization, and the training loop.

The loss over a batch of T samples is

    loss = 1/(2T) * sum_i mean_pixels( (net(y_spatial_i, y_spectral_i) - phi_i)^2 )

with residual target phi_i = clean_i - y_spatial_i. Averaging over both the
batch and the pixels keeps the value independent of batch and patch size, so
duplicating every sample leaves the loss unchanged and the learning rate
stays meaningful across configurations.

Each epoch's sample order is a permutation drawn from a generator seeded by
(shuffle_seed, epoch), so a run is fully determined by its seeds and a run
resumed from a checkpoint continues exactly where an uninterrupted run would
be. Gradients accumulate in sample-index order, keeping results
bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DivergenceError, ShapeMismatchError
from .model import (
    ArchitectureSpec,
    ModelParams,
    backward,
    forward,
    map_params,
    zeros_like_params,
)
from .pipeline import PatchSample


@dataclass(frozen=True)
class OptimizerConfig:
    """Adam hyperparameters; the step-decay schedule is off by default."""

    alpha: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    decay_every: int = 0  # iterations between decays; 0 disables
    decay_factor: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.alpha <= 0 or self.epsilon <= 0:
            raise ValueError("alpha and epsilon must be positive")

    def alpha_at(self, t: int) -> float:
        """Learning rate for step t (1-based)."""
        if self.decay_every <= 0:
            return self.alpha
        return self.alpha * self.decay_factor ** ((t - 1) // self.decay_every)


@dataclass
class AdamState:
    """First/second-moment accumulators shaped like the parameters."""

    m: ModelParams
    v: ModelParams
    t: int = 0


def init_adam_state(params: ModelParams) -> AdamState:
    return AdamState(m=zeros_like_params(params), v=zeros_like_params(params), t=0)


def adam_step_bound(config: OptimizerConfig, t: int) -> float:
    """Provable per-component bound on |delta| / alpha at step t.

    At t = 1 the bias-corrected ratio m_hat / sqrt(v_hat) is exactly
    sign(g), so the bound is 1. For t > 1 Cauchy-Schwarz over the moment
    sums gives

        |m_t| <= (1-b1) * sqrt(S_t) * sqrt(v_t / (1-b2)),
        S_t = sum_{j<t} (b1^2/b2)^j

    hence |delta| <= alpha * (1-b1) sqrt(S_t (1-b2^t)) / ((1-b1^t) sqrt(1-b2)).
    The classic "effective step <= alpha" heuristic is the slowly-varying-
    gradient case; with b1=0.9, b2=0.999 bursty gradients can reach ~3x.
    """
    b1, b2 = config.beta1, config.beta2
    r = b1 * b1 / b2
    s_t = float(t) if r == 1.0 else (1.0 - r**t) / (1.0 - r)
    return (1.0 - b1) * math.sqrt(s_t * (1.0 - b2**t)) / ((1.0 - b1**t) * math.sqrt(1.0 - b2))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 128
    shuffle_seed: int = 0
    snapshot_every: int = 0  # iterations between snapshots; 0 disables
    max_iterations: int = 0  # hard cap across all epochs; 0 disables

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")


def residual_loss(
    batch: Sequence[PatchSample], params: ModelParams, spec: ArchitectureSpec
) -> tuple[float, ModelParams]:
    """Batch loss and its exact parameter gradients."""
    if len(batch) == 0:
        raise ValueError("residual_loss needs a nonempty batch")
    t = len(batch)
    grads = zeros_like_params(params)
    loss = 0.0
    for sample in batch:
        if sample.y_spatial.shape != sample.label.shape:
            raise ShapeMismatchError(
                f"label shape {sample.label.shape} does not match "
                f"y_spatial shape {sample.y_spatial.shape}"
            )
        phi_hat, cache = forward(sample.y_spatial, sample.y_spectral, params, spec)
        diff = phi_hat - (sample.label - sample.y_spatial)
        loss += float(np.mean(diff.astype(np.float64) ** 2))
        grad_phi = diff * (1.0 / (t * diff.size))
        sample_grads = backward(cache, params, grad_phi.astype(phi_hat.dtype))
        _accumulate(grads, sample_grads)
    return loss / (2.0 * t), grads


def _accumulate(into: ModelParams, from_: ModelParams) -> None:
    for dst, src in zip(into.layers(), from_.layers()):
        dst.weights += src.weights
        dst.bias += src.bias


def adam_step(
    params: ModelParams,
    grads: ModelParams,
    state: AdamState,
    config: OptimizerConfig,
) -> tuple[ModelParams, AdamState]:
    """One bias-corrected Adam update; pure function of its inputs."""
    t = state.t + 1
    alpha = config.alpha_at(t)
    b1, b2, eps = config.beta1, config.beta2, config.epsilon
    m = map_params(lambda m_, g: b1 * m_ + (1.0 - b1) * g, state.m, grads)
    v = map_params(lambda v_, g: b2 * v_ + (1.0 - b2) * g * g, state.v, grads)
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new_params = map_params(
        lambda p, m_, v_: p - alpha * (m_ / c1) / (np.sqrt(v_ / c2) + eps),
        params,
        m,
        v,
    )
    return new_params, AdamState(m=m, v=v, t=t)


@dataclass
class TrainResult:
    params: ModelParams
    state: AdamState
    trace: list[tuple[int, int, float]] = field(default_factory=list)  # (iter, epoch, loss)


SnapshotFn = Callable[[int, ModelParams, AdamState], None]


def train(
    dataset: Sequence[PatchSample],
    spec: ArchitectureSpec,
    params: ModelParams,
    train_config: TrainConfig,
    opt_config: OptimizerConfig,
    snapshot_fn: Optional[SnapshotFn] = None,
    state: Optional[AdamState] = None,
    start_iteration: int = 0,
) -> TrainResult:
    """Run the optimization loop; resumable via (state, start_iteration).

    The trace lists (iteration, epoch, loss), both 1-based, loss evaluated at
    the pre-update parameters. A non-finite loss aborts with the iteration
    number rather than silently propagating.
    """
    n = len(dataset)
    if n == 0:
        raise ValueError("train needs a nonempty dataset")
    state = state if state is not None else init_adam_state(params)
    if state.t != start_iteration:
        raise ValueError(
            f"optimizer state step {state.t} does not match start iteration {start_iteration}"
        )
    per_epoch = math.ceil(n / train_config.batch_size)
    total = train_config.epochs * per_epoch
    if train_config.max_iterations > 0:
        total = min(total, train_config.max_iterations)

    trace: list[tuple[int, int, float]] = []
    perm = None
    current_epoch = -1
    for it in range(start_iteration, total):
        epoch = it // per_epoch
        if epoch != current_epoch:
            perm = np.random.default_rng([train_config.shuffle_seed, epoch]).permutation(n)
            current_epoch = epoch
        at = (it % per_epoch) * train_config.batch_size
        batch = [dataset[j] for j in perm[at : at + train_config.batch_size]]
        loss, grads = residual_loss(batch, params, spec)
        if not math.isfinite(loss):
            raise DivergenceError(
                iteration=it + 1,
                message=f"non-finite loss {loss} at iteration {it + 1}; "
                f"training aborted (try a smaller learning rate)",
            )
        params, state = adam_step(params, grads, state, opt_config)
        trace.append((it + 1, epoch + 1, loss))
        if (
            snapshot_fn is not None
            and train_config.snapshot_every > 0
            and (it + 1) % train_config.snapshot_every == 0
        ):
            snapshot_fn(it + 1, params, state)
    return TrainResult(params=params, state=state, trace=trace)


def write_trace_csv(trace: Sequence[tuple[int, int, float]], path) -> None:
    with open(path, "w") as fh:
        fh.write("iteration,epoch,loss\n")
        for iteration, epoch, loss in trace:
            fh.write(f"{iteration},{epoch},{loss!r}\n")
