import numpy as np
import pytest

from hsdenoise import rng
from hsdenoise.errors import ShapeMismatchError
from hsdenoise.gradcheck import run_gradcheck
from hsdenoise.model import (
    ArchitectureSpec,
    backward,
    denoise_patch,
    forward,
    init_params,
    map_params,
    zero_params,
)
from hsdenoise.ops import max_rel_error

TINY = ArchitectureSpec(
    k_adjacent=4,
    branch_channels=4,
    trunk_channels=8,
    trunk_depth=4,
    tap_layers=(2, 3, 4),
)


def random_inputs(spec, h, w, seed=0, scale=0.5):
    gen = np.random.default_rng(seed)
    y_spatial = scale * gen.normal(size=(1, h, w))
    y_spectral = scale * gen.normal(size=(spec.k_adjacent, h, w))
    return y_spatial, y_spectral


class TestArchitectureSpec:
    def test_default_channel_arithmetic(self):
        spec = ArchitectureSpec()
        assert spec.fused_channels == 120
        assert spec.tap_channels == 240
        assert spec.receptive_radius == 13

    def test_parameter_census_against_independent_constant(self):
        # Sum over the configuration table's shapes, worked out by hand:
        # spatial 1720 + spectral(K=24) 39900 + trunk 64860 + 8*32460 + head 2161
        assert ArchitectureSpec().parameter_count() == 368321
        assert init_params(ArchitectureSpec(), seed=0).count() == 368321

    def test_multi_level_off_head_shape(self):
        spec = ArchitectureSpec(multi_level=False)
        assert spec.tap_channels == 60
        params = init_params(spec, seed=1)
        assert params.head.weights.shape == (1, 60, 3, 3)

    def test_multi_scale_off_keeps_fused_width(self):
        spec = ArchitectureSpec(multi_scale=False)
        assert spec.fused_channels == 120
        params = init_params(spec, seed=1)
        assert len(params.spatial) == 1
        assert params.spatial[0].weights.shape == (60, 1, 3, 3)

    def test_invalid_specs(self):
        with pytest.raises(ValueError):
            ArchitectureSpec(k_adjacent=3)  # odd
        with pytest.raises(ValueError):
            ArchitectureSpec(k_adjacent=0)
        with pytest.raises(ValueError):
            ArchitectureSpec(tap_layers=(10,))


class TestInitParams:
    def test_same_seed_bit_identical(self):
        a = init_params(TINY, seed=5)
        b = init_params(TINY, seed=5)
        for la, lb in zip(a.layers(), b.layers()):
            assert np.array_equal(la.weights, lb.weights)
            assert np.array_equal(la.bias, lb.bias)

    def test_different_seed_differs(self):
        a = init_params(TINY, seed=5)
        b = init_params(TINY, seed=6)
        assert not np.array_equal(a.trunk[0].weights, b.trunk[0].weights)

    def test_spectral_branch_shape_default(self):
        params = init_params(ArchitectureSpec(), seed=0)
        assert params.spectral[0].weights.shape == (20, 24, 3, 3)
        assert params.spectral[1].weights.shape == (20, 24, 5, 5)
        assert params.spectral[2].weights.shape == (20, 24, 7, 7)

    def test_he_scale_and_zero_bias(self):
        params = init_params(ArchitectureSpec(), seed=2)
        layer = params.trunk[3]
        expected_std = np.sqrt(2.0 / (60 * 9))
        assert abs(layer.weights.std() - expected_std) < 0.05 * expected_std
        assert not layer.bias.any()


class TestForward:
    def test_zero_params_zero_residual(self):
        y_spatial, y_spectral = random_inputs(TINY, 9, 9, seed=1)
        phi, _ = forward(y_spatial, y_spectral, zero_params(TINY), TINY)
        assert not phi.any()

    def test_shape_check_default_arch(self):
        spec = ArchitectureSpec()
        y_spatial, y_spectral = random_inputs(spec, 20, 20, seed=2)
        params = init_params(spec, seed=3)
        phi, cache = forward(y_spatial, y_spectral, params, spec)
        assert cache.fused.shape == (120, 20, 20)
        assert cache.tap_concat.shape == (240, 20, 20)
        assert phi.shape == (1, 20, 20)

    def test_deterministic(self):
        y_spatial, y_spectral = random_inputs(TINY, 8, 8, seed=3)
        params = init_params(TINY, seed=4)
        a, _ = forward(y_spatial, y_spectral, params, TINY)
        b, _ = forward(y_spatial, y_spectral, params, TINY)
        assert np.array_equal(a, b)

    def test_wrong_spectral_count_names_expectation(self):
        y_spatial, _ = random_inputs(TINY, 8, 8)
        bad_spectral = np.zeros((TINY.k_adjacent + 2, 8, 8))
        with pytest.raises(ShapeMismatchError, match="y_spectral"):
            forward(y_spatial, bad_spectral, init_params(TINY, 0), TINY)

    def test_too_small_extent(self):
        spec = ArchitectureSpec()
        y_spatial, y_spectral = random_inputs(spec, 6, 6)
        with pytest.raises(ShapeMismatchError, match="extent"):
            forward(y_spatial, y_spectral, init_params(spec, 0), spec)

    def test_params_not_matching_spec_names_layer(self):
        params = init_params(TINY, seed=0)
        other = ArchitectureSpec(k_adjacent=6, branch_channels=4, trunk_channels=8,
                                 trunk_depth=4, tap_layers=(2, 3, 4))
        y_spatial, y_spectral = random_inputs(other, 8, 8)
        with pytest.raises(ShapeMismatchError, match="spectral_k3"):
            forward(y_spatial, y_spectral, params, other)

    def test_want_cache_false_same_output(self):
        y_spatial, y_spectral = random_inputs(TINY, 10, 10, seed=9)
        params = init_params(TINY, seed=10)
        with_cache, _ = forward(y_spatial, y_spectral, params, TINY, want_cache=True)
        without, cache = forward(y_spatial, y_spectral, params, TINY, want_cache=False)
        assert cache is None
        assert np.array_equal(with_cache, without)


class TestBackward:
    def test_zero_grad_phi(self):
        y_spatial, y_spectral = random_inputs(TINY, 8, 8, seed=5)
        params = init_params(TINY, seed=6)
        _, cache = forward(y_spatial, y_spectral, params, TINY)
        grads = backward(cache, params, np.zeros(cache.phi_shape))
        for layer in grads.layers():
            assert not layer.weights.any() and not layer.bias.any()

    def test_head_bias_gradient_is_sum(self):
        y_spatial, y_spectral = random_inputs(TINY, 8, 8, seed=7)
        params = init_params(TINY, seed=8)
        _, cache = forward(y_spatial, y_spectral, params, TINY)
        grad_phi = np.random.default_rng(9).normal(size=cache.phi_shape)
        grads = backward(cache, params, grad_phi)
        assert np.allclose(grads.head.bias, grad_phi.sum(), atol=1e-12)

    def test_stale_cache_rejected(self):
        y_spatial, y_spectral = random_inputs(TINY, 8, 8, seed=10)
        params = init_params(TINY, seed=11)
        _, cache = forward(y_spatial, y_spectral, params, TINY)
        with pytest.raises(ShapeMismatchError, match="stale|match"):
            backward(cache, params, np.zeros((1, 9, 9)))

    def test_full_network_finite_differences_reduced_spec(self):
        # 8x8 patches, K=4, trunk width unchanged at 60, double precision.
        spec = ArchitectureSpec(k_adjacent=4)
        report = run_gradcheck(spec, extent=8, seed=7, samples_per_tensor=6)
        assert report.max_rel_err < 1e-5

    def test_gradient_fan_in_at_tap_layers(self):
        # A tap layer's gradient is the sum of its two downstream paths:
        # computed by zeroing the head weights vs zeroing the trunk continuation.
        spec = TINY
        y_spatial, y_spectral = random_inputs(spec, 8, 8, seed=12)
        params = init_params(spec, seed=13)
        grad_phi = np.random.default_rng(14).normal(size=(1, 8, 8))

        _, cache = forward(y_spatial, y_spectral, params, spec)
        full = backward(cache, params, grad_phi)

        tap = 2  # feeds both trunk layer 3 and the head concat
        taps = spec.effective_taps
        c = spec.trunk_channels

        # Path A: cut the head's view of every tap except later ones by zeroing
        # the head weights over this tap's channel slice.
        head_cut = map_params(np.copy, params)
        slot = taps.index(tap)
        head_cut.head.weights[:, slot * c : (slot + 1) * c] = 0.0
        _, cache_a = forward(y_spatial, y_spectral, head_cut, spec)
        only_trunk_path = backward(cache_a, head_cut, grad_phi)

        # Path B: cut the trunk continuation by zeroing the next layer's weights.
        trunk_cut = map_params(np.copy, params)
        trunk_cut.trunk[tap].weights[:] = 0.0
        _, cache_b = forward(y_spatial, y_spectral, trunk_cut, spec)
        only_head_path = backward(cache_b, trunk_cut, grad_phi)

        combined = (
            only_trunk_path.trunk[tap - 1].weights + only_head_path.trunk[tap - 1].weights
        )
        assert max_rel_error(full.trunk[tap - 1].weights, combined) < 1e-10

    def test_input_locality_receptive_field(self):
        spec = TINY  # radius: (7-1)/2 + 4 + 1 = 8
        radius = spec.receptive_radius
        h = w = 2 * radius + 7
        y_spatial, y_spectral = random_inputs(spec, h, w, seed=15)
        params = init_params(spec, seed=16)
        base, _ = forward(y_spatial, y_spectral, params, spec, want_cache=False)
        poked = y_spatial.copy()
        cy, cx = h // 2, w // 2
        poked[0, cy, cx] += 0.5
        out, _ = forward(poked, y_spectral, params, spec, want_cache=False)
        diff = np.abs(out - base)[0]
        ys, xs = np.nonzero(diff)
        assert np.all(np.abs(ys - cy) <= radius)
        assert np.all(np.abs(xs - cx) <= radius)
        assert diff.any()  # the change does propagate inside the field


class TestDenoisePatch:
    def test_zero_params_identity(self):
        y_spatial, y_spectral = random_inputs(TINY, 12, 12, seed=17)
        out = denoise_patch(y_spatial, y_spectral, zero_params(TINY), TINY)
        assert np.array_equal(out, y_spatial)

    def test_shape_preserved_large_extent(self):
        tiny_wide = ArchitectureSpec(
            k_adjacent=2, branch_channels=2, trunk_channels=4, trunk_depth=2, tap_layers=(1, 2)
        )
        y_spatial, y_spectral = random_inputs(tiny_wide, 200, 200, seed=18)
        out = denoise_patch(y_spatial, y_spectral, init_params(tiny_wide, 19), tiny_wide)
        assert out.shape == (1, 200, 200)

    def test_overfit_self_consistency(self):
        # A model trained on a memorizable set reproduces its own training
        # patches with MSE consistent with the recorded final loss.
        from hsdenoise.pipeline import PatchSample
        from hsdenoise.training import OptimizerConfig, TrainConfig, train

        spec = TINY
        gen = np.random.default_rng(20)
        samples = []
        for i in range(4):
            clean = gen.uniform(0.2, 0.8, size=(1, 8, 8))
            noise = gen.normal(0, 0.08, size=(1, 8, 8))
            spectral = np.repeat(clean, spec.k_adjacent, axis=0) + gen.normal(
                0, 0.08, size=(spec.k_adjacent, 8, 8)
            )
            samples.append(
                PatchSample(
                    y_spatial=clean + noise, y_spectral=spectral, label=clean,
                    band=0, y0=0, x0=0,
                )
            )
        result = train(
            samples,
            spec,
            init_params(spec, seed=21),
            TrainConfig(epochs=300, batch_size=4, shuffle_seed=1),
            OptimizerConfig(alpha=0.01),
        )
        final_loss = result.trace[-1][2]
        mses = []
        for s in samples:
            x_hat = denoise_patch(s.y_spatial, s.y_spectral, result.params, spec)
            mses.append(float(np.mean((x_hat - s.label) ** 2)))
        assert np.mean(mses) < 2.0 * final_loss
