import numpy as np
import pytest

from reference_sgd import PlainNet
from synflex.errors import ConfigurationError, NumericalFault, ShapeError
from synflex.network import (FeatureStandardizer, extract_features, forward,
                             init_classifier, loss_and_gradients, make_batches,
                             make_extractor, predict_readouts, train_phase)
from synflex.synapse import Constant, RuleConfig, Uniform


def random_soft_targets(rng, n, k):
    t = rng.random((n, k))
    return t / t.sum(axis=1, keepdims=True)


class TestInit:
    def test_construction_counts(self):
        net = init_classifier([64, 32, 10], Uniform(seed=0), seed=1)
        assert [(l.out_dim, l.in_dim) for l in net.layers] == [(32, 64), (10, 32)]
        assert all(np.all(l.b == 0.0) for l in net.layers)
        n_flex = sum(l.FW.size + l.Fb.size for l in net.layers)
        assert n_flex == 64 * 32 + 32 * 10 + 32 + 10

    def test_constant_profile_sets_every_flexibility(self):
        net = init_classifier([12, 6, 4], Constant(1.0, seed=0), seed=1)
        assert np.all(net.flexibility_values() == 1.0)

    def test_same_seed_bit_identical(self):
        a = init_classifier([16, 8, 4], Uniform(seed=9), seed=5)
        b = init_classifier([16, 8, 4], Uniform(seed=9), seed=5)
        for la, lb in zip(a.layers, b.layers):
            assert np.array_equal(la.W, lb.W)
            assert np.array_equal(la.FW, lb.FW)

    def test_init_scale_follows_fan_in(self):
        net = init_classifier([400, 200, 10], Constant(1.0), seed=0)
        assert net.layers[0].W.std() == pytest.approx(1 / np.sqrt(400), rel=0.1)

    @pytest.mark.parametrize("dims", [[], [5], [5, 0, 3]])
    def test_bad_dims_rejected(self, dims):
        with pytest.raises(ConfigurationError):
            init_classifier(dims, Constant(1.0), seed=0)

    def test_snapshots_are_frozen(self):
        net = init_classifier([8, 4], Uniform(seed=0), seed=0)
        with pytest.raises(ValueError):
            net.layers[0].W_init[0, 0] = 99.0
        with pytest.raises(ValueError):
            net.layers[0].FW[0, 0] = 0.5


class TestExtractor:
    def test_zero_image_gives_zero_features(self):
        ex = make_extractor(28 * 56, 32, seed=0)
        feats = extract_features(ex, np.zeros((28, 56)))
        assert feats.shape == (32,)
        assert np.all(feats == 0.0)

    def test_deterministic_and_nonnegative(self, rng):
        ex = make_extractor(28 * 56, 64, seed=3)
        imgs = rng.random((5, 28, 56))
        a = extract_features(ex, imgs)
        b = extract_features(ex, imgs)
        assert np.array_equal(a, b)
        assert np.all(a >= 0.0)

    def test_dimension_mismatch(self):
        ex = make_extractor(28 * 28, 16, seed=0)
        with pytest.raises(ShapeError):
            extract_features(ex, np.zeros((28, 56)))

    def test_projection_frozen_through_training(self, rng):
        ex = make_extractor(10, 8, seed=0)
        before = ex.projection.tobytes()
        net = init_classifier([8, 6, 3], Uniform(seed=0), seed=1)
        feats = extract_features(ex, rng.random((12, 2, 5)))
        targets = random_soft_targets(rng, 12, 3)
        net.refresh_reference()
        train_phase(net, make_batches(feats, targets, 4), RuleConfig(eta=0.1), epochs=3)
        assert ex.projection.tobytes() == before

    def test_standardizer_centers_train_features(self, rng):
        feats = rng.random((100, 6)) * 3 + 1
        std = FeatureStandardizer.fit(feats)
        out = std.apply(feats)
        assert np.allclose(out.mean(axis=0), 0.0, atol=1e-9)
        assert np.allclose(out.std(axis=0), 1.0, atol=1e-6)


class TestForward:
    def test_probabilities_sum_to_one(self, rng):
        net = init_classifier([20, 12, 7], Uniform(seed=1), seed=2)
        p = forward(net, rng.standard_normal((30, 20)))
        assert p.shape == (30, 7)
        assert np.allclose(p.sum(axis=1), 1.0, atol=1e-9)
        assert np.all(p > 0.0)

    def test_zeroed_output_layer_gives_uniform(self):
        net = init_classifier([6, 4, 10], Constant(1.0), seed=0)
        net.layers[-1].W[:] = 0.0
        p = forward(net, np.ones(6))
        assert np.allclose(p, 0.1, atol=1e-12)

    def test_shape_mismatch(self):
        net = init_classifier([6, 4], Constant(1.0), seed=0)
        with pytest.raises(ShapeError):
            forward(net, np.ones(7))


class TestGradients:
    def test_central_difference_check(self, rng):
        """Analytic gradients match central finite differences to 1e-4
        relative error on >= 100 random parameter probes."""
        eps = 1e-6
        checked = 0
        worst = 0.0
        for net_seed in (11, 12, 13):
            net = init_classifier([8, 6, 4], Uniform(seed=4 + net_seed), seed=net_seed)
            x = rng.random((10, 8))
            t = random_soft_targets(rng, 10, 4)
            _, grads = loss_and_gradients(net, x, t)
            for li, layer in enumerate(net.layers):
                for arr, g in ((layer.W, grads[li][0]), (layer.b, grads[li][1])):
                    flat = arr.reshape(-1)
                    gflat = np.asarray(g).reshape(-1)
                    probe = rng.choice(flat.size, size=min(30, flat.size), replace=False)
                    for idx in probe:
                        orig = flat[idx]
                        flat[idx] = orig + eps
                        up, _ = loss_and_gradients(net, x, t)
                        flat[idx] = orig - eps
                        dn, _ = loss_and_gradients(net, x, t)
                        flat[idx] = orig
                        fd = (up - dn) / (2 * eps)
                        denom = max(abs(fd), abs(gflat[idx]), 1e-8)
                        worst = max(worst, abs(fd - gflat[idx]) / denom)
                        checked += 1
        assert checked >= 100
        assert worst < 1e-4


class TestTrainPhase:
    def test_zero_epochs_is_identity(self, rng):
        net = init_classifier([6, 5, 3], Uniform(seed=2), seed=3)
        before = [l.W.copy() for l in net.layers]
        net.refresh_reference()
        trace = train_phase(net, make_batches(rng.random((8, 6)),
                                              random_soft_targets(rng, 8, 3), 4),
                            RuleConfig(), epochs=0)
        assert trace == []
        assert all(np.array_equal(b, l.W) for b, l in zip(before, net.layers))

    def test_loss_trace_finite_and_decreasing_on_easy_task(self, rng):
        net = init_classifier([10, 8, 2], Constant(1.0), seed=0)
        x = np.concatenate([rng.random((40, 10)) + 2.0, -rng.random((40, 10)) - 2.0])
        t = np.zeros((80, 2))
        t[:40, 0] = 1.0
        t[40:, 1] = 1.0
        net.refresh_reference()
        trace = train_phase(net, make_batches(x, t, 16), RuleConfig(eta=0.2), epochs=5)
        assert len(trace) == 5
        assert all(np.isfinite(v) for v in trace)
        assert trace[-1] < trace[0]

    def test_nan_input_aborts_with_location(self, rng):
        net = init_classifier([4, 3], Constant(1.0), seed=0)
        x = rng.random((6, 4))
        x[3, 1] = np.nan
        t = random_soft_targets(rng, 6, 3)
        net.refresh_reference()
        with pytest.raises(NumericalFault) as err:
            train_phase(net, make_batches(x, t, 2), RuleConfig(), epochs=1)
        assert err.value.epoch == 0
        assert err.value.batch == 1

    def test_conventional_profile_matches_plain_sgd_bitwise(self, rng):
        """With Constant(1.0) the metaplastic trainer is elementwise
        identical to the plain-SGD oracle at matched op order."""
        dims = [12, 9, 5]
        seed = 21
        net = init_classifier(dims, Constant(1.0, seed=0), seed=seed)
        plain = PlainNet.gaussian_init(dims, seed=seed)
        for layer, w, b in zip(net.layers, plain.W, plain.b):
            assert np.array_equal(layer.W, w) and np.array_equal(layer.b, b)
        cfg = RuleConfig(alpha=7.0, eta=0.05)
        for _ in range(3):  # three phases with reference refreshes between
            x = rng.random((20, 12))
            t = random_soft_targets(rng, 20, 5)
            batches = make_batches(x, t, 8)
            net.refresh_reference()
            train_phase(net, batches, cfg, epochs=2)
            plain.train(batches, eta=0.05, epochs=2)
            for layer, w, b in zip(net.layers, plain.W, plain.b):
                assert np.array_equal(layer.W, w)
                assert np.array_equal(layer.b, b)

    def test_flexibility_multiset_unchanged_by_training(self, rng):
        net = init_classifier([10, 6, 3], Uniform(seed=8), seed=9)
        before = np.sort(net.flexibility_values())
        net.refresh_reference()
        train_phase(net, make_batches(rng.random((16, 10)),
                                      random_soft_targets(rng, 16, 3), 8),
                    RuleConfig(eta=0.3), epochs=4)
        assert np.array_equal(np.sort(net.flexibility_values()), before)

    def test_second_phase_moves_less_after_drift(self, rng):
        """With low constant flexibility, a second phase on the same data
        changes weights strictly less than the first did."""
        net = init_classifier([10, 8, 4], Constant(0.3, seed=0), seed=4)
        x = rng.random((32, 10))
        t = np.zeros((32, 4))
        t[np.arange(32), rng.integers(0, 4, 32)] = 1.0
        batches = make_batches(x, t, 8)
        cfg = RuleConfig(alpha=50.0, eta=0.3)
        net.refresh_reference()
        start = [l.W.copy() for l in net.layers]
        train_phase(net, batches, cfg, epochs=3)
        moved_first = sum(np.abs(l.W - s).mean() for l, s in zip(net.layers, start))
        net.refresh_reference()
        mid = [l.W.copy() for l in net.layers]
        train_phase(net, batches, cfg, epochs=3)
        moved_second = sum(np.abs(l.W - s).mean() for l, s in zip(net.layers, mid))
        assert moved_second < moved_first

    def test_predict_readouts_ties_take_lowest_index(self):
        net = init_classifier([4, 3], Constant(1.0), seed=0)
        net.layers[0].W[:] = 0.0
        preds = predict_readouts(net, np.ones((5, 4)))
        assert np.all(preds == 0)
