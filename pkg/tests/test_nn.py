import numpy as np
import pytest

from shiftbench import nn

RNG = np.random.default_rng(777)


def small_arch(head):
    return nn.Architecture(input_dim=4, hidden=(6,), feature_dim=5, head=head)


class TestInit:
    def test_deterministic_per_seed(self):
        arch = small_arch("direct")
        a = nn.flatten_weights(nn.init_model(arch, 42))
        b = nn.flatten_weights(nn.init_model(arch, 42))
        assert np.array_equal(a, b)

    def test_seeds_differ(self):
        arch = small_arch("direct")
        a = nn.flatten_weights(nn.init_model(arch, 1))
        b = nn.flatten_weights(nn.init_model(arch, 2))
        assert not np.array_equal(a, b)

    def test_no_hidden_layer_is_linear_model(self):
        arch = nn.Architecture(input_dim=3, hidden=(), head="direct")
        assert arch.feature_dim == 3
        model = nn.init_model(arch, 0)
        x = np.array([1.0, -2.0, 0.5])
        # g(x) = x; prediction is the head's linear map
        assert np.array_equal(nn.extract_features(model, x)[0], x)
        W, b = model.weights[0]
        assert nn.forward(model, x).values[0] == pytest.approx(W @ x + b)

    def test_invalid_arch(self):
        with pytest.raises(ValueError):
            nn.Architecture(input_dim=0)
        with pytest.raises(ValueError):
            nn.Architecture(input_dim=2, head="softmax")


class TestForward:
    def test_zero_weight_direct(self):
        model = nn.init_model(small_arch("direct"), 0)
        nn.set_flat_weights(model, np.zeros(nn.flatten_weights(model).size))
        assert nn.forward(model, np.ones(4)).values[0] == 0.0

    def test_zero_weight_gaussian_unit_variance(self):
        model = nn.init_model(small_arch("gaussian"), 0)
        nn.set_flat_weights(model, np.zeros(nn.flatten_weights(model).size))
        mu, sigma2 = nn.forward(model, np.ones(4)).values
        assert mu == 0.0
        assert sigma2 == 1.0  # exp(0)

    def test_hand_set_linear_weights(self):
        arch = nn.Architecture(input_dim=3, hidden=(), head="direct")
        model = nn.init_model(arch, 0)
        w = np.array([0.5, -1.0, 2.0])
        model.weights[0] = (w[None, :], np.zeros(1))
        x = np.array([2.0, 3.0, 1.0])
        assert nn.forward(model, x).values[0] == pytest.approx(w @ x)

    def test_dimension_mismatch(self):
        model = nn.init_model(small_arch("direct"), 0)
        with pytest.raises(ValueError, match="dim"):
            nn.forward(model, np.ones(5))

    def test_gaussian_variance_positive(self):
        model = nn.init_model(small_arch("gaussian"), 5)
        X = RNG.normal(size=(50, 4))
        _, sigma2 = nn.predict(model, X)
        assert np.all(sigma2 > 0)


class TestLoss:
    def test_l2(self):
        assert nn.loss("direct", (3.0,), 1.0) == 4.0

    def test_gaussian_zero_residual(self):
        assert nn.loss("gaussian", (2.0, 1.0), 2.0) == pytest.approx(0.5 * np.log(2 * np.pi))

    def test_gaussian_nonpositive_variance(self):
        with pytest.raises(ValueError):
            nn.loss("gaussian", (0.0, 0.0), 1.0)

    def test_pinball_component(self):
        # alpha=0.1: q_lo at tau=0.05; rho_{0.05}(1 - 0) = 0.05, upper component
        # rho_{0.95}(1 - 0) = 0.95; reported loss is their mean
        val = nn.loss("quantile", (0.0, 0.0), 1.0, alpha=0.1)
        assert val == pytest.approx(0.5 * (0.05 + 0.95))


class TestGradients:
    @pytest.mark.parametrize("head", nn.HEADS)
    def test_matches_finite_differences(self, head):
        rng = np.random.default_rng(101)
        arch = small_arch(head)
        model = nn.init_model(arch, 0)
        flat0 = nn.flatten_weights(model)
        for _ in range(12):
            flat = flat0 + rng.normal(scale=0.5, size=flat0.size)
            X = rng.normal(size=(6, 4))
            y = rng.normal(size=6)
            nn.set_flat_weights(model, flat)
            _, grad = nn.loss_and_gradient(model, X, y, alpha=0.1)
            h = 1e-5
            for i in rng.choice(flat.size, size=10, replace=False):
                for sign in (1.0, -1.0):
                    f2 = flat.copy()
                    f2[i] += sign * h
                    nn.set_flat_weights(model, f2)
                    v, _ = nn.loss_and_gradient(model, X, y, alpha=0.1)
                    if sign > 0:
                        vp = v
                    else:
                        vm = v
                num = (vp - vm) / (2 * h)
                denom = max(abs(num), 1e-6)
                assert abs(num - grad[i]) / denom <= 1e-4


class TestTrain:
    def make_linear_data(self, n=200):
        rng = np.random.default_rng(3)
        X = rng.uniform(-1, 1, size=(n, 1))
        return X, 2.0 * X[:, 0]

    def test_recovers_linear_relation(self):
        X, y = self.make_linear_data()
        arch = nn.Architecture(input_dim=1, hidden=(16,), feature_dim=8)
        model = nn.train(nn.init_model(arch, 0), X, y,
                         nn.TrainHyper(epochs=150, batch_size=32, learning_rate=3e-3, seed=0))
        rng = np.random.default_rng(4)
        X_val = rng.uniform(-1, 1, size=(100, 1))
        y_val = 2.0 * X_val[:, 0]
        # least-squares oracle on this noiseless task is exact; model should be close
        coef = np.linalg.lstsq(X, y, rcond=None)[0]
        assert coef[0] == pytest.approx(2.0)
        assert np.mean(np.abs(nn.predict(model, X_val) - y_val)) < 0.05

    def test_zero_epochs_forbidden(self):
        with pytest.raises(ValueError):
            nn.TrainHyper(epochs=0)

    def test_identical_seeds_identical_weights(self):
        X, y = self.make_linear_data(64)
        arch = small_arch("gaussian")
        X = np.repeat(X, 4, axis=1)
        runs = [nn.train(nn.init_model(arch, 9), X, y, nn.TrainHyper(epochs=3, seed=9))
                for _ in range(2)]
        assert np.array_equal(nn.flatten_weights(runs[0]), nn.flatten_weights(runs[1]))

    def test_loss_decreases_on_tiny_linear_task(self):
        rng = np.random.default_rng(8)
        X = rng.uniform(-1, 1, size=(32, 2))
        y = X @ np.array([1.0, -1.0])
        arch = nn.Architecture(input_dim=2, hidden=(8,), feature_dim=4)
        model = nn.train(nn.init_model(arch, 1), X, y,
                         nn.TrainHyper(epochs=10, batch_size=32, learning_rate=1e-3, seed=1),
                         standardize=False)
        hist = model.train_loss_history
        assert all(a >= b for a, b in zip(hist, hist[1:]))

    def test_loss_history_length(self):
        X, y = self.make_linear_data(64)
        X = np.repeat(X, 4, axis=1)
        model = nn.train(nn.init_model(small_arch("direct"), 0), X, y,
                         nn.TrainHyper(epochs=7, seed=0))
        assert len(model.train_loss_history) == 7


class TestFeatures:
    def test_zero_weight_tanh_features_are_zero(self):
        model = nn.init_model(small_arch("direct"), 0)
        nn.set_flat_weights(model, np.zeros(nn.flatten_weights(model).size))
        feats = nn.extract_features(model, RNG.normal(size=(3, 4)))
        assert np.array_equal(feats, np.zeros((3, 5)))

    def test_feature_dim(self):
        model = nn.init_model(small_arch("gaussian"), 2)
        feats = nn.extract_features(model, RNG.normal(size=(10, 4)))
        assert feats.shape == (10, 5)

    def test_duplicate_inputs_duplicate_rows(self):
        model = nn.init_model(small_arch("direct"), 2)
        x = RNG.normal(size=4)
        feats = nn.extract_features(model, np.stack([x, x]))
        assert np.array_equal(feats[0], feats[1])


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path):
        X = RNG.normal(size=(64, 4))
        y = RNG.normal(size=64)
        model = nn.train(nn.init_model(small_arch("gaussian"), 11), X, y,
                         nn.TrainHyper(epochs=2, seed=11))
        path = tmp_path / "model.json"
        nn.save_model(model, path)
        loaded = nn.load_model(path)
        assert np.array_equal(nn.flatten_weights(loaded), nn.flatten_weights(model))
        assert loaded.target_mean == model.target_mean
        assert loaded.target_std == model.target_std
        assert loaded.architecture == model.architecture
        assert loaded.train_loss_history == model.train_loss_history

    def test_unknown_format_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"format": "other"}')
        with pytest.raises(ValueError, match="format"):
            nn.load_model(path)
