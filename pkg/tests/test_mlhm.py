"""Regressor: gradients, training behavior, determinism, serialization."""

import numpy as np
import numpy.testing as npt
import pytest

from drift_adapt import mlhm, rng
from drift_adapt._net import DenseNet
from drift_adapt.errors import ConfigError, DimensionError, DivergenceError
from drift_adapt.mlhm import LayerSpec, MlhmArch, TrainConfig


def _linear_problem(seed=0, n=400, d=8, e=3, noise=0.05):
    g = np.random.default_rng(seed)
    x = g.standard_normal((n, d))
    a = g.standard_normal((d, e))
    y = x @ a + noise * g.standard_normal((n, e))
    return x, y


def _off_kink_net(dims, seed, min_gap=1e-3):
    """He-init net whose ReLU preactivations stay clear of zero on the probe."""
    g = np.random.default_rng(seed)
    x = g.uniform(0.5, 1.5, size=(4, dims[0]))
    y = g.standard_normal((4, dims[-1]))
    acts = ["relu"] * (len(dims) - 2) + ["linear"]
    net = DenseNet.create(dims, acts, rng.generator(seed, "init"))
    a = x
    for w, b, name in zip(net.weights, net.biases, net.activations):
        z = a @ w + b
        if name == "relu":
            assert np.min(np.abs(z)) > min_gap, "probe sits on a ReLU kink; reseed"
            a = np.maximum(z, 0.0)
        else:
            a = z
    return net, x, y


class TestArchitecture:
    def test_dims_activations_dropout(self):
        arch = MlhmArch(5, 2, (LayerSpec(8, "relu", 0.5), LayerSpec(4, "tanh", 0.0)))
        assert arch.dims() == [5, 8, 4, 2]
        assert arch.activations() == ["relu", "tanh", "linear"]
        assert arch.dropout_rates() == [0.5, 0.0, 0.0]
        assert MlhmArch.from_dict(arch.to_dict()) == arch

    def test_default_and_full_scale_stacks(self):
        small = mlhm.default_arch(12, 7)
        assert small.dims() == [12, 64, 32, 16, 7]
        big = mlhm.paper_arch()
        assert big.dims() == [510, 500, 300, 100, 4124]
        assert big.dropout_rates() == [0.5, 0.5, 0.0, 0.0]

    def test_validation(self):
        with pytest.raises(ConfigError):
            MlhmArch(0, 1, ()).validate()
        with pytest.raises(ConfigError):
            MlhmArch(2, 1, (LayerSpec(0),)).validate()
        with pytest.raises(ConfigError):
            MlhmArch(2, 1, (LayerSpec(4, "relu", 1.0),)).validate()


class TestGradients:
    def test_single_linear_layer_closed_form(self):
        g = np.random.default_rng(1)
        w = g.standard_normal((4, 3))
        b = g.standard_normal(3)
        net = DenseNet([w.copy()], [b.copy()], ["linear"])
        x = g.standard_normal((1, 4))
        y = g.standard_normal((1, 3))
        lam = 0.01
        loss, grads_w, grads_b = mlhm.loss_and_gradients(net, x, y, l2_weight=lam)
        resid = (x @ w + b) - y
        npt.assert_allclose(loss, float(np.sum(resid * resid)) + lam * np.sum(w * w),
                            rtol=1e-12)
        npt.assert_allclose(grads_w[0], 2.0 * x.T @ resid + 2.0 * lam * w, rtol=1e-12)
        npt.assert_allclose(grads_b[0], 2.0 * resid[0], rtol=1e-12)
        assert mlhm.gradient_check(net, x, y, l2_weight=lam) < 1e-8

    def test_three_layer_relu_check(self):
        net, x, y = _off_kink_net([5, 16, 8, 2], seed=3)
        assert mlhm.gradient_check(net, x, y) < 1e-4
        assert mlhm.gradient_check(net, x, y, l2_weight=1e-3) < 1e-4

    def test_l2_adds_exactly_the_weight_term(self):
        net, x, y = _off_kink_net([4, 8, 2], seed=5)
        lam = 0.02
        loss0, gw0, gb0 = mlhm.loss_and_gradients(net, x, y, 0.0)
        loss1, gw1, gb1 = mlhm.loss_and_gradients(net, x, y, lam)
        npt.assert_allclose(
            loss1 - loss0, lam * sum(np.sum(w * w) for w in net.weights), rtol=1e-9
        )
        for g0, g1, w in zip(gw0, gw1, net.weights):
            npt.assert_allclose(g1 - g0, 2.0 * lam * w, rtol=1e-9, atol=1e-12)
        for g0, g1 in zip(gb0, gb1):
            npt.assert_array_equal(g0, g1)

    def test_full_batch_gradients_are_row_order_invariant(self):
        net, x, y = _off_kink_net([6, 10, 3], seed=7)
        loss_a, gw_a, _ = mlhm.loss_and_gradients(net, x, y)
        perm = [2, 0, 3, 1]
        loss_b, gw_b, _ = mlhm.loss_and_gradients(net, x[perm], y[perm])
        npt.assert_allclose(loss_a, loss_b, rtol=1e-12)
        for ga, gb in zip(gw_a, gw_b):
            npt.assert_allclose(ga, gb, rtol=1e-10, atol=1e-12)

    def test_eps_bounds_enforced(self):
        net, x, y = _off_kink_net([3, 4, 1], seed=11)
        for eps in (1e-7, 1e-3):
            with pytest.raises(ConfigError):
                mlhm.gradient_check(net, x, y, eps=eps)


class TestTraining:
    def test_learns_linear_target(self):
        x, y = _linear_problem()
        arch = MlhmArch(8, 3, (LayerSpec(16, "linear", 0.0),))
        cfg = TrainConfig(epochs=200, batch_size=64, learning_rate=3e-3, seed=0)
        model = mlhm.train_mlhm(x, y, cfg, arch)
        val_idx = model.split["val"]
        val_mae = float(np.mean(np.abs(model.predict(x[val_idx]) - y[val_idx])))
        assert val_mae < 0.1 * float(np.std(y))

    def test_train_loss_mostly_non_increasing(self):
        x, y = _linear_problem(seed=2)
        arch = MlhmArch(8, 3, (LayerSpec(16, "linear", 0.0),))
        cfg = TrainConfig(epochs=150, batch_size=512, learning_rate=5e-3, seed=1)
        model = mlhm.train_mlhm(x, y, cfg, arch)
        losses = model.history["train_loss"]
        assert losses[-1] < losses[0]
        deltas = np.diff(losses)
        assert np.mean(deltas <= 0.0) >= 0.95

    def test_zero_epochs_returns_fresh_init(self):
        x, y = _linear_problem(n=50)
        cfg = TrainConfig(epochs=0, seed=9)
        arch = MlhmArch(8, 3, (LayerSpec(12, "relu", 0.0),))
        model = mlhm.train_mlhm(x, y, cfg, arch)
        assert model.history == {"train_loss": [], "val_loss": []}
        fresh = DenseNet.create(arch.dims(), arch.activations(), rng.generator(9, "init"))
        for got, want in zip(model.net.params(), fresh.params()):
            npt.assert_array_equal(got, want)

    def test_bit_identical_reruns(self):
        x, y = _linear_problem(n=80)
        arch = MlhmArch(8, 3, (LayerSpec(10, "relu", 0.2), LayerSpec(6, "relu", 0.0)))
        a = mlhm.train_mlhm(x, y, TrainConfig(epochs=20, seed=4), arch)
        b = mlhm.train_mlhm(x, y, TrainConfig(epochs=20, seed=4), arch)
        assert a.history == b.history
        for pa, pb in zip(a.net.params(), b.net.params()):
            npt.assert_array_equal(pa, pb)
        c = mlhm.train_mlhm(x, y, TrainConfig(epochs=20, seed=5), arch)
        assert any(
            not np.array_equal(pa, pc)
            for pa, pc in zip(a.net.params(), c.net.params())
        )

    def test_best_validation_weights_are_restored(self):
        x, y = _linear_problem(seed=3, n=120, noise=0.5)
        arch = MlhmArch(8, 3, (LayerSpec(12, "relu", 0.0),))
        model = mlhm.train_mlhm(x, y, TrainConfig(epochs=60, seed=2), arch)
        val_idx = model.split["val"]
        yv = (y[val_idx] - model.y_center) / model.y_scale
        pred = model.net.forward(x[val_idx])
        recomputed = float(np.mean(np.sum((pred - yv) ** 2, axis=1)))
        npt.assert_allclose(recomputed, min(model.history["val_loss"]), rtol=1e-12)

    def test_split_partitions_all_rows(self):
        x, y = _linear_problem(n=100)
        model = mlhm.train_mlhm(
            x, y, TrainConfig(epochs=1, seed=0),
            MlhmArch(8, 3, (LayerSpec(4, "relu", 0.0),)),
        )
        parts = [model.split[k] for k in ("train", "val", "test")]
        assert [len(p) for p in parts] == [70, 15, 15]
        npt.assert_array_equal(np.sort(np.concatenate(parts)), np.arange(100))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_reported_with_epoch(self):
        x, y = _linear_problem(n=12)
        cfg = TrainConfig(epochs=3, batch_size=4, learning_rate=1e155, seed=0)
        with pytest.raises(DivergenceError, match="non-finite training loss") as exc:
            mlhm.train_mlhm(x, y, cfg, MlhmArch(8, 3, (LayerSpec(4, "linear", 0.0),)))
        assert exc.value.epoch == 0

    def test_input_validation(self):
        x, y = _linear_problem(n=30)
        with pytest.raises(DimensionError):
            mlhm.train_mlhm(x[:8], y[:8])
        with pytest.raises(DimensionError):
            mlhm.train_mlhm(x, y[:20])
        with pytest.raises(DimensionError):
            mlhm.train_mlhm(x, y, arch=MlhmArch(5, 3, ()))
        with pytest.raises(ConfigError):
            mlhm.train_mlhm(x, y, TrainConfig(epochs=-1))
        with pytest.raises(ConfigError):
            mlhm.train_mlhm(x, y, TrainConfig(train_fraction=0.9, val_fraction=0.3,
                                              test_fraction=0.3))


class TestForwardContracts:
    def test_zero_weights_predict_bias(self):
        bias = np.array([1.5, -2.0])
        net = DenseNet([np.zeros((4, 2))], [bias], ["linear"])
        out = net.forward(np.random.default_rng(0).standard_normal((7, 4)))
        npt.assert_array_equal(out, np.tile(bias, (7, 1)))

    def test_dropout_expectation_matches_deterministic_pass(self):
        g = np.random.default_rng(8)
        dims = [6, 32, 16, 4]
        weights = [g.uniform(0.05, 0.4, size=(a, b)) for a, b in zip(dims, dims[1:])]
        biases = [g.uniform(0.05, 0.2, size=b) for b in dims[1:]]
        net = DenseNet(weights, biases, ["relu", "relu", "linear"])
        x = g.uniform(0.5, 1.5, size=6)
        deterministic = net.forward(x)
        tiled = np.tile(x, (10000, 1))
        sampled = net.forward(tiled, dropout=[0.3, 0.2, 0.0], g=np.random.default_rng(1))
        npt.assert_allclose(sampled.mean(axis=0), deterministic, rtol=0.02)

    def test_dropout_validation(self):
        net = DenseNet.identity(3)
        x = np.ones((2, 3))
        with pytest.raises(ConfigError):
            net.forward(x, dropout=[0.5])
        with pytest.raises(ConfigError):
            net.forward(x, dropout=[0.5], g=None)
        with pytest.raises(DimensionError):
            net.forward(x, dropout=[0.0, 0.0], g=np.random.default_rng(0))
        with pytest.raises(DimensionError):
            net.forward(np.ones((2, 4)))


class TestModelIO:
    def test_round_trip_preserves_predictions(self, tmp_path):
        x, y = _linear_problem(n=60)
        model = mlhm.train_mlhm(
            x, y, TrainConfig(epochs=10, seed=1),
            MlhmArch(8, 3, (LayerSpec(8, "relu", 0.0),)),
        )
        model.schema_fingerprint = "abc123"
        model.projection_hash = "def456"
        path = tmp_path / "model.json"
        mlhm.save_model(model, path)
        back = mlhm.load_model(path)
        probe = np.random.default_rng(2).standard_normal((5, 8))
        npt.assert_array_equal(back.predict(probe), model.predict(probe))
        assert back.history == model.history
        assert back.config == model.config
        assert back.schema_fingerprint == "abc123"
        assert back.projection_hash == "def456"
        for key in ("train", "val", "test"):
            npt.assert_array_equal(back.split[key], model.split[key])
