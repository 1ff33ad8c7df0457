"""Cycle translators and kernel mean matching on controlled toy domains."""

import numpy as np
import numpy.testing as npt
import pytest

from drift_adapt import adversarial
from drift_adapt.adversarial import CycleGanModel, GanConfig, KmmConfig
from drift_adapt.errors import ConfigError, DimensionError, DivergenceError, SchemaError
from drift_adapt.featurize import FeatureMatrix, FeatureSchema


def _toy_domains(seed, n=500):
    """Mean-shifted 1D Gaussians: source N(0,1), target N(3,1)."""
    g = np.random.default_rng(100 + seed)
    return g.normal(0.0, 1.0, size=(n, 1)), g.normal(3.0, 1.0, size=(n, 1))


class TestIdentityModel:
    def test_cycle_losses_exactly_zero(self):
        model = CycleGanModel.identity(4)
        g = np.random.default_rng(0)
        xs, xt = g.standard_normal((20, 4)), g.standard_normal((15, 4))
        assert adversarial.cycle_losses(model, xs, xt) == (0.0, 0.0)

    def test_translate_is_identity(self):
        model = CycleGanModel.identity(3)
        x = np.random.default_rng(1).standard_normal((10, 3))
        npt.assert_array_equal(adversarial.translate_to_source(model, x), x)


class TestTranslate:
    def test_feature_matrix_round_trip_metadata(self):
        schema = FeatureSchema((("lin_acc_x", "peak"), ("lin_acc_y", "peak")))
        fm = FeatureMatrix(
            np.random.default_rng(2).standard_normal((6, 2)), schema,
            [f"r{i}" for i in range(6)], "field",
        )
        model = CycleGanModel.identity(2)
        out = adversarial.translate_to_source(model, fm)
        assert isinstance(out, FeatureMatrix)
        assert out.domain_tag == "field-to-source"
        assert out.impact_ids == fm.impact_ids
        assert out.n == 6
        npt.assert_array_equal(out.values, fm.values)

    def test_repeated_calls_bit_exact(self):
        xs, xt = _toy_domains(0, n=60)
        model = adversarial.train_cyclegan(xs, xt, GanConfig(epochs=5, seed=0))
        a = adversarial.translate_to_source(model, xt)
        b = adversarial.translate_to_source(model, xt)
        npt.assert_array_equal(a, b)

    def test_schema_and_dim_validation(self):
        model = CycleGanModel.identity(2)
        with pytest.raises(DimensionError):
            adversarial.translate_to_source(model, np.ones((3, 5)))
        model.schema_fingerprint = "expected"
        schema = FeatureSchema((("lin_acc_x", "peak"), ("lin_acc_y", "peak")))
        with pytest.raises(SchemaError):
            adversarial.translate_to_source(model, FeatureMatrix(np.ones((2, 2)), schema))


class TestTrainCyclegan:
    def test_recovers_three_sigma_shift(self):
        xs, xt = _toy_domains(0)
        model = adversarial.train_cyclegan(xs, xt, GanConfig(seed=0))
        translated = adversarial.translate_to_source(model, xt)
        assert abs(float(translated.mean())) < 0.3

    def test_deterministic_histories_and_weights(self):
        xs, xt = _toy_domains(1, n=80)
        cfg = GanConfig(epochs=8, seed=3)
        a = adversarial.train_cyclegan(xs, xt, cfg)
        b = adversarial.train_cyclegan(xs, xt, GanConfig(epochs=8, seed=3))
        assert a.history == b.history
        for pa, pb in zip(a.g_t.params(), b.g_t.params()):
            npt.assert_array_equal(pa, pb)

    @pytest.mark.parametrize("seed", range(5))
    def test_cycle_loss_declines(self, seed):
        xs, xt = _toy_domains(seed)
        model = adversarial.train_cyclegan(xs, xt, GanConfig(epochs=60, seed=seed))
        first = model.history["cycle_s"][0] + model.history["cycle_t"][0]
        last = model.history["cycle_s"][-1] + model.history["cycle_t"][-1]
        assert last < first

    def test_history_keys_and_length(self):
        xs, xt = _toy_domains(2, n=70)
        model = adversarial.train_cyclegan(xs, xt, GanConfig(epochs=4, seed=0))
        for key in ("cycle_s", "cycle_t", "adv", "disc_s", "disc_t", "total_g"):
            assert len(model.history[key]) == 4

    def test_input_validation(self):
        with pytest.raises(DimensionError):
            adversarial.train_cyclegan(np.ones((10, 2)), np.ones((10, 3)))
        with pytest.raises(DimensionError):
            adversarial.train_cyclegan(np.ones((1, 2)), np.ones((10, 2)))
        schema_a = FeatureSchema((("lin_acc_x", "peak"),))
        schema_b = FeatureSchema((("lin_acc_y", "peak"),))
        with pytest.raises(SchemaError):
            adversarial.train_cyclegan(
                FeatureMatrix(np.ones((5, 1)), schema_a),
                FeatureMatrix(np.ones((5, 1)), schema_b),
            )

    def test_config_validation(self):
        for bad in (
            GanConfig(noise_dropout_p=1.0),
            GanConfig(cycle_norm="l3"),
            GanConfig(epochs=0),
            GanConfig(lambda_s=0.0),
            GanConfig(generator_widths=(0,)),
            GanConfig(d_steps=0),
        ):
            with pytest.raises(ConfigError):
                bad.validate()

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_reported(self):
        xs, xt = _toy_domains(3, n=140)
        cfg = GanConfig(epochs=1, seed=0, lr_g=1e155)
        with pytest.raises(DivergenceError):
            adversarial.train_cyclegan(xs, xt, cfg)

    def test_save_load_round_trip(self, tmp_path):
        xs, xt = _toy_domains(4, n=60)
        model = adversarial.train_cyclegan(xs, xt, GanConfig(epochs=5, seed=1))
        path = tmp_path / "gan.json"
        adversarial.save_cyclegan(model, path)
        back = adversarial.load_cyclegan(path)
        npt.assert_array_equal(
            adversarial.translate_to_source(back, xt),
            adversarial.translate_to_source(model, xt),
        )
        assert back.config == model.config
        assert back.history == model.history


class TestKmm:
    def test_identical_samples_keep_uniform_weights(self):
        x = np.random.default_rng(5).standard_normal((100, 2))
        res = adversarial.kmm_weights(x, x.copy())
        assert np.max(np.abs(res.beta - 1.0)) < 0.05
        assert res.converged

    def test_shifted_gaussians_reweighted(self):
        g = np.random.default_rng(0)
        x_ref = g.normal(0.0, 1.0, size=(300, 1))
        x_adj = g.normal(1.0, 1.0, size=(300, 1))
        res = adversarial.kmm_weights(x_ref, x_adj)
        assert res.objective <= 0.2 * res.objective_uniform
        assert np.all(res.beta >= 0.0)
        assert np.all(res.beta <= 10.0 + 1e-12)
        assert abs(float(res.beta.mean()) - 1.0) <= 0.1 + 1e-9
        weighted_mean = float((res.beta * x_adj[:, 0]).sum() / res.beta.sum())
        assert abs(weighted_mean) < abs(float(x_adj.mean()))

    def test_best_iterate_never_worse_than_uniform(self):
        g = np.random.default_rng(7)
        x_ref = g.normal(0.0, 1.0, size=(120, 3))
        x_adj = g.normal(0.8, 1.2, size=(150, 3))
        for iters in (1, 5, 500):
            res = adversarial.kmm_weights(x_ref, x_adj, KmmConfig(max_iters=iters))
            assert res.objective <= res.objective_uniform
            assert res.iterations <= iters

    def test_non_convergence_flagged(self):
        g = np.random.default_rng(1)
        x_ref = g.normal(0.0, 1.0, size=(200, 1))
        x_adj = g.normal(1.0, 1.0, size=(200, 1))
        res = adversarial.kmm_weights(x_ref, x_adj, KmmConfig(max_iters=1))
        assert not res.converged
        assert res.iterations == 1
        assert res.objective <= res.objective_uniform

    def test_explicit_bandwidth_honored(self):
        g = np.random.default_rng(2)
        x = g.standard_normal((50, 2))
        res = adversarial.kmm_weights(x, x + 0.5, KmmConfig(bandwidth=2.5))
        assert res.bandwidth == 2.5
        auto = adversarial.kmm_weights(x, x + 0.5)
        assert auto.bandwidth > 0.0

    def test_composition_with_translation_improves_match(self):
        xs, xt = _toy_domains(0)
        model = adversarial.train_cyclegan(xs, xt, GanConfig(seed=0))
        translated = adversarial.translate_to_source(model, xt)
        res = adversarial.kmm_weights(xs, translated)
        assert res.objective <= res.objective_uniform
        assert np.all(res.beta >= 0.0) and np.all(res.beta <= 10.0 + 1e-12)
        assert abs(float(res.beta.mean()) - 1.0) <= 0.1 + 1e-9

    def test_config_validation(self):
        for bad in (
            KmmConfig(b_max=1.0),
            KmmConfig(mean_tol=0.0),
            KmmConfig(bandwidth=-1.0),
            KmmConfig(max_iters=0),
            KmmConfig(tol=0.0),
        ):
            with pytest.raises(ConfigError):
                bad.validate()

    def test_dimension_validation(self):
        with pytest.raises(DimensionError):
            adversarial.kmm_weights(np.ones((5, 2)), np.ones((5, 3)))
        with pytest.raises(DimensionError):
            adversarial.kmm_weights(np.ones((0, 2)), np.ones((5, 2)))
