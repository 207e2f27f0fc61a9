import numpy as np
import pytest

from eegspeech import nn
from eegspeech.errors import NumericError


class TestSynthesisModel:
    def test_maps_t_to_15t(self, rng):
        model = nn.build_synthesis_model(seed=0, filters=(8, 4))
        for _ in range(5):
            t = int(rng.integers(2, 40))
            x = rng.standard_normal((1, t, 31)).astype(np.float32)
            assert model.predict(x).shape == (1, 15 * t, 1)
        assert model.output_length(7) == 105

    def test_wrong_input_dim_rejected(self, rng):
        model = nn.build_synthesis_model(seed=0, filters=(8, 4))
        with pytest.raises(ValueError, match="31"):
            model.predict(rng.standard_normal((1, 5, 30)).astype(np.float32))

    def test_full_scale_parameter_shapes(self):
        model = nn.build_synthesis_model(seed=0)
        tcn1, _, drop, tcn2, _, dense = model.layers
        assert tcn1.w.shape == (3 * 31, 256)
        assert tcn1.proj.shape == (31, 256)
        assert tcn2.w.shape == (3 * 256, 32)
        assert tcn2.proj.shape == (256, 32)
        assert dense.w.shape == (32, 1)
        assert drop.rate == 0.2

    def test_param_count_matches_closed_form(self):
        for filters in [(256, 32), (8, 4), (16, 16)]:
            model = nn.build_synthesis_model(seed=0, filters=filters)
            assert model.param_count() == nn.synthesis_param_count(31, filters, 3)

    def test_causality_probe(self, rng):
        model = nn.build_synthesis_model(seed=1, filters=(6, 3))
        x = rng.standard_normal((1, 30, 31)).astype(np.float32)
        base = model.predict(x)
        t_hit = 14
        x2 = x.copy()
        x2[0, t_hit, :] += 1.0
        bumped = model.predict(x2)
        assert np.array_equal(bumped[0, : 15 * t_hit], base[0, : 15 * t_hit])
        assert not np.array_equal(bumped[0, 15 * t_hit :], base[0, 15 * t_hit :])

    def test_alternate_head_order_keeps_shape(self, rng):
        model = nn.build_synthesis_model(seed=0, filters=(8, 4), dense_before_final_upsample=True)
        x = rng.standard_normal((1, 11, 31)).astype(np.float32)
        assert model.predict(x).shape == (1, 165, 1)


class TestRegressionModel:
    def test_all_16_dims_buildable(self, rng):
        x = rng.standard_normal((1, 9, 30)).astype(np.float32)
        for dim in (12, 12, 12, 128, 1, 1, 1, 7, 1, 1, 2, 6, 1, 384, 1, 1):
            model = nn.build_regression_model(out_dim=dim, seed=0, hidden=16)
            assert model.predict(x).shape == (1, 9, dim)

    def test_frame_count_preserved(self, rng):
        model = nn.build_regression_model(out_dim=128, seed=0, hidden=16)
        x = rng.standard_normal((2, 33, 30)).astype(np.float32)
        assert model.predict(x).shape == (2, 33, 128)
        assert model.output_length(33) == 33

    def test_full_scale_shapes(self):
        model = nn.build_regression_model(out_dim=384, seed=0)
        gru, drop, dense = model.layers
        assert gru.w_z.shape == (30, 128)
        assert gru.u_h.shape == (128, 128)
        assert dense.w.shape == (128, 384)
        assert drop.rate == 0.2

    def test_invalid_out_dim_rejected(self):
        with pytest.raises(ValueError, match="out_dim"):
            nn.build_regression_model(out_dim=13, seed=0)


class TestPredictInference:
    def test_dropout_inactive_at_inference(self, rng):
        model = nn.build_synthesis_model(seed=0, filters=(8, 4), dropout_rate=0.5)
        x = rng.standard_normal((1, 10, 31)).astype(np.float32)
        a = model.predict(x)
        b = model.predict(x)
        assert np.array_equal(a, b)

    def test_training_mode_differs_with_dropout(self, rng):
        model = nn.build_synthesis_model(seed=0, filters=(8, 4), dropout_rate=0.5)
        x = rng.standard_normal((1, 10, 31)).astype(np.float32)
        a = model.forward(x, training=True)
        b = model.forward(x, training=True)
        assert not np.array_equal(a, b)


class TestTrain:
    def _single_pair(self, rng):
        x = rng.standard_normal((20, 31))
        y = rng.standard_normal((300, 1)) * 0.1
        return [(x, y)]

    def test_one_epoch_decreases_loss(self, rng):
        pairs = self._single_pair(rng)
        model = nn.build_synthesis_model(seed=2, filters=(8, 4))
        history = nn.train(model, pairs, nn.TrainConfig(epochs=2, batch_size=1, learning_rate=1e-3, seed=0))
        assert history.epochs[1]["train_loss"] < history.epochs[0]["train_loss"]

    def test_same_seed_identical_curves_and_params(self, rng):
        pairs = self._single_pair(rng)
        runs = []
        for _ in range(2):
            model = nn.build_synthesis_model(seed=2, filters=(8, 4))
            history = nn.train(model, pairs, nn.TrainConfig(epochs=3, batch_size=1, seed=5))
            runs.append((history, [p.copy() for p in model.params()]))
        assert [e["train_loss"] for e in runs[0][0].epochs] == [e["train_loss"] for e in runs[1][0].epochs]
        for p1, p2 in zip(runs[0][1], runs[1][1]):
            assert np.array_equal(p1, p2)

    def test_validation_loss_recorded(self, rng):
        pairs = self._single_pair(rng)
        model = nn.build_regression_model(out_dim=2, seed=0, hidden=8)
        rpairs = [(rng.standard_normal((10, 30)), rng.standard_normal((10, 2)))]
        history = nn.train(model, rpairs, nn.TrainConfig(epochs=2, batch_size=4, seed=0), val_pairs=rpairs)
        assert all(e["val_loss"] is not None for e in history.epochs)

    def test_variable_lengths_padded_and_masked(self, rng):
        pairs = [
            (rng.standard_normal((8, 30)), rng.standard_normal((8, 2))),
            (rng.standard_normal((12, 30)), rng.standard_normal((12, 2))),
            (rng.standard_normal((5, 30)), rng.standard_normal((5, 2))),
        ]
        model = nn.build_regression_model(out_dim=2, seed=0, hidden=8)
        history = nn.train(model, pairs, nn.TrainConfig(epochs=2, batch_size=2, seed=1))
        assert len(history.epochs) == 2
        assert np.isfinite(history.final_train_loss())

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_raises_numeric_error(self, rng):
        pairs = [(rng.standard_normal((10, 31)) * 100, rng.standard_normal((150, 1)) * 100)]
        model = nn.build_synthesis_model(seed=0, filters=(8, 4))
        with pytest.raises(NumericError, match="diverged"):
            nn.train(model, pairs, nn.TrainConfig(epochs=200, batch_size=1, learning_rate=1e12, seed=0))

    def test_empty_training_set_rejected(self):
        model = nn.build_regression_model(out_dim=1, seed=0, hidden=4)
        with pytest.raises(ValueError, match="empty"):
            nn.train(model, [], nn.TrainConfig(epochs=1))

    def test_history_csv(self, tmp_path, rng):
        model = nn.build_regression_model(out_dim=1, seed=0, hidden=4)
        pairs = [(rng.standard_normal((6, 30)), rng.standard_normal((6, 1)))]
        history = nn.train(model, pairs, nn.TrainConfig(epochs=3, batch_size=1, seed=0))
        path = tmp_path / "history.csv"
        history.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "epoch,train_loss,val_loss"
        assert len(lines) == 4


class TestCheckpoint:
    def test_synthesis_round_trip(self, tmp_path, rng):
        model = nn.build_synthesis_model(seed=3, filters=(8, 4))
        pairs = [(rng.standard_normal((10, 31)), rng.standard_normal((150, 1)))]
        nn.train(model, pairs, nn.TrainConfig(epochs=2, batch_size=1, seed=0))
        path = tmp_path / "synth.ckpt"
        model.save(path)
        back = nn.load_model(path)
        x = rng.standard_normal((1, 12, 31)).astype(np.float32)
        assert np.array_equal(model.predict(x), back.predict(x))

    def test_regression_round_trip(self, tmp_path, rng):
        model = nn.build_regression_model(out_dim=7, seed=3, hidden=8)
        path = tmp_path / "regress.ckpt"
        model.save(path)
        back = nn.load_model(path)
        x = rng.standard_normal((1, 5, 30)).astype(np.float32)
        assert np.array_equal(model.predict(x), back.predict(x))

    def test_checkpoint_bytes_deterministic(self, tmp_path):
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        nn.build_synthesis_model(seed=4, filters=(8, 4)).save(a)
        nn.build_synthesis_model(seed=4, filters=(8, 4)).save(b)
        assert a.read_bytes() == b.read_bytes()


class TestFiniteDiffCheck:
    def test_tiny_synthesis_model(self, rng):
        model = nn.build_synthesis_model(seed=1, filters=(4, 2), dtype=np.float64)
        x = rng.standard_normal((2, 6, 31))
        y = rng.standard_normal((2, 90, 1))
        assert nn.finite_diff_grad_check(model, x, y, seed=0) < 1e-4

    def test_tiny_regression_model(self, rng):
        model = nn.build_regression_model(out_dim=6, seed=1, hidden=8, dtype=np.float64)
        x = rng.standard_normal((2, 7, 30))
        y = rng.standard_normal((2, 7, 6))
        assert nn.finite_diff_grad_check(model, x, y, seed=0) < 1e-4

    def test_linear_only_model_high_precision(self, rng):
        dense = nn.TimeDistributedDense(5, 3, rng=np.random.default_rng(2), dtype=np.float64)
        model = nn.Model([dense], {"out_dim": 3}, 5)
        x = rng.standard_normal((2, 4, 5))
        y = rng.standard_normal((2, 4, 3))
        assert nn.finite_diff_grad_check(model, x, y, seed=0) < 1e-7
