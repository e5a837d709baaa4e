"""MLP regressor, Adam training, gradient checks, baseline predictor, PE."""

import numpy as np
import pytest

from fleetsim.prediction import (DatasetRow, DemandPredictor, FeatureEncoder,
                                 HistoricalAveragePredictor, MissingHistoryWarning,
                                 MlpRegressor, gradient_check, load_checkpoint,
                                 load_dataset, percent_error, save_checkpoint,
                                 save_dataset, split_by_date)


def test_forward_zero_network():
    model = MlpRegressor(hidden=(4, 4)).initialize(3)
    for w in model.weights_:
        w[:] = 0.0
    assert model.forward([1.0, -2.0, 0.5]) == 0.0


def test_forward_hand_computed():
    model = MlpRegressor(hidden=(1,)).initialize(1)
    model.weights_[0][:] = [[2.0]]
    model.biases_[0][:] = [0.5]
    model.weights_[1][:] = [[3.0]]
    model.biases_[1][:] = [-1.0]
    # relu(2*1 + 0.5) * 3 - 1 = 6.5
    assert model.forward([1.0]) == pytest.approx(6.5)
    # relu(2*(-1) + 0.5) = 0 -> output -1 -> clamped to 0
    assert model.forward([-1.0]) == 0.0


def test_forward_never_negative():
    rng = np.random.default_rng(0)
    model = MlpRegressor(hidden=(8, 8), seed=1).initialize(5)
    preds = model.predict(rng.normal(size=(200, 5)))
    assert (preds >= 0).all()


def test_forward_dimension_mismatch():
    model = MlpRegressor(hidden=(4,)).initialize(3)
    with pytest.raises(ValueError):
        model.forward([1.0, 2.0])
    with pytest.raises(ValueError):
        model.predict(np.zeros((2, 7)))


def test_train_constant_target_to_zero_loss():
    x = np.tile(np.array([1.0, 2.0, -1.0]), (32, 1))
    y = np.full(32, 3.0)
    model = MlpRegressor(hidden=(8,), learning_rate=1e-2, epochs=500,
                         batch_size=16, seed=0).fit(x, y)
    assert model.loss_curve_[-1] < 1e-4


def test_train_linear_target():
    rng = np.random.default_rng(7)
    sigma = 0.01
    x = rng.normal(size=(256, 6))
    w = rng.normal(size=6)
    y = x @ w + 2.0 + rng.normal(0, sigma, size=256)
    y = y - y.min() + 1.0  # keep targets positive, like counts
    model = MlpRegressor(hidden=(16, 16), learning_rate=1e-2, epochs=800,
                         batch_size=64, seed=3).fit(x, y)
    assert model.loss_curve_[-1] <= 10 * sigma ** 2


def test_train_seeded_determinism():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(64, 4))
    y = np.abs(rng.normal(size=64))
    m1 = MlpRegressor(hidden=(8,), epochs=20, learning_rate=1e-3, seed=9).fit(x, y)
    m2 = MlpRegressor(hidden=(8,), epochs=20, learning_rate=1e-3, seed=9).fit(x, y)
    assert np.array_equal(m1.get_flat_params(), m2.get_flat_params())
    assert m1.loss_curve_ == m2.loss_curve_


def test_train_loss_mostly_decreasing():
    rng = np.random.default_rng(21)
    x = rng.normal(size=(128, 4))
    y = np.abs(x @ rng.normal(size=4)) + 1.0
    model = MlpRegressor(hidden=(8, 8), learning_rate=1e-3, epochs=100,
                         seed=2).fit(x, y)
    curve = model.loss_curve_
    drops = sum(1 for a, b in zip(curve, curve[1:]) if b <= a)
    assert drops >= 0.9 * (len(curve) - 1)


def test_train_aborts_on_nonfinite_loss():
    x = np.full((8, 2), 1e200)
    y = np.zeros(8)
    model = MlpRegressor(hidden=(4,), learning_rate=1e-2, epochs=5, seed=0)
    with pytest.raises(RuntimeError, match="non-finite"):
        model.fit(x, y)


def test_gradient_check_two_parameter_net():
    model = MlpRegressor(hidden=()).initialize(1)  # scalar affine model
    model.weights_[0][:] = [[1.3]]
    model.biases_[0][:] = [0.2]
    err = gradient_check(model, [[0.7]], [2.0])
    assert err < 1e-4


def test_gradient_zero_at_origin():
    model = MlpRegressor(hidden=(3,)).initialize(2)
    for w in model.weights_:
        w[:] = 0.0
    _, grads = model._loss_and_grads(np.zeros((4, 2)), np.zeros(4))
    assert all(np.allclose(gr, 0.0) for gr in grads)


def test_gradient_check_random_small_nets():
    rng = np.random.default_rng(17)
    for seed in range(20):
        model = MlpRegressor(hidden=(12, 12), seed=seed).initialize(8, seed=seed)
        assert model.n_parameters <= 1000
        x = rng.normal(size=(5, 8))
        y = np.abs(rng.normal(size=5))
        assert gradient_check(model, x, y) < 1e-3


def test_historical_average_modes():
    records = [("2022-03-01", 17, 2, 30.0), ("2022-03-02", 17, 2, 50.0),
               ("2022-03-02", 16, 2, 12.0)]
    hourly = HistoricalAveragePredictor().fit(records)
    assert hourly.predict(2, 17) == pytest.approx(40.0)
    single = HistoricalAveragePredictor().fit([("2022-03-01", 17, 5, 40.0)])
    assert single.predict(5, 17) == 40.0
    prev = HistoricalAveragePredictor(mode="previous_hour").fit(records)
    assert prev.predict(2, 17, date="2022-03-02") == 12.0
    with pytest.warns(MissingHistoryWarning):
        assert hourly.predict(9, 3) == 0.0
    with pytest.warns(MissingHistoryWarning):
        assert prev.predict(2, 10, date="2022-03-02") == 0.0


def test_percent_error_cases():
    assert percent_error([10.0, 5.0], [10.0, 5.0]) == (0.0, 0)
    assert percent_error([20.0, 10.0], [10.0, 5.0]) == (1.0, 0)
    pe, excluded = percent_error([12.0, 15.0, 5.0], [10.0, 20.0, 5.0])
    assert pe == pytest.approx((0.2 + 0.25 + 0.0) / 3)
    assert excluded == 0
    pe, excluded = percent_error([9.0, 3.0], [10.0, 0.0])
    assert pe == pytest.approx(0.1)
    assert excluded == 1
    pe, excluded = percent_error([1.0], [0.0])
    assert np.isnan(pe) and excluded == 1


def test_feature_encoder_layout_and_standardization():
    rows = [DatasetRow("2022-01-03", 17, 0, 10.0, (10.0, 0.0)),   # a Monday
            DatasetRow("2022-06-11", 5, 1, 3.0, (30.0, 2.0))]
    enc = FeatureEncoder().fit(rows)
    x = enc.transform_row(rows[0])
    assert x.shape == (7 + 12 + 24 + 2,)
    assert x[0] == 1.0 and x[:7].sum() == 1.0          # Monday one-hot
    assert x[7 + 0] == 1.0 and x[7:19].sum() == 1.0    # January one-hot
    assert x[19 + 17] == 1.0 and x[19:43].sum() == 1.0
    both = enc.transform(rows)
    assert np.allclose(both[:, 43:].mean(axis=0), 0.0)


def test_split_by_date_fraction():
    rows = [DatasetRow(f"2022-01-{d:02d}", 0, 0, 1.0, (0.0, 0.0))
            for d in range(1, 13)]
    train, test = split_by_date(rows)
    assert {r.date for r in train} == {f"2022-01-{d:02d}" for d in range(1, 9)}
    assert len(test) == 4


def test_dataset_roundtrip(tmp_path):
    rows = [DatasetRow("2022-02-01", 8, 1, 14.0, (3.5, 0.0)),
            DatasetRow("2022-02-02", 9, 0, 7.0, (-1.25, 0.5))]
    path = tmp_path / "dataset.csv"
    save_dataset(rows, path)
    loaded = load_dataset(path)
    assert loaded == rows


def test_predictor_routing_and_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    rows = [DatasetRow("2022-01-03", h, s, float(10 + h), (5.0, 0.1))
            for h in range(4) for s in (0, 1)]
    enc = FeatureEncoder().fit(rows)
    base = MlpRegressor(hidden=(6,), epochs=5, learning_rate=1e-3, seed=0)
    base.fit(enc.transform(rows), np.array([r.count for r in rows]))
    feats = {("2022-01-03", 1): rng.normal(size=4)}
    event = MlpRegressor(hidden=(6,), epochs=5, learning_rate=1e-3, seed=1)
    xe = np.array([np.concatenate([enc.transform_row(r), feats[("2022-01-03", 1)]])
                   for r in rows if r.sector == 1])
    event.fit(xe, np.array([r.count for r in rows if r.sector == 1]))
    predictor = DemandPredictor(base, event, enc, feats)

    assert predictor.network_for("2022-01-03", 1) == "enhanced"
    assert predictor.network_for("2022-01-03", 0) == "base"
    assert predictor.network_for("2022-01-04", 1) == "base"

    path = tmp_path / "model.npz"
    save_checkpoint(path, predictor, {"epochs": 5})
    loaded, header = load_checkpoint(path, event_features=feats)
    assert header["config_hash"]
    assert header["base_dims"] == [enc.dim, 6, 1]
    for row in rows:
        assert loaded.predict_row(row) == pytest.approx(predictor.predict_row(row))
