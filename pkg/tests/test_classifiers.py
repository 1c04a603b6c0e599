import numpy as np
import pytest

from enfgrid.classifiers import (FAMILIES, CNNModel, GaussianNBModel, LogisticRegressionModel,
                                 MLPModel, RandomForestModel, cnn_layers, make_classifier,
                                 predict_proba, train_cnn)
from enfgrid.labels import RecType
from enfgrid.modelio import load_model, save_model
from enfgrid.nn import Sequential
from enfgrid.preprocess import SpectrogramFocuser
from enfgrid.signal_io import segment
from enfgrid.synthgrid import synth_recording


def _blobs(rng, n=200, shift=3.0, dim=2):
    X = np.vstack([rng.standard_normal((n, dim)) - shift, rng.standard_normal((n, dim)) + shift])
    y = np.repeat([0, 1], n)
    return X, y


def _xor(rng, n=100):
    centres = np.array([[-2, -2], [2, 2], [-2, 2], [2, -2]])
    X = np.vstack([c + 0.4 * rng.standard_normal((n, 2)) for c in centres])
    return X, np.repeat([0, 0, 1, 1], n)


@pytest.mark.parametrize("family", FAMILIES)
def test_each_family_beats_chance(family, rng):
    if family == "CNN":
        X, y = _blobs(rng, n=20, dim=9 * 16)
        X = X.reshape(-1, 9, 16)
        model = make_classifier(family, random_state=0, max_epochs=20, conv_filters=(8, 8, 8),
                                dense_units=16)
    else:
        X, y = _blobs(rng, n=100)
        model = make_classifier(family, random_state=0)
    model.fit(X, y)
    assert np.mean(model.predict(X) == y) > 0.6


@pytest.mark.parametrize("family", FAMILIES)
def test_single_class_rejected(family):
    X = np.zeros((4, 2, 3))
    with pytest.raises(ValueError, match="two classes"):
        make_classifier(family, random_state=0).fit(X, np.ones(4))


def test_logreg_separable_and_prior(rng):
    X, y = _blobs(rng, shift=4.0)
    model = LogisticRegressionModel().fit(X, y)
    assert np.mean(model.predict(X) == y) == 1.0
    flat = np.ones((40, 3))
    yy = np.r_[np.ones(10), np.zeros(30)]
    p = LogisticRegressionModel().fit(flat, yy).positive_proba(flat)
    assert np.allclose(p, 0.25, atol=1e-3)
    assert "C" not in LogisticRegressionModel().get_params()


def test_naive_bayes(rng):
    X, y = _blobs(rng, n=500, dim=1)
    model = GaussianNBModel().fit(X, y)
    assert np.mean(model.predict(X) == y) > 0.99
    # symmetric blobs put the boundary at the midpoint
    grid = np.linspace(-1, 1, 2001)[:, None]
    boundary = grid[np.argmin(np.abs(model.positive_proba(grid) - 0.5)), 0]
    assert abs(boundary) < 0.1
    const = np.column_stack([X[:, 0], np.ones(len(X))])
    p = GaussianNBModel().fit(const, y).positive_proba(const)
    assert np.all(np.isfinite(p))


def test_random_forest(rng):
    X, y = _xor(rng)
    model = RandomForestModel(random_state=3).fit(X, y)
    assert np.mean(model.predict(X) == y) > 0.95
    p = model.positive_proba(X)
    assert np.allclose(p * 100, np.round(p * 100))
    again = RandomForestModel(random_state=3).fit(X, y)
    assert np.array_equal(again.positive_proba(X), p)
    assert model.n_estimators == 100


def test_mlp(rng):
    X, y = _blobs(rng, n=100)
    model = MLPModel(random_state=1).fit(X, y)
    assert model.loss_curve_[-1] < 0.1
    assert [l.spec.units for l in model.network_.layers] == [100, 50, 1]
    twin = MLPModel(random_state=1).fit(X, y)
    assert all(np.array_equal(a, b) for a, b in zip(model.network_.get_weights(),
                                                     twin.network_.get_weights()))


def test_cnn_architecture():
    net = Sequential(cnn_layers(), (9, 299, 1))
    summary = net.summary()
    channels = [shape[-1] for kind, shape, _ in summary if kind == "Conv2D"]
    dense = [shape[0] for kind, shape, _ in summary if kind == "Dense"]
    assert channels == [32, 64, 128] and dense == [101, 1]
    assert net.predict_proba(np.random.default_rng(0).random((2, 9, 299, 1))) == pytest.approx(0.5)
    model = CNNModel()
    assert (model.learning_rate, model.beta1, model.beta2) == (7.2e-4, 0.98, 0.99)


def test_cnn_dropout_zero_identical_outputs(rng):
    net = Sequential(cnn_layers(conv_filters=(2, 2, 2), dense_units=4, dropout_rate=0.0),
                     (9, 20, 1), seed=0, zero_last=False)
    x = rng.random((3, 9, 20, 1))
    assert np.array_equal(net.forward(x, training=True, rng=rng), net.forward(x))


def test_cnn_shape_mismatch(rng):
    model = CNNModel(conv_filters=(2, 2, 2), dense_units=4, max_epochs=1).fit(
        rng.random((4, 9, 20)), [0, 1, 0, 1])
    with pytest.raises(ValueError):
        model.positive_proba(rng.random((2, 9, 21)))


@pytest.mark.slow
def test_cnn_two_grid_task(grid_params):
    groups = []
    for label in "AC":
        rec = synth_recording(grid_params[label], 3600, RecType.AUDIO, seed=ord(label))
        groups.append(np.stack([s.samples for s in segment(rec)]))
    X = np.concatenate(groups)
    y = np.repeat([0, 1], [len(g) for g in groups])
    grids = SpectrogramFocuser(nominal=60).fit(X).transform(X)
    val = np.r_[np.arange(0, 3), np.arange(12, 15)]
    train = np.setdiff1d(np.arange(len(y)), val)
    model = train_cnn(grids[train], y[train], seed=0, max_epochs=40, batch_size=8)
    assert np.mean(model.predict(grids[val]) == y[val]) >= 0.95


def test_predict_proba_helper_and_purity(rng):
    X, y = _blobs(rng, n=50)
    for family in ("NaiveBayes", "LogReg", "RandomForest", "MLP"):
        model = make_classifier(family, random_state=0).fit(X, y)
        centroid = X[y == 1].mean(axis=0)
        assert predict_proba(model, centroid) > 0.5
        assert np.array_equal(predict_proba(model, X), predict_proba(model, X))
        with pytest.raises(ValueError):
            model.positive_proba(np.zeros((2, 3)))


@pytest.mark.parametrize("family", FAMILIES)
def test_serialisation_roundtrip(tmp_path, family, rng):
    X, y = _blobs(rng, n=10, dim=9 * 16)
    X = X.reshape(-1, 9, 16)
    params = {"max_epochs": 3} if family in ("MLP", "CNN") else {}
    if family == "CNN":
        params.update(conv_filters=(2, 2, 2), dense_units=4)
    model = make_classifier(family, random_state=0, **params).fit(X, y)
    save_model(model, tmp_path / "m.enfmdl")
    save_model(model, tmp_path / "n.enfmdl")
    assert (tmp_path / "m.enfmdl").read_bytes() == (tmp_path / "n.enfmdl").read_bytes()
    back = load_model(tmp_path / "m.enfmdl")
    assert type(back) is type(model)
    assert np.array_equal(back.positive_proba(X), model.positive_proba(X))


def test_load_rejects_bad_file(tmp_path):
    (tmp_path / "x.enfmdl").write_bytes(b"NOTMODEL" + bytes(8))
    with pytest.raises(OSError):
        load_model(tmp_path / "x.enfmdl")
