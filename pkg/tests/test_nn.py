import numpy as np
import pytest

from enfgrid.nn import AdamConfig, Sequential, adam_step, conv2d, dense, dropout, flatten, maxpool
from enfgrid.nn.gradcheck import check_layer, check_network, random_layer_config
from enfgrid.nn.layers import LAYER_KINDS, LayerSpec, ShapeError
from enfgrid.nn.optim import init_state
from enfgrid.nn.training import bce_with_logits, fit_network


@pytest.mark.parametrize("kind", LAYER_KINDS)
def test_layer_gradients(kind):
    rng = np.random.default_rng(hash(kind) % 2 ** 32)
    for i in range(10):
        spec, shape = random_layer_config(kind, rng)
        errors = check_layer(spec, shape, seed=i)
        assert max(errors.values()) <= 1e-4, (spec, shape, errors)


def test_maxpool_ties_route_to_first():
    layer = Sequential([maxpool(2)], (2, 2, 1)).layers[0]
    x = np.ones((1, 2, 2, 1))
    layer.forward(x, training=True)
    dx = layer.backward(np.ones((1, 1, 1, 1)))
    assert dx[0, :, :, 0].tolist() == [[1.0, 0.0], [0.0, 0.0]]


def test_small_cnn_gradients():
    specs = [conv2d(2), maxpool(2), conv2d(3), maxpool(2), flatten(), dense(4), dropout(0.3),
             dense(1, None)]
    net = Sequential(specs, (5, 9, 1), seed=3, zero_last=False)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((3, 5, 9, 1))
    y = np.array([[0.0], [1.0], [1.0]])
    errors = check_network(net, x, y, bce_with_logits, seed=7)
    assert max(errors.values()) <= 1e-4, errors


def test_untrained_network_outputs_half():
    net = Sequential([flatten(), dense(5), dense(1, None)], (3, 4, 1), seed=0)
    p = net.predict_proba(np.random.default_rng(0).standard_normal((6, 3, 4, 1)))
    assert np.allclose(p, 0.5)


def test_shape_error_names_layer():
    with pytest.raises(ShapeError, match="layer 0"):
        Sequential([dense(3)], (2, 2, 1))
    net = Sequential([flatten(), dense(1, None)], (2, 3, 1))
    with pytest.raises(ShapeError, match="expected input shape"):
        net.forward(np.zeros((1, 3, 3, 1)))


def test_nan_input_rejected():
    net = Sequential([dense(1, None)], (2,))
    with pytest.raises(ValueError, match="NaN"):
        net.forward(np.array([[np.nan, 0.0]]))


def test_backward_without_forward():
    net = Sequential([dense(1, None)], (2,))
    with pytest.raises(RuntimeError, match="without a training-mode forward"):
        net.backward(np.zeros((1, 1)))


def test_adam_step_by_hand():
    cfg = AdamConfig(learning_rate=0.1, beta1=0.9, beta2=0.99, epsilon=1e-8)
    w = [np.array([1.0, -2.0])]
    g = [np.array([0.5, -0.25])]
    state = init_state(w)
    new, state = adam_step(w, g, state, cfg, t=1)
    # first step: m_hat = g and v_hat = g^2, so the update is lr * sign(g)
    m = 0.1 * g[0]
    v = 0.01 * g[0] ** 2
    m_hat, v_hat = m / (1 - 0.9), v / (1 - 0.99)
    expected = w[0] - 0.1 * m_hat / (np.sqrt(v_hat) + 1e-8)
    assert np.allclose(new[0], expected, rtol=0, atol=1e-12)
    assert np.allclose(w[0], [1.0, -2.0])  # input left untouched


def test_adam_validation():
    with pytest.raises(ValueError):
        AdamConfig(learning_rate=-1)
    with pytest.raises(ValueError):
        AdamConfig(beta1=1.0)
    with pytest.raises(ValueError):
        adam_step([np.zeros(2)], [np.zeros(3)], init_state([np.zeros(2)]), AdamConfig(), t=1)


def test_adam_defaults_are_tuned_point():
    cfg = AdamConfig()
    assert (cfg.learning_rate, cfg.beta1, cfg.beta2) == (7.2e-4, 0.98, 0.99)


def test_bce_matches_direct_formula():
    z = np.array([[-3.0], [0.0], [2.5]])
    y = np.array([[0.0], [1.0], [1.0]])
    p = 1 / (1 + np.exp(-z))
    direct = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
    loss, grad = bce_with_logits(z, y)
    assert loss == pytest.approx(direct)
    assert np.allclose(grad, (p - y) / 3)


def test_fit_network_learns_separable_problem():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((64, 4))
    y = (X[:, 0] + X[:, 1] > 0).astype(float)
    net = Sequential([dense(8), dense(1, None)], (4,), seed=1)
    history = fit_network(net, X, y, AdamConfig(1e-2, 0.9, 0.999), max_epochs=200, seed=2)
    assert history[-1] < history[0]
    acc = np.mean((net.predict_proba(X)[:, 0] >= 0.5) == y)
    assert acc >= 0.95


def test_fit_network_deterministic():
    rng = np.random.default_rng(0)
    X, y = rng.standard_normal((20, 3)), rng.integers(0, 2, 20)
    runs = []
    for _ in range(2):
        net = Sequential([dense(4), dropout(0.5), dense(1, None)], (3,), seed=5)
        fit_network(net, X, y, max_epochs=5, seed=9)
        runs.append(net.get_weights())
    assert all(np.array_equal(a, b) for a, b in zip(*runs))


def test_layerspec_roundtrip_and_validation():
    spec = conv2d(8, kernel=3, padding="valid")
    assert LayerSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(ValueError):
        LayerSpec("Conv2D")
    with pytest.raises(ValueError):
        LayerSpec("Dropout", rate=1.0)
