"""Central finite-difference gradient checks for layers and networks."""

import numpy as np

from .layers import LAYER_KINDS, LayerSpec, build_layer


def relative_error(analytic, numeric):
    """Norm-wise relative error ``|a - n| / max(|a| + |n|, tiny)``."""
    a = np.ravel(analytic).astype(np.float64)
    n = np.ravel(numeric).astype(np.float64)
    denom = np.linalg.norm(a) + np.linalg.norm(n)
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - n) / denom)


def numeric_grad(f, arr, eps=1e-6):
    """d f() / d arr by central differences, perturbing ``arr`` in place."""
    grad = np.zeros_like(arr, dtype=np.float64)
    flat, gflat = arr.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        up = f()
        flat[i] = old - eps
        down = f()
        flat[i] = old
        gflat[i] = (up - down) / (2 * eps)
    return grad


def check_layer(spec, input_shape, batch=2, seed=0, eps=1e-6):
    """Compare analytic and numeric gradients of one layer under a random linear loss.

    Returns ``{name: relative error}`` for the input (``"x"``) and each weight.
    """
    rng = np.random.default_rng(seed)
    layer = build_layer(spec, input_shape)
    layer.init(rng, np.float64)
    for arr in layer.params.values():
        arr[...] = rng.standard_normal(arr.shape)
    x = rng.standard_normal((batch,) + tuple(input_shape))
    proj = rng.standard_normal((batch,) + layer.output_shape)

    def loss():
        out = layer.forward(x, training=True, rng=np.random.default_rng(seed + 1))
        layer._cache = None
        return float(np.sum(out * proj))

    layer.forward(x, training=True, rng=np.random.default_rng(seed + 1))
    dx = layer.backward(proj)
    errors = {"x": relative_error(dx, numeric_grad(loss, x, eps))}
    for name, arr in layer.params.items():
        errors[name] = relative_error(layer.grads[name], numeric_grad(loss, arr, eps))
    return errors


def check_network(net, x, targets, loss_fn, seed=0, eps=1e-6):
    """Relative error of every weight gradient of a :class:`Sequential` under ``loss_fn``."""
    def loss():
        out = net.forward(x, training=True, rng=np.random.default_rng(seed))
        for layer in net.layers:
            layer._cache = None
        return loss_fn(out, targets)[0]

    out = net.forward(x, training=True, rng=np.random.default_rng(seed))
    grads = net.backward(loss_fn(out, targets)[1])
    return {name: relative_error(g, numeric_grad(loss, arr, eps))
            for (name, arr), g in zip(net.parameters(), grads)}


def random_layer_config(kind, rng):
    """A small random ``(spec, input_shape)`` pair for ``kind``."""
    if kind not in LAYER_KINDS:
        raise ValueError(f"unknown layer kind {kind!r}")
    act = [None, "relu", "sigmoid"][rng.integers(3)]
    if kind == "Conv2D":
        k = int(rng.choice([1, 3]))
        pad = "same" if rng.random() < 0.5 else "valid"
        shape = (int(rng.integers(k, 6)), int(rng.integers(k, 7)), int(rng.integers(1, 4)))
        return LayerSpec("Conv2D", filters=int(rng.integers(1, 4)), kernel=k, activation=act,
                         padding=pad), shape
    if kind == "MaxPool":
        pool = int(rng.choice([2, 3]))
        shape = (int(rng.integers(pool, 8)), int(rng.integers(pool, 8)), int(rng.integers(1, 4)))
        return LayerSpec("MaxPool", pool=pool), shape
    if kind == "Flatten":
        return LayerSpec("Flatten"), (int(rng.integers(1, 4)), int(rng.integers(1, 5)),
                                      int(rng.integers(1, 3)))
    if kind == "Dense":
        return LayerSpec("Dense", units=int(rng.integers(1, 6)), activation=act), \
            (int(rng.integers(1, 8)),)
    return LayerSpec("Dropout", rate=float(rng.uniform(0.0, 0.7))), (int(rng.integers(1, 10)),)
