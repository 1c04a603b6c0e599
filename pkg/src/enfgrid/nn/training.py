"""Loss and the mini-batch training loop shared by the MLP, CNN and fusion network."""

import logging

import numpy as np

from .layers import _sigmoid
from .optim import Adam, AdamConfig

logger = logging.getLogger(__name__)


def bce_with_logits(logits, targets):
    """Mean binary cross-entropy over all entries, and its gradient w.r.t. the logits."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64).reshape(z.shape)
    loss = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    grad = (_sigmoid(z) - y) / z.size
    return float(loss.mean()), grad


def fit_network(net, X, Y, adam=AdamConfig(), batch_size=32, max_epochs=100, patience=10,
                tol=1e-4, seed=0, X_val=None, Y_val=None):
    """Train ``net`` with Adam on binary cross-entropy.

    Stops after ``patience`` epochs without an improvement larger than
    ``tol`` in the monitored loss: validation loss when ``X_val`` is given,
    mean training loss otherwise. Returns the per-epoch monitored losses.
    """
    X = np.asarray(X, dtype=net.dtype)
    Y = np.asarray(Y, dtype=np.float64).reshape((len(X),) + net.output_shape)
    rng = np.random.default_rng(seed)
    weights = [arr for _, arr in net.parameters()]
    opt = Adam(weights, adam)
    history = []
    best, stale = np.inf, 0
    for epoch in range(max_epochs):
        order = rng.permutation(len(X))
        total = 0.0
        for start in range(0, len(X), batch_size):
            idx = order[start:start + batch_size]
            logits = net.forward(X[idx], training=True, rng=rng)
            loss, grad = bce_with_logits(logits, Y[idx])
            opt.step(net.backward(grad))
            total += loss * len(idx)
        monitored = total / len(X)
        if X_val is not None:
            monitored, _ = bce_with_logits(net.logits(X_val), Y_val)
        history.append(monitored)
        if monitored < best - tol:
            best, stale = monitored, 0
        else:
            stale += 1
            if stale >= patience:
                logger.debug("early stop at epoch %d (loss %.5f)", epoch + 1, monitored)
                break
    return history
