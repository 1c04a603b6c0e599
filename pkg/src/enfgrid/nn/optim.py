from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AdamConfig:
    """Adam hyperparameters; defaults are the tuned CNN optimum."""

    learning_rate: float = 7.2e-4
    beta1: float = 0.98
    beta2: float = 0.99
    epsilon: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("betas must lie in (0, 1)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


def init_state(weights):
    return {"m": [np.zeros_like(w) for w in weights], "v": [np.zeros_like(w) for w in weights]}


def _update(weights, grads, state, config, t):
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for w, g, m, v in zip(weights, grads, state["m"], state["v"]):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        w -= (config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.epsilon)).astype(w.dtype)


def adam_step(weights, grads, state, config, t):
    """One bias-corrected Adam update. Pure: returns ``(new_weights, new_state)``."""
    if t < 1:
        raise ValueError("Adam step counter starts at 1")
    if len(weights) != len(grads):
        raise ValueError(f"{len(weights)} weight arrays but {len(grads)} gradients")
    for w, g in zip(weights, grads):
        if np.shape(w) != np.shape(g):
            raise ValueError(f"gradient shape {np.shape(g)} does not match weight shape {np.shape(w)}")
    new_w = [np.array(w, copy=True) for w in weights]
    new_state = {"m": [m.copy() for m in state["m"]], "v": [v.copy() for v in state["v"]]}
    _update(new_w, grads, new_state, config, t)
    return new_w, new_state


class Adam:
    """In-place Adam over a fixed list of weight arrays."""

    def __init__(self, weights, config=AdamConfig()):
        self.weights = weights
        self.config = config
        self.state = init_state(weights)
        self.t = 0

    def step(self, grads):
        self.t += 1
        _update(self.weights, grads, self.state, self.config, self.t)
