import numpy as np

from .layers import Conv2D, ShapeError, _sigmoid, build_layer


class Sequential:
    """A stack of layers producing logits.

    The last trainable layer starts at zero so an untrained network emits
    zero logits, i.e. probability 0.5 everywhere.
    """

    def __init__(self, specs, input_shape, seed=0, dtype=np.float64, zero_last=True):
        self.specs = list(specs)
        self.input_shape = tuple(int(s) for s in input_shape)
        self.dtype = np.dtype(dtype)
        self.layers = []
        shape = self.input_shape
        for i, spec in enumerate(self.specs):
            try:
                layer = build_layer(spec, shape)
            except ShapeError as exc:
                raise ShapeError(f"layer {i} ({spec.kind}): {exc}") from None
            self.layers.append(layer)
            shape = layer.output_shape
        self.output_shape = shape
        rng = np.random.default_rng(seed)
        trainable = [i for i, layer in enumerate(self.layers) if layer.trainable]
        last = trainable[-1] if trainable else None
        for i, layer in enumerate(self.layers):
            layer.init(rng, self.dtype, zero=zero_last and i == last)

    def parameters(self):
        """List of ``(name, array)`` for every trainable weight, in layer order."""
        return [(f"{i}.{layer.spec.kind}.{name}", arr)
                for i, layer in enumerate(self.layers) for name, arr in layer.params.items()]

    def get_weights(self):
        return [arr.copy() for _, arr in self.parameters()]

    def set_weights(self, weights):
        params = self.parameters()
        if len(weights) != len(params):
            raise ShapeError(f"expected {len(params)} weight arrays, got {len(weights)}")
        for (name, arr), new in zip(params, weights):
            if arr.shape != np.shape(new):
                raise ShapeError(f"{name}: expected shape {arr.shape}, got {np.shape(new)}")
            arr[...] = new

    @property
    def n_params(self):
        return sum(arr.size for _, arr in self.parameters())

    def forward(self, x, training=False, rng=None):
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[1:] != self.input_shape:
            raise ShapeError(f"layer 0 ({self.specs[0].kind}): expected input shape "
                             f"{self.input_shape}, got {x.shape[1:]}")
        if not np.all(np.isfinite(x)):
            raise ValueError("network input contains NaN or infinite values")
        for layer in self.layers:
            x = layer.forward(x, training=training, rng=rng)
        return x

    def backward(self, dout):
        """Backpropagate d(loss)/d(logits); returns gradients aligned with :meth:`parameters`."""
        dout = np.asarray(dout, dtype=self.dtype)
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            if i == 0 and isinstance(layer, Conv2D):
                # the network input is data, not a weight
                layer.backward(dout, need_input_grad=False)
            else:
                dout = layer.backward(dout)
        return [layer.grads[name] for layer in self.layers for name in layer.params]

    def logits(self, x, batch_size=256):
        x = np.asarray(x, dtype=self.dtype)
        out = [self.forward(x[i:i + batch_size]) for i in range(0, len(x), batch_size)]
        return np.concatenate(out) if out else np.empty((0,) + self.output_shape, self.dtype)

    def predict_proba(self, x, batch_size=256):
        return _sigmoid(self.logits(x, batch_size).astype(np.float64))

    def summary(self):
        rows = []
        for layer in self.layers:
            n = sum(a.size for a in layer.params.values())
            rows.append((layer.spec.kind, layer.output_shape, n))
        return rows
