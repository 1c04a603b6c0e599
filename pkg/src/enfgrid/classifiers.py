"""The five binary classifier families behind one fit / predict_proba interface.

Logistic regression, Gaussian naive Bayes and the random forest are fitted
with scikit-learn and then reduced to plain arrays, so prediction and
serialisation do not depend on scikit-learn internals. The MLP and CNN are
trained with :mod:`enfgrid.nn`.

All families accept either flattened vectors (n, d) or spectrogram grids
(n, n_freq, n_time). Non-CNN families flatten grids row-major.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.ensemble import RandomForestClassifier
from sklearn.linear_model import LogisticRegression
from sklearn.naive_bayes import GaussianNB
from sklearn.utils.validation import check_is_fitted

from .modelio import register
from .nn import AdamConfig, LayerSpec, Sequential, conv2d, dense, dropout, flatten, maxpool
from .nn.layers import _sigmoid
from .nn.training import fit_network
from .validation import check_binary_targets, check_features, check_grids, check_n_features

FAMILIES = ("NaiveBayes", "LogReg", "RandomForest", "MLP", "CNN")


class BinaryModel(ClassifierMixin, BaseEstimator):
    """Shared plumbing: target checks, ``predict_proba`` layout, (de)serialisation."""

    family = None

    def _start_fit(self, X, y):
        X = check_features(X)
        self.classes_, y01 = check_binary_targets(y, X.shape[0])
        self.n_features_in_ = X.shape[1]
        return X, y01

    def positive_proba(self, X):
        """Probability of ``classes_[1]`` for each sample, shape (n,)."""
        check_is_fitted(self, "classes_")
        X = check_features(X)
        check_n_features(self, X)
        return np.clip(self._positive(X), 0.0, 1.0)

    def predict_proba(self, X):
        p = self.positive_proba(X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return self.classes_[(self.positive_proba(X) >= 0.5).astype(int)]

    def _export(self):
        meta = {"classes": self.classes_.tolist(), "n_features_in": int(self.n_features_in_)}
        meta.update(self._export_meta())
        return meta, self._export_arrays()

    def _import(self, meta, sections):
        self.classes_ = np.asarray(meta["classes"])
        self.n_features_in_ = int(meta["n_features_in"])
        self._import_state(meta, sections)

    def _export_meta(self):
        return {}


@register
class LogisticRegressionModel(BinaryModel):
    """L2-penalised logistic regression with the regularisation constant fixed at 1.0."""

    family = "LogReg"
    C = 1.0

    def __init__(self, tol=1e-4, max_iter=1000):
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        X, y01 = self._start_fit(X, y)
        lr = LogisticRegression(C=self.C, tol=self.tol, max_iter=self.max_iter).fit(X, y01)
        self.coef_ = lr.coef_[0].copy()
        self.intercept_ = float(lr.intercept_[0])
        return self

    def _positive(self, X):
        return _sigmoid(X @ self.coef_ + self.intercept_)

    def _export_arrays(self):
        return {"weights": {"coef": self.coef_, "intercept": np.array([self.intercept_])}}

    def _import_state(self, meta, sections):
        self.coef_ = sections["weights"]["coef"]
        self.intercept_ = float(sections["weights"]["intercept"][0])


@register
class GaussianNBModel(BinaryModel):
    """Gaussian naive Bayes; ``var_smoothing`` times the largest feature variance is
    added to every per-class variance."""

    family = "NaiveBayes"

    def __init__(self, var_smoothing=1e-9):
        self.var_smoothing = var_smoothing

    def fit(self, X, y):
        X, y01 = self._start_fit(X, y)
        nb = GaussianNB(var_smoothing=self.var_smoothing).fit(X, y01)
        self.theta_ = nb.theta_.copy()
        self.var_ = nb.var_.copy()
        self.class_prior_ = nb.class_prior_.copy()
        return self

    def _positive(self, X):
        var = np.maximum(self.var_, np.finfo(float).tiny)
        jll = np.log(self.class_prior_)[None, :] - 0.5 * np.sum(np.log(2.0 * np.pi * var), axis=1)[None, :]
        jll = jll - 0.5 * np.stack([np.sum((X - self.theta_[c]) ** 2 / var[c], axis=1)
                                    for c in range(2)], axis=1)
        # softmax over the two classes
        return _sigmoid(jll[:, 1] - jll[:, 0])

    def _export_arrays(self):
        return {"weights": {"theta": self.theta_, "var": self.var_, "prior": self.class_prior_}}

    def _import_state(self, meta, sections):
        w = sections["weights"]
        self.theta_, self.var_, self.class_prior_ = w["theta"], w["var"], w["prior"]


@register
class RandomForestModel(BinaryModel):
    """Bootstrap forest of fully grown trees, ``floor(sqrt(d))`` candidate features per
    split. The probability is the fraction of trees voting positive."""

    family = "RandomForest"

    def __init__(self, n_estimators=100, random_state=None):
        self.n_estimators = n_estimators
        self.random_state = random_state

    def fit(self, X, y):
        X, y01 = self._start_fit(X, y)
        rf = RandomForestClassifier(n_estimators=self.n_estimators, max_features="sqrt",
                                    max_depth=None, bootstrap=True,
                                    random_state=self.random_state, n_jobs=1).fit(X, y01)
        left, right, feature, threshold, vote, offsets = [], [], [], [], [], [0]
        for est in rf.estimators_:
            tree = est.tree_
            # estimators_ see the encoded targets, so column 1 is the positive class
            values = tree.value[:, 0, :]
            leaf_vote = (est.classes_[values.argmax(axis=1)] == 1).astype(np.int8)
            left.append(tree.children_left)
            right.append(tree.children_right)
            feature.append(tree.feature)
            threshold.append(tree.threshold)
            vote.append(leaf_vote)
            offsets.append(offsets[-1] + tree.node_count)
        self.tree_offsets_ = np.asarray(offsets, dtype=np.int64)
        self.children_left_ = np.concatenate(left).astype(np.int64)
        self.children_right_ = np.concatenate(right).astype(np.int64)
        self.feature_ = np.concatenate(feature).astype(np.int64)
        self.threshold_ = np.concatenate(threshold).astype(np.float64)
        self.leaf_vote_ = np.concatenate(vote)
        return self

    def tree_votes(self, X):
        """(n_trees, n_samples) matrix of 0/1 votes."""
        check_is_fitted(self, "tree_offsets_")
        # trees were grown on float32-cast features
        X = check_features(X).astype(np.float32)
        check_n_features(self, X)
        n = X.shape[0]
        rows = np.arange(n)
        votes = np.empty((len(self.tree_offsets_) - 1, n), dtype=np.int8)
        for t, base in enumerate(self.tree_offsets_[:-1]):
            node = np.zeros(n, dtype=np.int64)
            while True:
                gnode = node + base
                internal = self.children_left_[gnode] >= 0
                if not internal.any():
                    break
                go_left = X[rows, np.where(internal, self.feature_[gnode], 0)] <= self.threshold_[gnode]
                nxt = np.where(go_left, self.children_left_[gnode], self.children_right_[gnode])
                node = np.where(internal, nxt, node)
            votes[t] = self.leaf_vote_[node + base]
        return votes

    def _positive(self, X):
        votes = self.tree_votes(X)
        return votes.sum(axis=0) / votes.shape[0]

    def _export_arrays(self):
        return {"trees": {"offsets": self.tree_offsets_, "left": self.children_left_,
                          "right": self.children_right_, "feature": self.feature_,
                          "threshold": self.threshold_, "vote": self.leaf_vote_}}

    def _import_state(self, meta, sections):
        t = sections["trees"]
        self.tree_offsets_ = t["offsets"]
        self.children_left_, self.children_right_ = t["left"], t["right"]
        self.feature_, self.threshold_, self.leaf_vote_ = t["feature"], t["threshold"], t["vote"]


class _NetworkModel(BinaryModel):
    """Common training/inference for the :class:`Sequential`-backed families."""

    def _adam(self):
        return AdamConfig(self.learning_rate, self.beta1, self.beta2)

    def _train(self, specs, input_shape, X, y01):
        seed = 0 if self.random_state is None else int(self.random_state)
        self.network_ = Sequential(specs, input_shape, seed=seed, dtype=self._dtype())
        self.loss_curve_ = fit_network(self.network_, X, y01, adam=self._adam(),
                                       batch_size=self.batch_size, max_epochs=self.max_epochs,
                                       patience=self.patience, tol=self.tol, seed=seed + 1)
        self.n_epochs_ = len(self.loss_curve_)
        return self

    def _dtype(self):
        return np.float64

    def _export_meta(self):
        return {"input_shape": list(self.network_.input_shape),
                "specs": [s.to_dict() for s in self.network_.specs],
                "dtype": self.network_.dtype.str}

    def _export_arrays(self):
        return {"weights": {f"{i:03d}": w for i, w in enumerate(self.network_.get_weights())}}

    def _import_state(self, meta, sections):
        specs = [LayerSpec.from_dict(d) for d in meta["specs"]]
        self.network_ = Sequential(specs, meta["input_shape"], dtype=np.dtype(meta["dtype"]))
        weights = sections.get("weights", {})
        self.network_.set_weights([weights[k] for k in sorted(weights)])


@register
class MLPModel(_NetworkModel):
    """Two-hidden-layer perceptron (100 and 50 rectified units) with a sigmoid output."""

    family = "MLP"

    def __init__(self, hidden_layer_sizes=(100, 50), learning_rate=1e-3, beta1=0.9, beta2=0.999,
                 batch_size=32, max_epochs=100, patience=10, tol=1e-4, random_state=None):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.tol = tol
        self.random_state = random_state

    def fit(self, X, y):
        X, y01 = self._start_fit(X, y)
        specs = [dense(int(u), "relu") for u in self.hidden_layer_sizes] + [dense(1, None)]
        return self._train(specs, (X.shape[1],), X, y01)

    def _positive(self, X):
        return self.network_.predict_proba(X)[:, 0]


def cnn_layers(conv_filters=(32, 64, 128), dense_units=101, dropout_rate=0.3, kernel=3,
               padding="same"):
    """Conv/pool stacks, then Flatten, Dense, Dropout and a single-unit output."""
    specs = []
    for f in conv_filters:
        specs += [conv2d(int(f), kernel=kernel, activation="relu", padding=padding), maxpool(2)]
    specs += [flatten(), dense(int(dense_units), "relu"), dropout(dropout_rate), dense(1, None)]
    return specs


@register
class CNNModel(_NetworkModel):
    """Convolutional network over focused spectrogram grids.

    Parameters
    ----------
    conv_filters : tuple of int, default=(32, 64, 128)
        Channels of the three Conv2D/MaxPool stacks.
    dense_units : int, default=101
    dropout : float, default=0.3
    kernel, padding
        Convolution geometry; pools are 2x2.
    learning_rate, beta1, beta2 : float
        Adam settings, defaulting to the tuned optimum.
    layers : list of LayerSpec or dict, optional
        Full custom architecture, overriding the arguments above.
    dtype : str, default="float32"
    """

    family = "CNN"

    def __init__(self, conv_filters=(32, 64, 128), dense_units=101, dropout=0.3, kernel=3,
                 padding="same", learning_rate=7.2e-4, beta1=0.98, beta2=0.99, batch_size=32,
                 max_epochs=100, patience=10, tol=1e-4, layers=None, dtype="float32",
                 random_state=None):
        self.conv_filters = conv_filters
        self.dense_units = dense_units
        self.dropout = dropout
        self.kernel = kernel
        self.padding = padding
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.tol = tol
        self.layers = layers
        self.dtype = dtype
        self.random_state = random_state

    def layer_specs(self):
        if self.layers is not None:
            return [s if isinstance(s, LayerSpec) else LayerSpec.from_dict(s) for s in self.layers]
        return cnn_layers(self.conv_filters, self.dense_units, self.dropout, self.kernel, self.padding)

    def _dtype(self):
        return np.dtype(self.dtype)

    def fit(self, X, y):
        grids = check_grids(X)
        self.grid_shape_ = grids.shape[1:]
        X, y01 = self._start_fit(grids, y)
        return self._train(self.layer_specs(), self.grid_shape_ + (1,), grids[..., None], y01)

    def _positive(self, X):
        return self.network_.predict_proba(X.reshape((-1,) + self.grid_shape_ + (1,)))[:, 0]

    def _import_state(self, meta, sections):
        super()._import_state(meta, sections)
        self.grid_shape_ = tuple(meta["input_shape"][:2])


FAMILY_TYPES = {"NaiveBayes": GaussianNBModel, "LogReg": LogisticRegressionModel,
                "RandomForest": RandomForestModel, "MLP": MLPModel, "CNN": CNNModel}


def make_classifier(family, random_state=None, **params):
    """Instantiate a family by name; deterministic families ignore ``random_state``."""
    cls = FAMILY_TYPES[family]
    if "random_state" in cls().get_params():
        params["random_state"] = random_state
    return cls(**params)


def train_logreg(X, y):
    return LogisticRegressionModel().fit(X, y)


def train_nb(X, y):
    return GaussianNBModel().fit(X, y)


def train_rf(X, y, seed):
    return RandomForestModel(random_state=seed).fit(X, y)


def train_mlp(X, y, seed):
    return MLPModel(random_state=seed).fit(X, y)


def train_cnn(spectro_batch, y, spec=None, adam=None, seed=0, **params):
    adam = adam or AdamConfig()
    model = CNNModel(layers=spec, learning_rate=adam.learning_rate, beta1=adam.beta1,
                     beta2=adam.beta2, random_state=seed, **params)
    return model.fit(spectro_batch, y)


def predict_proba(model, x):
    """Positive-class probability for one sample (scalar) or a batch (array)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1 or (isinstance(model, CNNModel) and x.ndim == 2)
    p = model.positive_proba(x[None] if single else x)
    return float(p[0]) if single else p
