"""One-vs-All model banks, fusion-vector assembly and the fusion network.

A bank holds one binary model per (family, class) pair. Each model sees all
positives of its class and an equal-sized negative set drawn evenly from the
other classes with its own seed, so the |G| models of a family are trained
on different data subsets. Bank outputs for a sample are laid out
family-major then class-major; two five-minute segments are concatenated in
time order to form the fusion input of length 10 * |G|.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.metrics import balanced_accuracy_score
from sklearn.utils.validation import check_is_fitted

from .classifiers import FAMILIES, make_classifier
from .labels import GridLabel
from .modelio import register
from .nn import AdamConfig, Sequential, dense
from .nn.training import fit_network
from .synthgrid import derive_seed
from .validation import check_features, check_finite, check_grids

logger = logging.getLogger(__name__)

DECISION_THRESHOLD = 0.8
FUSION_HIDDEN = 50
UNKNOWN = GridLabel.N.value


def _round_half_up(x):
    return int(np.floor(x + 0.5))


def stratified_split(y, fraction, seed):
    """Split indices per class, sending ``fraction`` of each class to the second part.

    Every class with at least two samples keeps at least one sample on each
    side. Returns two sorted index arrays.
    """
    y = np.asarray(y)
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    first, second = [], []
    for c in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == c))
        k = min(max(_round_half_up(fraction * idx.size), 1), idx.size - 1) if idx.size >= 2 else 0
        second.extend(idx[:k])
        first.extend(idx[k:])
    return np.sort(np.asarray(first, dtype=np.int64)), np.sort(np.asarray(second, dtype=np.int64))


def build_ova_trainset(class_i, labels, seed, classes=None):
    """Balanced binary training set for class ``class_i`` against the rest.

    ``class_i`` is a class index into ``classes`` (default: sorted unique
    labels) or a label. All ``n_i`` samples of the class are positives; each
    other class contributes ``n_i // (|G| - 1)`` negatives drawn without
    replacement, and shortfalls from small classes are topped up round-robin
    from the others. If the other classes cannot supply enough negatives the
    positives are subsampled to match. Returns ``(indices, y01)``.
    """
    labels = np.asarray(labels)
    classes = np.unique(labels) if classes is None else np.asarray(classes)
    if classes.size < 2:
        raise ValueError("one-vs-all needs at least two classes")
    if isinstance(class_i, (int, np.integer)) and not np.isin(class_i, classes):
        target = classes[class_i]
    else:
        target = class_i
    pools = {c: np.flatnonzero(labels == c) for c in classes}
    for c, pool in pools.items():
        if pool.size == 0:
            raise ValueError(f"class {c} has no samples")
    rng = np.random.default_rng(seed)
    positives = rng.permutation(pools[target])
    others = [c for c in classes if c != target]
    n_i = positives.size
    want = n_i // len(others)
    shuffled = {c: rng.permutation(pools[c]) for c in others}
    taken = {c: min(want, shuffled[c].size) for c in others}
    shortfall = want * len(others) - sum(taken.values())
    while shortfall > 0:
        open_classes = [c for c in others if taken[c] < shuffled[c].size]
        if not open_classes:
            break
        for c in open_classes:
            if shortfall == 0:
                break
            taken[c] += 1
            shortfall -= 1
    negatives = np.concatenate([shuffled[c][:taken[c]] for c in others])
    if negatives.size < want * len(others):
        # not enough negatives anywhere: shrink the positive side instead
        positives = positives[:negatives.size]
        logger.warning("class %s: only %d negatives available, positives subsampled",
                       target, negatives.size)
    idx = np.concatenate([positives, negatives]).astype(np.int64)
    y01 = np.concatenate([np.ones(positives.size, np.int64), np.zeros(negatives.size, np.int64)])
    return idx, y01


def per_class_recall(y_true, y_pred, classes):
    """Recall of every class in percent; NaN for classes absent from ``y_true``."""
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    out = {}
    for c in classes:
        mask = y_true == c
        out[c] = float(100.0 * np.mean(y_pred[mask] == c)) if mask.any() else float("nan")
    return out


class OvABank(BaseEstimator):
    """Grid of ``len(families) x |G|`` binary models over focused spectrograms.

    Parameters
    ----------
    classes : sequence of str, optional
        Canonical class order; defaults to the sorted labels seen in ``fit``.
    families : tuple of str
    family_params : dict, optional
        ``{family: {param: value}}`` overrides passed to each model.
    random_state : int
    """

    def __init__(self, classes=None, families=FAMILIES, family_params=None, random_state=0):
        self.classes = classes
        self.families = families
        self.family_params = family_params
        self.random_state = random_state

    def fit(self, X, y, X_aug=None):
        """Train every model. ``X_aug`` (optional) holds one augmented copy of
        each row of ``X`` and joins the training set alongside its original."""
        X = check_grids(X)
        y = np.asarray(y).astype(str)
        if X_aug is not None:
            X_aug = check_grids(X_aug)
            if X_aug.shape != X.shape:
                raise ValueError("augmented grids must align with the originals")
        classes = sorted(set(y)) if self.classes is None else [str(c) for c in self.classes]
        missing = [c for c in classes if not np.any(y == c)]
        if missing:
            raise ValueError(f"no training samples for class(es) {', '.join(missing)}")
        unknown = set(y) - set(classes)
        if unknown:
            raise ValueError(f"labels outside the class order: {sorted(unknown)}")
        params = self.family_params or {}
        self.class_order_ = list(classes)
        self.grid_shape_ = X.shape[1:]
        self.models_ = {}
        for family in self.families:
            row = []
            for c in self.class_order_:
                seed = derive_seed(self.random_state, "bank", family, c)
                idx, y01 = build_ova_trainset(c, y, seed, classes=self.class_order_)
                Xi, yi = X[idx], y01
                if X_aug is not None:
                    Xi, yi = np.concatenate([Xi, X_aug[idx]]), np.concatenate([yi, yi])
                try:
                    model = make_classifier(family, random_state=seed % (2 ** 31),
                                            **params.get(family, {}))
                    model.fit(Xi, yi)
                except Exception as exc:
                    raise RuntimeError(f"training {family} model for class {c} failed: {exc}") from exc
                row.append(model)
            self.models_[family] = row
        return self

    @property
    def n_outputs(self):
        return len(self.families) * len(self.class_order_)

    def family_proba(self, X, family):
        """(n, |G|) positive-class probabilities of one family."""
        check_is_fitted(self, "models_")
        X = check_grids(X)
        if X.shape[1:] != self.grid_shape_:
            raise ValueError(f"bank expects grids of shape {self.grid_shape_}, got {X.shape[1:]}")
        return np.column_stack([m.positive_proba(X) for m in self.models_[family]])

    def transform(self, X):
        """Per-segment bank output, (n, len(families) * |G|), family-major."""
        return np.hstack([self.family_proba(X, f) for f in self.families])

    def model_accuracy(self, X, y, family):
        """Balanced accuracy (%) of each one-vs-all model of ``family``, keyed by class."""
        y = np.asarray(y).astype(str)
        proba = self.family_proba(X, family) if len(y) else np.empty((0, len(self.class_order_)))
        out = {}
        for i, c in enumerate(self.class_order_):
            truth = y == c
            if truth.all() or not truth.any():
                out[c] = float("nan")
                continue
            out[c] = float(100.0 * balanced_accuracy_score(truth, proba[:, i] >= 0.5))
        return out

    def family_predict(self, X, family):
        proba = self.family_proba(X, family)
        return np.asarray(self.class_order_)[np.argmax(proba, axis=1)]


def assemble_vector(bank, segments):
    """Fusion vector for one sample from one or two focused segments.

    A single segment is duplicated to fill the two-segment layout.
    """
    grids = check_grids(segments)
    if grids.shape[0] not in (1, 2):
        raise ValueError(f"expected 1 or 2 segments, got {grids.shape[0]}")
    out = bank.transform(grids)
    if out.shape[0] == 1:
        out = np.concatenate([out, out])
    return out.reshape(-1)


def duplicate_rows(V):
    """Turn per-segment bank outputs (n, 5|G|) into single-segment fusion vectors (n, 10|G|)."""
    V = np.asarray(V, dtype=np.float64)
    return np.hstack([V, V])


@dataclass(frozen=True)
class FusionDecision:
    label: str
    confidence: float
    per_class: np.ndarray
    vector: np.ndarray = field(default=None, repr=False)
    tie: bool = False


def decide(per_class, class_order, threshold=DECISION_THRESHOLD, vector=None):
    """Label = argmax class when its probability reaches ``threshold``, else N.

    Ties go to the alphabetically first class and are flagged.
    """
    p = np.asarray(per_class, dtype=np.float64).ravel()
    if p.size != len(class_order):
        raise ValueError(f"{p.size} probabilities for {len(class_order)} classes")
    order = np.argsort(np.asarray(class_order, dtype=str), kind="stable")
    best = order[np.argmax(p[order])]
    confidence = float(p[best])
    tie = int(np.sum(p == confidence)) > 1
    label = str(class_order[best]) if confidence >= threshold else UNKNOWN
    return FusionDecision(label, confidence, p, vector, tie)


@register
class FusionNetwork(ClassifierMixin, BaseEstimator):
    """Shallow multi-label network: input -> ``hidden`` ReLU units -> one sigmoid per class."""

    family = "Fusion"

    def __init__(self, hidden=FUSION_HIDDEN, learning_rate=1e-2, beta1=0.9, beta2=0.999,
                 batch_size=32, max_epochs=300, patience=20, tol=1e-4,
                 threshold=DECISION_THRESHOLD, random_state=0):
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.tol = tol
        self.threshold = threshold
        self.random_state = random_state

    def fit(self, V, y, classes=None):
        V = check_features(V)
        y = np.asarray(y).astype(str)
        if len(y) != len(V):
            raise ValueError(f"{len(V)} vectors but {len(y)} labels")
        self.classes_ = np.asarray(sorted(set(y)) if classes is None else [str(c) for c in classes])
        if len(set(y)) < 2:
            raise ValueError("fusion training needs samples from at least two classes")
        targets = (y[:, None] == self.classes_[None, :]).astype(np.float64)
        self.n_features_in_ = V.shape[1]
        seed = int(self.random_state or 0)
        self.network_ = Sequential([dense(int(self.hidden), "relu"), dense(len(self.classes_), None)],
                                   (V.shape[1],), seed=seed)
        self.loss_curve_ = fit_network(self.network_, V, targets,
                                       adam=AdamConfig(self.learning_rate, self.beta1, self.beta2),
                                       batch_size=self.batch_size, max_epochs=self.max_epochs,
                                       patience=self.patience, tol=self.tol, seed=seed + 1)
        return self

    def predict_proba(self, V):
        """Independent per-class probabilities, shape (n, |G|); rows need not sum to 1."""
        check_is_fitted(self, "network_")
        V = check_features(V)
        if V.shape[1] != self.n_features_in_:
            raise ValueError(f"fusion vectors must have length {self.n_features_in_}, got {V.shape[1]}")
        return check_finite(self.network_.predict_proba(V), "fusion output")

    def predict(self, V):
        """Argmax class, ignoring the unknown-grid threshold."""
        return self.classes_[np.argmax(self.predict_proba(V), axis=1)]

    def decide(self, vector):
        p = self.predict_proba(np.asarray(vector)[None])[0]
        return decide(p, list(self.classes_), self.threshold, vector=np.asarray(vector))

    def _export(self):
        meta = {"classes": self.classes_.tolist(), "n_features_in": int(self.n_features_in_)}
        return meta, {"weights": {f"{i:03d}": w for i, w in enumerate(self.network_.get_weights())}}

    def _import(self, meta, sections):
        self.classes_ = np.asarray(meta["classes"])
        self.n_features_in_ = int(meta["n_features_in"])
        self.network_ = Sequential([dense(int(self.hidden), "relu"), dense(len(self.classes_), None)],
                                   (self.n_features_in_,))
        weights = sections["weights"]
        self.network_.set_weights([weights[k] for k in sorted(weights)])
