"""Hyperparameter search for the CNN: random sampling with successive halving.

Every sampled point is trained for a short budget; the best ``1/eta`` of
them are retrained from scratch with ``eta`` times the budget, until the
largest budget is reached. A trial's score is the validation accuracy at the
last budget it reached, and the winner is the best score over all trials,
earlier trials winning ties.
"""

import csv
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.metrics import balanced_accuracy_score

from .classifiers import CNNModel
from .fusion import build_ova_trainset, stratified_split
from .synthgrid import derive_seed

logger = logging.getLogger(__name__)

LOG_COLUMNS = ("trial", "status", "learning_rate", "beta1", "beta2", "dense_units", "epochs",
               "score", "seed", "wall_time_s")


@dataclass(frozen=True)
class SearchSpace:
    lr_range: tuple = (1e-4, 1e-2)
    beta1_range: tuple = (0.9, 0.999)
    beta2_range: tuple = (0.99, 0.999)
    dense_units_range: tuple = (32, 256)

    def __post_init__(self):
        for name in ("lr_range", "beta1_range", "beta2_range", "dense_units_range"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name} must satisfy low < high, got ({lo}, {hi})")
        if self.lr_range[0] <= 0:
            raise ValueError("learning rates must be positive")
        for name in ("beta1_range", "beta2_range"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi >= 1:
                raise ValueError(f"{name} must lie in [0, 1)")
        if self.dense_units_range[0] < 1:
            raise ValueError("dense width must be at least 1")

    def sample(self, rng):
        lo, hi = np.log(self.lr_range)
        return {"learning_rate": float(np.exp(rng.uniform(lo, hi))),
                "beta1": float(rng.uniform(*self.beta1_range)),
                "beta2": float(rng.uniform(*self.beta2_range)),
                "dense_units": int(rng.integers(self.dense_units_range[0],
                                                self.dense_units_range[1] + 1))}

    def contains(self, point):
        lr, b1, b2 = point["learning_rate"], point["beta1"], point["beta2"]
        units = point.get("dense_units", self.dense_units_range[0])
        return (self.lr_range[0] <= lr <= self.lr_range[1]
                and self.beta1_range[0] <= b1 <= self.beta1_range[1]
                and self.beta2_range[0] <= b2 <= self.beta2_range[1]
                and self.dense_units_range[0] <= units <= self.dense_units_range[1])


@dataclass
class Trial:
    index: int
    params: dict
    seed: int
    score: float = float("nan")
    epochs: int = 0
    duration: float = 0.0
    status: str = "pending"
    history: list = field(default_factory=list)

    @property
    def ok(self):
        return self.status == "ok"

    def row(self):
        p = self.params
        return [self.index, self.status, f"{p['learning_rate']:.6g}", f"{p['beta1']:.6g}",
                f"{p['beta2']:.6g}", p["dense_units"], self.epochs,
                "" if math.isnan(self.score) else f"{self.score:.6f}", self.seed,
                f"{self.duration:.3f}"]


class OvATask:
    """Validation task for search: every one-vs-all CNN of a sub-dataset.

    The pool is split into train/validation per class; each class gets a
    balanced training set from the training part. The score of a point is
    the mean balanced accuracy of its |G| models on the validation part.
    """

    def __init__(self, grids, labels, val_fraction=0.25, seed=0, base_params=None):
        self.grids = np.asarray(grids, dtype=np.float64)
        self.labels = np.asarray(labels).astype(str)
        self.classes = sorted(set(self.labels))
        self.train_idx, self.val_idx = stratified_split(self.labels, val_fraction,
                                                        derive_seed(seed, "nas-split"))
        self.seed = seed
        self.base_params = dict(base_params or {})
        self.sets = []
        for c in self.classes:
            idx, y01 = build_ova_trainset(c, self.labels[self.train_idx], derive_seed(seed, "nas", c),
                                          classes=self.classes)
            self.sets.append((self.train_idx[idx], y01))

    def score(self, params, epochs, seed):
        Xv, yv = self.grids[self.val_idx], self.labels[self.val_idx]
        scores = []
        for c, (idx, y01) in zip(self.classes, self.sets):
            model = CNNModel(**{**self.base_params, **params, "max_epochs": epochs,
                                "random_state": seed % (2 ** 31)})
            model.fit(self.grids[idx], y01)
            pred = model.positive_proba(Xv) >= 0.5
            scores.append(balanced_accuracy_score(yv == c, pred))
        return float(np.mean(scores))


def _rungs(min_epochs, max_epochs, eta):
    rungs, e = [], min_epochs
    while e < max_epochs:
        rungs.append(e)
        e *= eta
    return rungs + [max_epochs]


def search(space, budget, task, seed=0, min_epochs=10, max_epochs=40, eta=3, log_path=None):
    """Run ``budget`` trials; return ``(best_trial, trials)``.

    ``task`` needs a ``score(params, epochs, seed) -> accuracy`` method.
    A trial that raises is marked failed and the search continues; if every
    trial fails a ``RuntimeError`` is raised.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if not 1 <= min_epochs <= max_epochs:
        raise ValueError("need 1 <= min_epochs <= max_epochs")
    if eta < 2:
        raise ValueError("eta must be at least 2")
    rng = np.random.default_rng(seed)
    trials = [Trial(i, space.sample(rng), derive_seed(seed, "trial", i)) for i in range(budget)]
    alive = list(trials)
    rungs = _rungs(min_epochs, max_epochs, eta)
    for level, epochs in enumerate(rungs):
        for trial in alive:
            start = time.perf_counter()
            try:
                score = task.score(trial.params, epochs, trial.seed)
                if not 0.0 <= score <= 1.0:
                    raise ValueError(f"score {score} outside [0, 1]")
                trial.score, trial.status = score, "ok"
            except Exception as exc:  # a failed trial must not end the search
                logger.warning("trial %d failed: %s", trial.index, exc)
                trial.status, trial.score = "failed", float("nan")
            trial.epochs = epochs
            trial.history.append((epochs, trial.score))
            trial.duration += time.perf_counter() - start
        survivors = [t for t in alive if t.ok]
        if level == len(rungs) - 1 or not survivors:
            break
        keep = max(1, len(survivors) // eta)
        # stable sort keeps earlier trials ahead on equal scores
        alive = sorted(survivors, key=lambda t: -t.score)[:keep]
    if log_path is not None:
        write_trial_log(log_path, trials)
    completed = [t for t in trials if t.ok]
    if not completed:
        raise RuntimeError("every search trial failed")
    best = max(completed, key=lambda t: (t.score, -t.index))
    return best, trials


def write_trial_log(path, trials):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        for t in trials:
            writer.writerow(t.row())


def read_trial_log(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh, delimiter="\t"))
