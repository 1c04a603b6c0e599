"""Per-sub-dataset pipelines, detection-based routing and model bundles."""

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from . import detect as detect_mod
from .classifiers import FAMILIES
from .fusion import (DECISION_THRESHOLD, FusionNetwork, OvABank, assemble_vector, duplicate_rows,
                     per_class_recall, stratified_split)
from .labels import SubDatasetKey, route
from .modelio import load_model, save_model
from .preprocess import AUGMENT_SNR_DB, SpectrogramFocuser, augment_noise
from .signal_io import SEGMENT_SECONDS, segment
from .synthgrid import derive_seed

logger = logging.getLogger(__name__)

BANK_FRACTION = 0.8
VALIDATION_FRACTION = 0.2
BUNDLE_FILE = "bundle.json"
BUNDLE_VERSION = 1


class GridFusionClassifier(ClassifierMixin, BaseEstimator):
    """Bank plus fusion network for one sub-dataset (recording type x nominal).

    ``fit`` takes equal-length time-domain segments at the canonical rate and
    performs the whole training protocol: 80/20 bank/fusion split, 20%
    validation inside each part, one noise-augmented copy of every training
    segment, focused spectrograms, the OvA bank, then the fusion network on
    bank outputs of the reserved part.

    After fitting, ``validation_report_`` maps each family and ``"Fusion"``
    to per-class validation accuracy in percent: the balanced accuracy of
    each binary model on the bank validation part, and the recall of the
    fusion network's argmax decision on the fusion validation part.
    """

    def __init__(self, key="audio50", families=FAMILIES, family_params=None, fusion_params=None,
                 augment_snr_db=AUGMENT_SNR_DB, bank_fraction=BANK_FRACTION,
                 validation_fraction=VALIDATION_FRACTION, threshold=DECISION_THRESHOLD,
                 random_state=0):
        self.key = key
        self.families = families
        self.family_params = family_params
        self.fusion_params = fusion_params
        self.augment_snr_db = augment_snr_db
        self.bank_fraction = bank_fraction
        self.validation_fraction = validation_fraction
        self.threshold = threshold
        self.random_state = random_state

    @property
    def key_(self):
        return self.key if isinstance(self.key, SubDatasetKey) else SubDatasetKey.from_name(self.key)

    def _augment(self, X, indices):
        key = self.key_
        out = []
        for i in indices:
            seed = derive_seed(self.random_state, "augment", int(i))
            out.append(augment_noise(X[i], self.augment_snr_db, seed=seed, nominal=int(key.nominal)))
        return np.asarray(out).reshape((len(out),) + X.shape[1:])

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError(f"expected (n_segments, n_samples) time-domain input, got {X.shape}")
        y = np.asarray(y).astype(str)
        key = self.key_
        classes = [str(c) for c in key.classes]
        missing = [c for c in classes if not np.any(y == c)]
        if missing:
            raise ValueError(f"{key.name}: no segments for class(es) {', '.join(missing)}")
        rs = self.random_state
        val = self.validation_fraction
        bank_idx, fusion_idx = stratified_split(y, 1.0 - self.bank_fraction, derive_seed(rs, "split"))
        b_tr, b_val = (bank_idx[i] for i in stratified_split(y[bank_idx], val, derive_seed(rs, "bank")))
        f_tr, f_val = (fusion_idx[i] for i in stratified_split(y[fusion_idx], val, derive_seed(rs, "fusion")))
        self.split_sizes_ = {"bank_train": len(b_tr), "bank_val": len(b_val),
                             "fusion_train": len(f_tr), "fusion_val": len(f_val)}

        self.focuser_ = SpectrogramFocuser(nominal=int(key.nominal)).fit(X)
        grids = self.focuser_.transform(X)
        aug_bank = self.focuser_.transform(self._augment(X, b_tr)) if self.augment_snr_db is not None else None
        self.bank_ = OvABank(classes, self.families, self.family_params,
                             random_state=derive_seed(rs, "models"))
        self.bank_.fit(grids[b_tr], y[b_tr], X_aug=aug_bank)

        V = self.bank_.transform(grids[f_tr])
        y_f = y[f_tr]
        if self.augment_snr_db is not None:
            V = np.vstack([V, self.bank_.transform(self.focuser_.transform(self._augment(X, f_tr)))])
            y_f = np.concatenate([y_f, y_f])
        params = {"threshold": self.threshold, **(self.fusion_params or {})}
        self.fusion_ = FusionNetwork(random_state=derive_seed(rs, "fusion-net") % (2 ** 31), **params)
        self.fusion_.fit(duplicate_rows(V), y_f, classes=classes)
        self.classes_ = np.asarray(classes)

        report = {}
        for family in self.families:
            report[family] = self.bank_.model_accuracy(grids[b_val], y[b_val], family)
        pred = self.fusion_.predict(duplicate_rows(self.bank_.transform(grids[f_val]))) if len(f_val) else []
        report["Fusion"] = per_class_recall(y[f_val], pred, classes)
        self.validation_report_ = report
        return self

    def segment_vectors(self, X):
        """Fusion vectors (n, 10|G|) treating each time-domain segment as a lone sample."""
        check_is_fitted(self, "fusion_")
        return duplicate_rows(self.bank_.transform(self.focuser_.transform(X)))

    def predict_proba(self, X):
        return self.fusion_.predict_proba(self.segment_vectors(X))

    def predict(self, X):
        return self.fusion_.predict(self.segment_vectors(X))

    def decide_segments(self, segments):
        """Fusion decision for one sample made of 1 or 2 time-domain segments."""
        check_is_fitted(self, "fusion_")
        grids = self.focuser_.transform(np.asarray(segments, dtype=np.float64))
        return self.fusion_.decide(assemble_vector(self.bank_, grids))


@dataclass(frozen=True)
class Prediction:
    source_id: str
    key: str
    class_order: tuple
    detection: detect_mod.DetectReport
    decision: object
    n_segments: int
    flagged: bool


class ENFGridClassifier:
    """Four sub-dataset pipelines behind detection-based routing."""

    def __init__(self, pipelines, snr_threshold_db=detect_mod.SNR_THRESHOLD_DB):
        self.pipelines = dict(pipelines)
        self.snr_threshold_db = snr_threshold_db

    def predict_recording(self, rec, use_metadata=False):
        """Detect, route, split into two five-minute segments and decide.

        Recordings shorter than two segments are decided on one duplicated
        segment; longer ones use their first two. Both cases are flagged.
        """
        report = detect_mod.detect(rec, self.snr_threshold_db)
        nominal, rec_type = report.nominal, report.rec_type
        if use_metadata:
            nominal = rec.nominal or nominal
            rec_type = rec.rec_type or rec_type
        key = route(rec_type, nominal)
        if key.name not in self.pipelines:
            raise KeyError(f"no trained pipeline for sub-dataset {key.name}")
        segs = segment(rec, SEGMENT_SECONDS)
        flagged = len(segs) != 2
        if len(segs) < 2:
            logger.warning("%s: shorter than %d s, deciding on one segment",
                           rec.source_id, 2 * SEGMENT_SECONDS)
        segs = segs[:2]
        pipe = self.pipelines[key.name]
        decision = pipe.decide_segments([s.samples for s in segs])
        return Prediction(rec.source_id, key.name, tuple(pipe.classes_), report, decision,
                          len(segs), flagged)

    def save(self, directory):
        save_bundle(self, directory)

    @classmethod
    def load(cls, directory):
        return load_bundle(directory)


def save_bundle(system, directory):
    """Write every model of every pipeline plus ``bundle.json`` describing them."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {"version": BUNDLE_VERSION, "snr_threshold_db": system.snr_threshold_db,
                "detect": {"harmonic": detect_mod.HARMONIC,
                           "band_halfwidth_hz": detect_mod.BAND_HALFWIDTH_HZ,
                           "noise_floor_factor": detect_mod.NOISE_FLOOR_FACTOR},
                "pipelines": {}}
    for name in sorted(system.pipelines):
        pipe = system.pipelines[name]
        sub = directory / name
        sub.mkdir(exist_ok=True)
        files = {}
        for family in pipe.bank_.families:
            files[family] = []
            for c, model in zip(pipe.bank_.class_order_, pipe.bank_.models_[family]):
                rel = f"{name}/{family}_{c}.enfmdl"
                save_model(model, directory / rel)
                files[family].append(rel)
        fusion_rel = f"{name}/fusion.enfmdl"
        save_model(pipe.fusion_, directory / fusion_rel)
        manifest["pipelines"][name] = {
            "class_order": list(pipe.bank_.class_order_),
            "families": list(pipe.bank_.families),
            "models": files,
            "fusion": fusion_rel,
            "threshold": pipe.threshold,
            "preprocess": pipe.focuser_.get_params(),
            "grid_shape": list(pipe.bank_.grid_shape_),
        }
    (directory / BUNDLE_FILE).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_bundle(directory):
    directory = Path(directory)
    path = directory / BUNDLE_FILE
    if not path.exists():
        raise FileNotFoundError(f"{directory}: no {BUNDLE_FILE}")
    manifest = json.loads(path.read_text())
    if manifest.get("version") != BUNDLE_VERSION:
        raise OSError(f"{path}: unsupported bundle version {manifest.get('version')}")
    pipelines = {}
    for name, info in manifest["pipelines"].items():
        pipe = GridFusionClassifier(key=name, families=tuple(info["families"]),
                                    threshold=info["threshold"])
        bank = OvABank(info["class_order"], tuple(info["families"]))
        bank.class_order_ = list(info["class_order"])
        bank.grid_shape_ = tuple(info["grid_shape"])
        bank.models_ = {f: [load_model(directory / rel) for rel in info["models"][f]]
                        for f in info["families"]}
        pipe.bank_ = bank
        pipe.fusion_ = load_model(directory / info["fusion"])
        pipe.classes_ = np.asarray(info["class_order"])
        focuser = SpectrogramFocuser(**info["preprocess"])
        pipe.focuser_ = focuser.fit(np.zeros((1, SEGMENT_SECONDS * focuser.sample_rate)))
        pipelines[name] = pipe
    return ENFGridClassifier(pipelines, manifest["snr_threshold_db"])
