"""End-to-end experiment runner and report writers.

A run is described by a ``key = value`` config file. All randomness flows
from ``seed``; repeat ``r`` re-draws the splits and retrains every model with
a seed derived from ``(seed, "repeat", r)``. Validation accuracies are
averaged over repeats; the models of repeat 0 form the saved bundle and are
used for the test set.
"""

import ast
import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classifiers import FAMILIES
from .detect import SNR_THRESHOLD_DB
from .fusion import DECISION_THRESHOLD, UNKNOWN
from .labels import ALL_KEYS, KNOWN_GRIDS, SubDatasetKey, route
from .preprocess import AUGMENT_SNR_DB
from .signal_io import load_recording, read_manifest, segment
from .synthgrid import CorpusSpec, default_grid_params, derive_seed, synth_corpus_memory
from .system import ENFGridClassifier, GridFusionClassifier, save_bundle

logger = logging.getLogger(__name__)

FAMILY_SHORT = {"NaiveBayes": "NB", "LogReg": "LogReg", "RandomForest": "RF", "MLP": "MLP",
                "CNN": "CNN", "Fusion": "Fusion"}
GRID_COLUMNS = [g.value for g in KNOWN_GRIDS]
TEST_COLUMNS = GRID_COLUMNS + [UNKNOWN]
TYPE_ROWS = ("Audio", "Power")
DECISION_COLUMNS = ("path", "true_label", "true_type", "detected_type", "detected_nominal",
                    "label", "confidence", "segments", "flagged", "probabilities")

DEFAULTS = {
    "corpus": "synth",
    "seed": 0,
    "repeats": 1,
    "per_grid_minutes": 60.0,
    "max_recording_minutes": 60.0,
    "test_minutes": 10.0,
    "test_per_grid": 1,
    "unknown_tests": 2,
    "audio_snr_db": None,
    "power_snr_db": None,
    "train_manifest": None,
    "test_manifest": None,
    "families": ",".join(FAMILIES),
    "subsets": ",".join(k.name for k in ALL_KEYS),
    "augment_snr_db": AUGMENT_SNR_DB,
    "threshold": DECISION_THRESHOLD,
    "snr_threshold_db": SNR_THRESHOLD_DB,
    "use_test_metadata": False,
}
_PARAM_PREFIXES = {"nb": "NaiveBayes", "logreg": "LogReg", "rf": "RandomForest",
                   "mlp": "MLP", "cnn": "CNN", "fusion": "Fusion"}


class ConfigError(ValueError):
    pass


def parse_value(text):
    text = text.strip()
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    if lowered in ("none", "null", ""):
        return None
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def parse_config(text):
    """Parse ``key = value`` lines; ``#`` starts a comment. Values are Python literals
    where possible and strings otherwise."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = parse_value(value)
    return out


@dataclass
class RunConfig:
    values: dict
    base_dir: Path = Path(".")

    @classmethod
    def load(cls, path=None, overrides=None):
        values = dict(DEFAULTS)
        base = Path(".")
        if path is not None:
            path = Path(path)
            values.update(parse_config(path.read_text()))
            base = path.parent
        values.update(overrides or {})
        cfg = cls(values, base)
        cfg.validate()
        return cfg

    def __getitem__(self, key):
        return self.values[key]

    def validate(self):
        v = self.values
        known = set(DEFAULTS)
        for key in v:
            prefix = key.split(".", 1)[0]
            if key not in known and not ("." in key and prefix in _PARAM_PREFIXES):
                raise ConfigError(f"unknown config key {key!r}")
        if v["corpus"] not in ("synth", "manifest"):
            raise ConfigError("corpus must be 'synth' or 'manifest'")
        if v["corpus"] == "manifest" and not v["train_manifest"]:
            raise ConfigError("corpus = manifest needs train_manifest")
        if int(v["repeats"]) < 1:
            raise ConfigError("repeats must be at least 1")
        for f in self.families:
            if f not in FAMILIES:
                raise ConfigError(f"unknown family {f!r}")
        for s in self.subsets:
            SubDatasetKey.from_name(s)

    @property
    def families(self):
        return tuple(s.strip() for s in str(self.values["families"]).split(",") if s.strip())

    @property
    def subsets(self):
        return tuple(s.strip() for s in str(self.values["subsets"]).split(",") if s.strip())

    def model_params(self, family):
        prefix = {v: k for k, v in _PARAM_PREFIXES.items()}[family]
        return {k.split(".", 1)[1]: val for k, val in sorted(self.values.items())
                if k.startswith(prefix + ".")}

    def path(self, key):
        value = self.values[key]
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def dumps(self):
        return "".join(f"{k} = {self.values[k]!r}\n" if isinstance(self.values[k], str)
                       else f"{k} = {self.values[k]}\n" for k in sorted(self.values))


@dataclass
class EvalReport:
    """Per-class validation accuracies by family and per-class test accuracies, in percent."""

    repeats: int
    seeds: list
    families: tuple
    validation: dict = field(default_factory=dict)  # type -> family -> grid -> mean
    validation_runs: list = field(default_factory=list)  # one such dict per repeat
    test: dict = field(default_factory=dict)  # Audio/Power/All -> column -> accuracy
    test_counts: dict = field(default_factory=dict)
    detection: dict = field(default_factory=dict)
    decisions: list = field(default_factory=list)

    def validation_rows(self):
        rows = []
        for t in TYPE_ROWS:
            for fam in self.families + ("Fusion",):
                rows.append((t, FAMILY_SHORT[fam],
                             [self.validation.get(t, {}).get(fam, {}).get(g) for g in GRID_COLUMNS]))
        return rows

    def test_rows(self):
        rows = []
        for t in TYPE_ROWS + ("All",):
            vals = self.test.get(t, {})
            rows.append((t, [vals.get(c) for c in TEST_COLUMNS], vals.get("Overall")))
        return rows


def _fmt(x):
    return "-" if x is None or (isinstance(x, float) and np.isnan(x)) else f"{x:.1f}"


def _aligned(header, rows):
    widths = [max(len(str(r[i])) for r in [header] + rows) for i in range(len(header))]
    fmt = lambda r: "  ".join(str(c).rjust(w) if i > 1 else str(c).ljust(w)
                              for i, (c, w) in enumerate(zip(r, widths)))
    return "\n".join([fmt(header), fmt(["-" * w for w in widths])] + [fmt(r) for r in rows])


def format_report(report):
    """Human-readable text with the validation and test tables."""
    out = io.StringIO()
    runs = "run" if report.repeats == 1 else f"mean of {report.repeats} runs"
    out.write(f"Validation accuracy (%) per class, {runs}\n\n")
    header = ["Type", "Classifier"] + GRID_COLUMNS
    rows = [[t, name] + [_fmt(v) for v in vals] for t, name, vals in report.validation_rows()]
    out.write(_aligned(header, rows) + "\n\n")
    out.write("Test accuracy (%) of the fusion framework\n\n")
    header = ["Type", ""] + TEST_COLUMNS + ["Overall"]
    rows = [[t, ""] + [_fmt(v) for v in vals] + [_fmt(o)] for t, vals, o in report.test_rows()]
    out.write(_aligned(header, rows) + "\n")
    if report.detection:
        d = report.detection
        out.write(f"\nDetection: nominal {d['nominal_correct']}/{d['total']}, "
                  f"type {d['type_correct']}/{d['total']}\n")
    out.write(f"\nSeeds: {' '.join(str(s) for s in report.seeds)}\n")
    return out.getvalue()


def _tsv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def validation_tsv(report):
    rows = [[t, name] + [_fmt(v) for v in vals] for t, name, vals in report.validation_rows()]
    return _tsv(["type", "classifier"] + GRID_COLUMNS, rows)


def test_tsv(report):
    rows = [[t] + [_fmt(v) for v in vals] + [_fmt(o)] for t, vals, o in report.test_rows()]
    return _tsv(["type"] + TEST_COLUMNS + ["Overall"], rows)


def decisions_tsv(decisions):
    return _tsv(DECISION_COLUMNS, [[d[c] for c in DECISION_COLUMNS] for d in decisions])


def read_decisions(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh, delimiter="\t"))


def load_corpus(cfg):
    """``(train, test)`` lists of recordings, synthesised or read from manifests."""
    if cfg["corpus"] == "synth":
        grids = default_grid_params(cfg["audio_snr_db"], cfg["power_snr_db"])
        spec = CorpusSpec(grids=grids, per_grid_minutes=float(cfg["per_grid_minutes"]),
                          max_recording_minutes=float(cfg["max_recording_minutes"]),
                          test_minutes=float(cfg["test_minutes"]),
                          test_per_grid=int(cfg["test_per_grid"]),
                          unknown_tests=int(cfg["unknown_tests"]))
        corpus = synth_corpus_memory(spec, int(cfg["seed"]))
        return corpus["train"], corpus["test"]
    train_manifest = cfg.path("train_manifest")
    train = [load_recording(e.path, manifest=train_manifest) for e in read_manifest(train_manifest)]
    test = []
    if cfg["test_manifest"]:
        test_manifest = cfg.path("test_manifest")
        test = [load_recording(e.path, manifest=test_manifest) for e in read_manifest(test_manifest)]
    return train, test


def group_segments(recordings):
    """Five-minute training segments grouped by sub-dataset: ``{name: (X, y)}``."""
    groups = {}
    for rec in recordings:
        if rec.label is None or rec.rec_type is None:
            raise ValueError(f"{rec.source_id}: training recordings need a label and type")
        key = route(rec.rec_type, rec.nominal).name
        for seg in segment(rec):
            xs, ys = groups.setdefault(key, ([], []))
            xs.append(seg.samples)
            ys.append(str(rec.label))
    return {k: (np.asarray(xs), np.asarray(ys)) for k, (xs, ys) in sorted(groups.items())}


def mean_reports(runs, families):
    out = {}
    for t in TYPE_ROWS:
        for fam in families + ("Fusion",):
            for g in GRID_COLUMNS:
                vals = [r[t][fam][g] for r in runs if g in r.get(t, {}).get(fam, {})]
                vals = [v for v in vals if not np.isnan(v)]
                if vals:
                    out.setdefault(t, {}).setdefault(fam, {})[g] = float(np.mean(vals))
    return out


def train_repeat(groups, cfg, seed, subsets=None):
    """Train one pipeline per sub-dataset; returns ``({name: pipeline}, validation dict)``."""
    params = {f: cfg.model_params(f) for f in cfg.families}
    pipelines, validation = {}, {}
    for name, (X, y) in groups.items():
        if subsets is not None and name not in subsets:
            continue
        pipe = GridFusionClassifier(
            key=name, families=cfg.families, family_params=params,
            fusion_params=cfg.model_params("Fusion"), augment_snr_db=cfg["augment_snr_db"],
            threshold=float(cfg["threshold"]), random_state=derive_seed(seed, name))
        logger.info("training %s on %d segments", name, len(y))
        pipe.fit(X, y)
        pipelines[name] = pipe
        t = pipe.key_.rec_type.value
        for fam, per_class in pipe.validation_report_.items():
            validation.setdefault(t, {}).setdefault(fam, {}).update(per_class)
    return pipelines, validation


def evaluate_test(system, recordings, use_metadata=False):
    """Decide every test recording; returns decision rows and detection counts."""
    decisions = []
    det = {"total": 0, "nominal_correct": 0, "type_correct": 0}
    for rec in recordings:
        pred = system.predict_recording(rec, use_metadata=use_metadata)
        truth = UNKNOWN if rec.label is None else str(rec.label)
        det["total"] += 1
        det["nominal_correct"] += int(rec.nominal is None or pred.detection.nominal == rec.nominal)
        det["type_correct"] += int(rec.rec_type is None or pred.detection.rec_type == rec.rec_type)
        d = pred.decision
        probs = ",".join(f"{c}:{p:.4f}" for c, p in zip(pred.class_order, d.per_class))
        decisions.append({
            "path": rec.source_id, "true_label": truth,
            "true_type": "?" if rec.rec_type is None else str(rec.rec_type),
            "detected_type": str(pred.detection.rec_type),
            "detected_nominal": str(int(pred.detection.nominal)),
            "label": d.label, "confidence": f"{d.confidence:.4f}",
            "segments": str(pred.n_segments), "flagged": str(int(pred.flagged)),
            "probabilities": probs})
    return decisions, det


def test_accuracy(decisions):
    """Per-class accuracy incl. N and overall (= correct / total) by recording type."""
    out, counts = {}, {}
    groups = {"All": decisions}
    for t in TYPE_ROWS:
        groups[t] = [d for d in decisions if (d["true_type"] if d["true_type"] != "?" else
                                              d["detected_type"]) == t]
    for name, rows in groups.items():
        if not rows:
            continue
        acc = {}
        for c in TEST_COLUMNS:
            sel = [d for d in rows if d["true_label"] == c]
            if sel:
                acc[c] = 100.0 * sum(d["label"] == c for d in sel) / len(sel)
        correct = sum(d["label"] == d["true_label"] for d in rows)
        acc["Overall"] = 100.0 * correct / len(rows)
        out[name] = acc
        counts[name] = {"correct": correct, "total": len(rows)}
    return out, counts


def run_pipeline(cfg, out_dir=None):
    """Run the full experiment; writes artifacts to ``out_dir`` when given."""
    if not isinstance(cfg, RunConfig):
        cfg = RunConfig.load(cfg)
    root = int(cfg["seed"])
    repeats = int(cfg["repeats"])
    train, test = load_corpus(cfg)
    groups = group_segments(train)
    subsets = set(cfg.subsets)
    seeds = [derive_seed(root, "repeat", r) for r in range(repeats)]
    runs, system = [], None
    for r, seed in enumerate(seeds):
        logger.info("repeat %d/%d (seed %d)", r + 1, repeats, seed)
        pipelines, validation = train_repeat(groups, cfg, seed, subsets)
        runs.append(validation)
        if r == 0:
            system = ENFGridClassifier(pipelines, float(cfg["snr_threshold_db"]))
    report = EvalReport(repeats, seeds, cfg.families, mean_reports(runs, cfg.families), runs)
    test = [rec for rec in test
            if rec.rec_type is None or rec.nominal is None
            or route(rec.rec_type, rec.nominal).name in system.pipelines]
    if test:
        report.decisions, report.detection = evaluate_test(system, test, bool(cfg["use_test_metadata"]))
        report.test, report.test_counts = test_accuracy(report.decisions)
    if out_dir is not None:
        write_outputs(report, system, cfg, out_dir)
    return report, system


def write_outputs(report, system, cfg, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(format_report(report))
    (out / "validation.tsv").write_text(validation_tsv(report))
    (out / "test.tsv").write_text(test_tsv(report))
    (out / "decisions.tsv").write_text(decisions_tsv(report.decisions))
    (out / "config.txt").write_text(cfg.dumps())
    summary = {"repeats": report.repeats, "seeds": report.seeds, "validation": report.validation,
               "validation_runs": report.validation_runs, "test": report.test,
               "test_counts": report.test_counts, "detection": report.detection}
    (out / "report.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    save_bundle(system, out / "bundle")
