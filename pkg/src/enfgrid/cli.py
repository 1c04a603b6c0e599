"""``enfgrid`` command line.

Every subcommand accepts ``--config``, ``--seed`` and ``--out``. Exit status
is 0 on success; failures exit with a stage code (see ``EXIT_CODES``).
"""

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .detect import detect
from .evaluation import (ConfigError, EvalReport, RunConfig, format_report, group_segments,
                         load_corpus, mean_reports, parse_value, run_pipeline, train_repeat,
                         validation_tsv)
from .labels import SubDatasetKey, route
from .nas import OvATask, SearchSpace, search
from .preprocess import SpectrogramFocuser, band_mask, write_focused
from .signal_io import load_recording, read_manifest, read_segment, segment, write_segment
from .synthgrid import default_grid_params, derive_seed, synth_corpus
from .system import ENFGridClassifier, load_bundle, save_bundle

logger = logging.getLogger("enfgrid")

EXIT_CODES = {"usage": 2, "config": 3, "synth": 10, "ingest": 11, "preprocess": 12, "detect": 13,
              "train": 14, "nas": 15, "predict": 16, "eval": 17}


class StageError(RuntimeError):
    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def _config(args):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    for item in args.set or []:
        key, _, value = item.partition("=")
        overrides[key.strip()] = parse_value(value)
    try:
        return RunConfig.load(args.config, overrides)
    except (ConfigError, OSError, ValueError) as exc:
        raise StageError("config", str(exc)) from exc


def _out(args, default):
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_tsv(path, header, rows):
    fh = sys.stdout if path is None else open(path, "w", newline="")
    try:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()


def cmd_synth(args):
    cfg = _config(args)
    out = _out(args, "corpus")
    grids = default_grid_params(cfg["audio_snr_db"], cfg["power_snr_db"])
    train, test = synth_corpus(grids, float(cfg["per_grid_minutes"]), int(cfg["seed"]), out,
                               max_recording_minutes=float(cfg["max_recording_minutes"]),
                               test_minutes=float(cfg["test_minutes"]),
                               test_per_grid=int(cfg["test_per_grid"]),
                               unknown_tests=int(cfg["unknown_tests"]))
    print(train)
    print(test)


def _recordings(args, cfg):
    if args.inputs:
        return [load_recording(p) for p in args.inputs]
    manifest = args.manifest or cfg.path("train_manifest")
    if manifest is None:
        raise ValueError("give recording paths, --manifest, or train_manifest in the config")
    return [load_recording(e.path, manifest=manifest) for e in read_manifest(manifest)]


def cmd_ingest(args):
    cfg = _config(args)
    out = _out(args, "segments")
    rows = []
    for rec in _recordings(args, cfg):
        for seg in segment(rec):
            name = f"{rec.source_id}_{seg.index:02d}.enfseg"
            write_segment(out / name, seg)
            rows.append([name, seg.label or "?", seg.rec_type or "?", rec.source_id, seg.index])
    _write_tsv(out / "segments.tsv", ["file", "label", "rec_type", "parent", "index"], rows)
    print(f"{len(rows)} segments written to {out}")


def cmd_preprocess(args):
    _config(args)
    src = Path(args.inputs[0] if args.inputs else "segments")
    out = _out(args, "spectrograms")
    groups = {}
    for path in sorted(src.glob("*.enfseg")):
        seg = read_segment(path)
        if seg.nominal is None:
            raise ValueError(f"{path}: nominal frequency unknown; label the recording or run detect")
        name = route(seg.rec_type, seg.nominal).name if seg.rec_type else f"nominal{int(seg.nominal)}"
        groups.setdefault((name, int(seg.nominal)), []).append((path.name, seg))
    for (name, nominal), items in sorted(groups.items()):
        X = np.asarray([s.samples for _, s in items])
        focuser = SpectrogramFocuser(nominal=nominal).fit(X)
        grids = focuser.transform(X)
        freqs = focuser.spec_params.freq_axis(focuser.sample_rate)
        rows = freqs[band_mask(freqs, nominal, focuser.halfwidth)]
        times = (np.arange(grids.shape[2]) * focuser.hop + focuser.window_len / 2) / focuser.sample_rate
        meta = [{"file": f, "label": None if s.label is None else str(s.label)} for f, s in items]
        write_focused(out / f"{name}.enfspc", grids, rows, times, nominal, focuser.halfwidth,
                      focuser.spec_params, items=meta)
        print(f"{name}: {grids.shape[0]} grids of {grids.shape[1]}x{grids.shape[2]}")


def cmd_detect(args):
    cfg = _config(args)
    rows = []
    for rec in _recordings(args, cfg):
        rep = detect(rec, float(cfg["snr_threshold_db"]))
        rows.append([rec.source_id] + rep.as_row())
    path = None if args.out is None else _out(args, ".") / "detect.tsv"
    _write_tsv(path, ["path", "rec_type", "nominal", "nominal_margin", "snr_db"], rows)


def cmd_train(args):
    cfg = _config(args)
    out = _out(args, "model")
    train, _ = load_corpus(cfg)
    seed = derive_seed(int(cfg["seed"]), "repeat", 0)
    pipelines, validation = train_repeat(group_segments(train), cfg, seed, set(cfg.subsets))
    save_bundle(ENFGridClassifier(pipelines, float(cfg["snr_threshold_db"])), out / "bundle")
    report = EvalReport(1, [seed], cfg.families, mean_reports([validation], cfg.families))
    (out / "validation.tsv").write_text(validation_tsv(report))
    print(format_report(report).split("\n\nTest")[0])


def cmd_nas(args):
    cfg = _config(args)
    out = _out(args, "nas")
    train, _ = load_corpus(cfg)
    groups = group_segments(train)
    subset = args.subset
    if subset not in groups:
        raise ValueError(f"no training data for sub-dataset {subset!r}")
    X, y = groups[subset]
    nominal = int(SubDatasetKey.from_name(subset).nominal)
    grids = SpectrogramFocuser(nominal=nominal).fit(X).transform(X)
    task = OvATask(grids, y, seed=int(cfg["seed"]), base_params=cfg.model_params("CNN"))
    best, trials = search(SearchSpace(), args.budget, task, seed=int(cfg["seed"]),
                          min_epochs=args.min_epochs, max_epochs=args.max_epochs,
                          log_path=out / "trials.tsv")
    print(f"best trial {best.index}: score {best.score:.4f} " +
          " ".join(f"{k}={v:.6g}" for k, v in best.params.items()))


def cmd_predict(args):
    _config(args)
    if not args.bundle:
        raise ValueError("--bundle is required")
    system = load_bundle(args.bundle)
    rows = []
    for path in args.inputs:
        rec = load_recording(path)
        pred = system.predict_recording(rec)
        d = pred.decision
        probs = ",".join(f"{c}:{p:.4f}" for c, p in zip(pred.class_order, d.per_class))
        rows.append([str(path), str(pred.detection.rec_type), str(int(pred.detection.nominal)),
                     d.label, f"{d.confidence:.4f}", int(pred.flagged), probs])
    path = None if args.out is None else _out(args, ".") / "decisions.tsv"
    _write_tsv(path, ["path", "detected_type", "detected_nominal", "label", "confidence",
                      "flagged", "probabilities"], rows)


def cmd_eval(args):
    cfg = _config(args)
    out = _out(args, "results")
    report, _ = run_pipeline(cfg, out)
    print(format_report(report))


COMMANDS = {"synth": cmd_synth, "ingest": cmd_ingest, "preprocess": cmd_preprocess,
            "detect": cmd_detect, "train": cmd_train, "nas": cmd_nas, "predict": cmd_predict,
            "eval": cmd_eval}
HELP = {"synth": "write a synthetic corpus (WAV files and manifests)",
        "ingest": "split recordings into five-minute segment files",
        "preprocess": "turn segment files into focused spectrogram files",
        "detect": "report nominal frequency and recording type per recording",
        "train": "train banks and fusion networks and save a bundle",
        "nas": "hyperparameter search for the CNN",
        "predict": "label recordings with a saved bundle",
        "eval": "run the full experiment and write reports"}


def build_parser():
    parser = argparse.ArgumentParser(prog="enfgrid", description="Grid-of-origin classification "
                                     "from electric network frequency traces.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int, help="root seed (overrides the config)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config entry; repeatable")
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("ingest", "detect", "predict", "preprocess"):
            p.add_argument("inputs", nargs="*", help="recording files (or a segment directory)")
        if name in ("ingest", "detect"):
            p.add_argument("--manifest", help="corpus manifest to read recordings from")
        if name == "predict":
            p.add_argument("--bundle", help="model bundle directory")
        if name == "nas":
            p.add_argument("--subset", default="audio60", help="sub-dataset to search on")
            p.add_argument("--budget", type=int, default=20, help="number of trials")
            p.add_argument("--min-epochs", type=int, default=10)
            p.add_argument("--max-epochs", type=int, default=40)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except StageError as exc:
        print(f"enfgrid: {exc}", file=sys.stderr)
        return EXIT_CODES[exc.stage]
    except Exception as exc:
        logger.debug("failure", exc_info=True)
        print(f"enfgrid: [{args.command}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CODES[args.command]
    return 0


if __name__ == "__main__":
    sys.exit(main())
