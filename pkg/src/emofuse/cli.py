"""Command-line front end.

    emofuse synth --n 600 --seed 7 --out run/
    emofuse score --modality text --manifest run/manifest.jsonl --out run/
    emofuse score --modality audio --manifest run/manifest.jsonl --out run/
    emofuse train-fusion --manifest run/manifest.jsonl --out run/
    emofuse predict --manifest run/manifest.jsonl --checkpoint run/fusion --out run/
    emofuse evaluate --scores run/scores_fused.csv --manifest run/manifest.jsonl --out run/
    emofuse compare --reports run/eval_*.json --out run/
    emofuse coherence --text run/scores_text.csv --audio run/scores_audio.csv --out run/
    emofuse plot --eval run/eval_*.json --text run/scores_text.csv --audio run/scores_audio.csv --out run/

Exit codes: 0 success, 2 usage/validation error, 3 I/O error, 4 numeric failure.
Settings resolve as built-in defaults < --config JSON < command-line flags.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any

from . import coherence, datamodel, fusion, ingest, metrics, pipeline, scorers, svg
from .datamodel import Taxonomy

log = logging.getLogger("emofuse")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

DEFAULTS: dict[str, dict[str, Any]] = {
    "ingest": {"channels": None, "max_videos": 50, "api_key_env": ingest.DEFAULT_KEY_ENV},
    "synth": {"n": 600, "text_info": 0.6, "audio_info": 0.6, "taxonomy": "iemocap", "balance": None},
    "score": {"modality": None, "manifest": None, "model": None, "l2": 1e-3, "epochs": 500, "lr": 0.5},
    "train-fusion": {"manifest": None, "epochs": 20, "lr": 1e-3, "batch": 16, "d_model": 64, "layers": 2,
                     "heads": 4, "d_ff": 128, "max_text_tokens": 32, "dropout": 0.0},
    "predict": {"manifest": None, "checkpoint": None, "raw": False},
    "evaluate": {"scores": None, "manifest": None, "splits": "validation,test"},
    "compare": {"reports": None},
    "coherence": {"text": None, "audio": None, "threshold": 0.5, "bin_width": 0.05},
    "plot": {"eval": None, "text": None, "audio": None, "threshold": 0.5},
}
GLOBAL_DEFAULTS = {"out": None, "seed": 0, "verbose": False}
PATH_KEYS = {"out", "manifest", "model", "checkpoint", "scores", "reports", "text", "audio", "eval"}


class UsageError(ValueError):
    pass


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _rel(p: str | Path, out: Path) -> str:
    return os.path.relpath(Path(p).resolve(), out)


class Run:
    """Resolved settings plus bookkeeping of input/output files for the provenance sidecar."""

    def __init__(self, command: str, cfg: dict, argv: list[str]):
        self.command = command
        self.cfg = cfg
        self.out = Path(cfg["out"])
        self.argv = argv
        self.inputs: list[Path] = []
        self.outputs: list[Path] = []

    def __getitem__(self, key):
        return self.cfg[key]

    def input(self, p: str | Path) -> Path:
        path = Path(p)
        if not path.exists():
            raise FileNotFoundError(f"input not found: {path}")
        self.inputs.append(path)
        return path

    def output(self, name: str | Path) -> Path:
        path = self.out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        self.outputs.append(path)
        return path

    def _portable(self, value, key=None):
        if key in PATH_KEYS and value is not None:
            if isinstance(value, list):
                return [_rel(v, self.out) for v in value]
            return _rel(value, self.out)
        return value

    def finish(self) -> None:
        cfg = {k: self._portable(v, k) for k, v in sorted(self.cfg.items())}
        argv = [_rel(a, self.out) if os.path.exists(a) else a for a in self.argv]

        def digest(paths):
            files = []
            for p in paths:
                files.extend(sorted(q for q in p.rglob("*") if q.is_file()) if p.is_dir() else [p])
            return {_rel(f, self.out): _sha256(f) for f in files}

        cfg_path = self.out / f"config.{self.command}.json"
        cfg_path.write_text(json.dumps(cfg, indent=1, sort_keys=True) + "\n", encoding="utf-8")
        prov = {
            "command": self.command,
            "argv": argv,
            "seed": self.cfg.get("seed"),
            "inputs": digest(self.inputs),
            "outputs": digest(self.outputs),
        }
        (self.out / f"provenance.{self.command}.json").write_text(
            json.dumps(prov, indent=1, sort_keys=True) + "\n", encoding="utf-8")


# -- commands -------------------------------------------------------------------------------

def cmd_ingest(run: Run) -> None:
    channels = run["channels"]
    if isinstance(channels, str):
        channels = [c for c in channels.split(",") if c]
    if not channels:
        raise UsageError("ingest needs --channels")
    query = ingest.YouTubeQuery(tuple(channels), int(run["max_videos"]), run["api_key_env"])
    records = ingest.fetch_channel_videos(query, ingest.UrllibClient())
    datamodel.save_manifest(records, run.output("manifest.jsonl"))
    print(f"{len(records)} videos -> {run.out / 'manifest.jsonl'}")


def cmd_synth(run: Run) -> None:
    bal = run["balance"]
    if isinstance(bal, str):
        bal = [float(x) for x in bal.split(",")]
    spec = ingest.SyntheticSpec(
        n_items=int(run["n"]), seed=int(run["seed"]),
        class_balance=tuple(bal) if bal else (1 / 6,) * 6,
        text_informativeness=float(run["text_info"]), audio_informativeness=float(run["audio_info"]),
        taxonomy=Taxonomy(run["taxonomy"]))
    records = ingest.make_synthetic_dataset(spec, run.out)
    run.output("manifest.jsonl")
    run.output("audio")
    print(f"{len(records)} synthetic items -> {run.out / 'manifest.jsonl'}")


def _records(run: Run, key: str = "manifest"):
    if not run[key]:
        raise UsageError(f"--{key} is required")
    path = run.input(run[key])
    return datamodel.load_manifest(path), path.parent


def cmd_score(run: Run) -> None:
    modality = run["modality"]
    if modality not in ("text", "audio"):
        raise UsageError("--modality must be 'text' or 'audio'")
    records, base = _records(run)
    model_dir = Path(run["model"]) if run["model"] else run.out / f"model_{modality}"
    hyper = scorers.Hyper(l2=float(run["l2"]), epochs=int(run["epochs"]), lr=float(run["lr"]), seed=int(run["seed"]))
    if (model_dir / "model.json").exists():
        model = scorers.load_model(run.input(model_dir))
    else:
        train = pipeline.by_split(records, "train")
        if modality == "text":
            model = scorers.train_text_baseline(train, hyper)
        else:
            model = scorers.train_audio_baseline(train, hyper, base)
        model.save(model_dir)
        run.outputs.append(model_dir)
    if modality == "text":
        matrix = scorers.score_text(model, records)
    else:
        matrix = scorers.score_audio(model, records, base)
    out = run.output(f"scores_{modality}.csv")
    datamodel.save_scores(matrix, out)
    print(f"{matrix.n_items} items scored ({modality}) -> {out}")


def cmd_train_fusion(run: Run) -> None:
    records, base = _records(run)
    cfg = fusion.FusionConfig(d_model=int(run["d_model"]), n_layers=int(run["layers"]), n_heads=int(run["heads"]),
                              d_ff=int(run["d_ff"]), max_text_tokens=int(run["max_text_tokens"]),
                              dropout=float(run["dropout"]), seed=int(run["seed"]))
    hyper = fusion.TrainHyper(lr=float(run["lr"]), batch=int(run["batch"]), epochs=int(run["epochs"]),
                              seed=int(run["seed"]))
    state = pipeline.train_fusion_on_manifest(records, base, cfg, hyper)
    ckpt = run.output("fusion")
    fusion.save_checkpoint(state.model, ckpt, step=state.step, val_accuracy=state.best_val_accuracy)
    fusion.save_metrics_trace(state.history, run.output("fusion_metrics.csv"))
    print(f"best validation accuracy {state.best_val_accuracy:.3f} (epoch {state.best_epoch}) -> {ckpt}")


def cmd_predict(run: Run) -> None:
    records, base = _records(run)
    ckpt = run["checkpoint"] or (run.out / "fusion")
    model = fusion.load_checkpoint(run.input(ckpt))
    matrix, raw = pipeline.predict_on_manifest(model, records, base)
    out = run.output("scores_fused.csv")
    datamodel.save_scores(matrix, out)
    if run["raw"]:
        _save_raw(raw, matrix, run.output("scores_fused_raw.csv"))
    print(f"{matrix.n_items} items scored (fused) -> {out}")


def _save_raw(raw, matrix, path: Path) -> None:
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("#modality=fused_raw_sigmoid\n")
        fh.write(f"#taxonomy={matrix.taxonomy.value}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", *matrix.item_ids])
        for name, row in zip(matrix.taxonomy.names, raw):
            w.writerow([name, *(format(float(x), ".12g") for x in row)])


def cmd_evaluate(run: Run) -> None:
    if not run["scores"]:
        raise UsageError("--scores is required")
    scores = datamodel.load_scores(run.input(run["scores"]))
    records, _ = _records(run)
    splits = run["splits"].split(",") if isinstance(run["splits"], str) else list(run["splits"])
    for split in splits:
        recs = records if split == "all" else pipeline.by_split(records, split)
        if not recs:
            log.warning("split %s is empty; skipped", split)
            continue
        sub = scores.subset([r.id for r in recs])
        rep = metrics.evaluate(sub, pipeline.gold_labels(recs), split)
        stem = f"{scores.modality.value}_{split}"
        run.output(f"eval_{stem}.json").write_text(rep.to_json() + "\n", encoding="utf-8")
        metrics.save_confusion_csv(rep.confusion, run.output(f"confusion_{stem}.csv"))
        metrics.save_roc_csv(rep, run.output(f"roc_{stem}.csv"))
        auc = "n/a" if rep.macro_auroc is None else f"{100 * rep.macro_auroc:.1f}%"
        print(f"{stem}: accuracy {100 * rep.accuracy:.1f}%  macro-AUROC {auc}")


def _listify(v) -> list[str]:
    if v is None:
        return []
    return v.split(",") if isinstance(v, str) else list(v)


def cmd_compare(run: Run) -> None:
    paths = _listify(run["reports"])
    if not paths:
        raise UsageError("--reports is required")
    grouped: dict[str, dict[str, dict]] = {}
    for p in paths:
        d = json.loads(run.input(p).read_text(encoding="utf-8"))
        grouped.setdefault(d["modality"], {})[d["split"]] = metrics.report_from_dict(d)
    rep = metrics.compare_modalities(grouped)
    run.output("comparison.json").write_text(rep.to_json() + "\n", encoding="utf-8")
    run.output("comparison.txt").write_text(rep.render() + "\n", encoding="utf-8")
    print(rep.render())
    print(f"fused >= each unimodal (test accuracy): {rep.fused_beats_unimodal}")


def cmd_coherence(run: Run) -> None:
    if not run["text"] or not run["audio"]:
        raise UsageError("--text and --audio score files are required")
    text = datamodel.load_scores(run.input(run["text"]))
    audio = datamodel.load_scores(run.input(run["audio"]))
    rep = coherence.coherence_report(text, audio, float(run["threshold"]))
    rep.to_csv(run.output("coherence.csv"))
    run.output("coherence.json").write_text(rep.to_json() + "\n", encoding="utf-8")
    bw = float(run["bin_width"])
    coherence.save_tendency_csv([coherence.tendency_summary(m, bw) for m in (text, audio)],
                                run.output("tendency.csv"))
    for row in rep.rows:
        r = "undefined" if row.r is None else f"{row.r:.3f}"
        print(f"{row.emotion:>12s}  r={r}  {row.verdict}")


def cmd_plot(run: Run) -> None:
    import csv

    made = 0
    for p in _listify(run["eval"]):
        d = json.loads(run.input(p).read_text(encoding="utf-8"))
        stem = f"{d['modality']}_{d['split']}"
        names = list(d["per_class"])
        series = {n: (c["fpr"], c["tpr"]) for n, c in d.get("roc_points", {}).items()}
        title = f"ROC {stem} (macro AUROC {d['macro_auroc']:.3f})" if d["macro_auroc"] is not None else f"ROC {stem}"
        svg.line_plot(series, title, "false positive rate", "true positive rate",
                      diagonal=True).save(run.output(f"plot_roc_{stem}.svg"))
        svg.heatmap(d["confusion"], names, f"confusion {stem} (rows: actual)").save(
            run.output(f"plot_confusion_{stem}.svg"))
        made += 2
    if run["text"] and run["audio"]:
        text = datamodel.load_scores(run.input(run["text"]))
        audio = datamodel.load_scores(run.input(run["audio"]))
        rep = coherence.coherence_report(text, audio, float(run["threshold"]))
        names = text.taxonomy.names
        notes = {r.emotion: ("r undefined" if r.r is None else f"r={r.r:.3f}") for r in rep.rows}
        panels = {n: (text.values[e], audio.values[e]) for e, n in enumerate(names)}
        svg.scatter_grid(panels, "audio vs text emotion scores", "text score", "audio score",
                         notes).save(run.output("plot_coherence.svg"))
        with open(run.output("plot_coherence.csv"), "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["item_id", "emotion", "text", "audio"])
            for e, n in enumerate(names):
                for i, item in enumerate(text.item_ids):
                    w.writerow([item, n, format(text.values[e, i], ".12g"), format(audio.values[e, i], ".12g")])
        summaries = [coherence.tendency_summary(m) for m in (text, audio)]
        series = {}
        for s in summaries:
            series[f"{s.modality.value} mean"] = [s.by_emotion[n].mean for n in names]
            series[f"{s.modality.value} median"] = [s.by_emotion[n].median for n in names]
        svg.grouped_bars(names, series, "central tendency by emotion", "score").save(run.output("plot_tendency.svg"))
        coherence.save_tendency_csv(summaries, run.output("plot_tendency.csv"))
        made += 2
    if not made:
        raise UsageError("plot needs --eval reports and/or --text with --audio")
    print(f"plots written to {run.out}")


COMMANDS = {
    "ingest": cmd_ingest, "synth": cmd_synth, "score": cmd_score, "train-fusion": cmd_train_fusion,
    "predict": cmd_predict, "evaluate": cmd_evaluate, "compare": cmd_compare, "coherence": cmd_coherence,
    "plot": cmd_plot,
}


# -- argument parsing ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=S, help="JSON file of settings (flat or per-command sections)")
    common.add_argument("--out", default=S, help="output directory")
    common.add_argument("--seed", type=int, default=S)
    common.add_argument("--verbose", action="store_true", default=S)

    parser = argparse.ArgumentParser(prog="emofuse", description="multimodal emotion characterization toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="fetch YouTube metadata into a manifest")
    p.add_argument("--channels", default=S, help="comma-separated channel ids")
    p.add_argument("--max-videos", dest="max_videos", type=int, default=S)
    p.add_argument("--api-key-env", dest="api_key_env", default=S)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic IEMOCAP-style dataset")
    p.add_argument("--n", type=int, default=S)
    p.add_argument("--text-info", dest="text_info", type=float, default=S)
    p.add_argument("--audio-info", dest="audio_info", type=float, default=S)
    p.add_argument("--taxonomy", choices=[t.value for t in Taxonomy], default=S)
    p.add_argument("--balance", default=S, help="six comma-separated class probabilities")

    p = sub.add_parser("score", parents=[common], help="unimodal scores (trains a baseline if needed)")
    p.add_argument("--modality", choices=["text", "audio"], default=S)
    p.add_argument("--manifest", default=S)
    p.add_argument("--model", default=S, help="baseline model directory (loaded if present, else trained there)")
    p.add_argument("--l2", type=float, default=S)
    p.add_argument("--epochs", type=int, default=S)
    p.add_argument("--lr", type=float, default=S)

    p = sub.add_parser("train-fusion", parents=[common], help="train the text+spectrogram fusion model")
    p.add_argument("--manifest", default=S)
    for flag, typ in (("epochs", int), ("lr", float), ("batch", int), ("d-model", int), ("layers", int),
                      ("heads", int), ("d-ff", int), ("max-text-tokens", int), ("dropout", float)):
        p.add_argument(f"--{flag}", dest=flag.replace("-", "_"), type=typ, default=S)

    p = sub.add_parser("predict", parents=[common], help="fused scores from a checkpoint")
    p.add_argument("--manifest", default=S)
    p.add_argument("--checkpoint", default=S)
    p.add_argument("--raw", action="store_true", default=S, help="also write raw sigmoid outputs")

    p = sub.add_parser("evaluate", parents=[common], help="accuracy, confusion and ROC per split")
    p.add_argument("--scores", default=S)
    p.add_argument("--manifest", default=S)
    p.add_argument("--splits", default=S, help="comma-separated: train,validation,test,all")

    p = sub.add_parser("compare", parents=[common], help="unimodal vs fused comparison table")
    p.add_argument("--reports", nargs="+", default=S)

    p = sub.add_parser("coherence", parents=[common], help="per-emotion text/audio correlation")
    p.add_argument("--text", default=S)
    p.add_argument("--audio", default=S)
    p.add_argument("--threshold", type=float, default=S)
    p.add_argument("--bin-width", dest="bin_width", type=float, default=S)

    p = sub.add_parser("plot", parents=[common], help="SVG/CSV figures from reports and scores")
    p.add_argument("--eval", nargs="+", default=S)
    p.add_argument("--text", default=S)
    p.add_argument("--audio", default=S)
    p.add_argument("--threshold", type=float, default=S)
    return parser


def resolve(command: str, flags: dict, parser: argparse.ArgumentParser) -> dict:
    cfg = dict(GLOBAL_DEFAULTS)
    cfg.update(DEFAULTS[command])
    if "config" in flags:
        try:
            file_cfg = json.loads(Path(flags.pop("config")).read_text(encoding="utf-8"))
        except ValueError as exc:
            raise UsageError(f"config file is not valid JSON: {exc}") from None
        known = set(cfg)
        cfg.update({k: v for k, v in file_cfg.items() if k in known and not isinstance(v, dict)})
        section = file_cfg.get(command, {})
        unknown = set(section) - known
        if unknown:
            raise UsageError(f"unknown settings for {command}: {sorted(unknown)}")
        cfg.update(section)
    cfg.update(flags)
    if not cfg.get("out"):
        parser.error(f"{command}: --out is required")
    for k in PATH_KEYS:
        v = cfg.get(k)
        if isinstance(v, list):
            cfg[k] = [str(Path(x).resolve()) for x in v]
        elif v:
            cfg[k] = str(Path(v).resolve())
    return cfg


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    flags = {k: v for k, v in vars(ns).items() if k != "command"}
    try:
        cfg = resolve(ns.command, flags, parser)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    logging.basicConfig(level=logging.INFO if cfg["verbose"] else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        Path(cfg["out"]).mkdir(parents=True, exist_ok=True)
        run = Run(ns.command, cfg, argv)
        COMMANDS[ns.command](run)
        run.finish()
    except (fusion.NumericFailure, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ingest.QuotaError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ingest.IngestError as exc:
        code = EXIT_USAGE if isinstance(exc, (ingest.ConfigurationError, ingest.ApiParseError)) else EXIT_IO
        print(f"error: {exc}", file=sys.stderr)
        return code
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
