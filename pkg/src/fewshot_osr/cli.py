"""Command-line pipeline. Every stage reads and writes explicit artifact paths.

Exit codes: 0 ok, 1 unexpected failure, 2 usage error, 3 missing file,
4 dimension mismatch, 5 invalid data or configuration.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from .calibration import calibrate
from .config import RunConfig
from .data_io import (SynthConfig, dumps_exact, generate_synthetic, read_embeddings, read_json,
                      stack, write_dataset, write_embeddings, write_json)
from .embedder import init_model, load_model, save_model, train
from .errors import DataError, DimensionError
from .evaluation import end_to_end_report, write_csv
from .gallery import enroll, load_gallery, save_gallery
from .pipeline import embed_records, embedding_separation, excluding, known_records
from .recognizer import NOVEL, RecognitionResult, recognize_batch

log = logging.getLogger("fewshot_osr")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_MISSING, EXIT_DIM, EXIT_DATA = 0, 1, 2, 3, 4, 5

_RUN = RunConfig()
_SYN = SynthConfig()


# flag groups ------------------------------------------------------------------

def _add_seed(p):
    p.add_argument("--seed", type=int, default=_RUN.seed, help="RNG seed")


def _add_p(p):
    p.add_argument("--p-norm", type=float, default=_RUN.p_norm, help="p of the p-norm distance")


def _add_k(p):
    p.add_argument("--k", type=int, default=_RUN.k, help="neighbors averaged for the Novel score")


def _add_synth(p):
    p.add_argument("--n-train-classes", type=int, default=_SYN.n_train_classes, help="classes used to train the embedder")
    p.add_argument("--n-dev-known", type=int, default=_SYN.n_dev_known, help="Known classes in the development split")
    p.add_argument("--n-dev-novel", type=int, default=_SYN.n_dev_novel, help="Novel classes in the development split")
    p.add_argument("--n-test-known", type=int, default=_SYN.n_test_known, help="Known classes in the test split")
    p.add_argument("--n-test-novel", type=int, default=_SYN.n_test_novel, help="Novel classes in the test split")
    p.add_argument("--samples-per-class", type=int, default=_SYN.samples_per_class, help="samples drawn per class")
    p.add_argument("--feature-dim", type=int, default=_SYN.feature_dim, help="raw feature dimension")
    p.add_argument("--cluster-spread", type=float, default=_SYN.cluster_spread, help="per-coordinate std of each cluster")
    p.add_argument("--cluster-separation", type=float, default=_SYN.cluster_separation, help="minimum distance between class centers")
    p.add_argument("--train-fraction", type=float, default=_SYN.train_fraction,
                   help="per-class share of training-class samples used for fitting")


def _add_train(p):
    p.add_argument("--margin", type=float, default=_RUN.margin, help="triplet loss margin")
    p.add_argument("--learning-rate", type=float, default=_RUN.learning_rate, help="Adam learning rate")
    p.add_argument("--epochs", type=int, default=_RUN.epochs, help="passes over the training anchors")
    p.add_argument("--batch-size", type=int, default=_RUN.batch_size, help="anchors per minibatch")
    p.add_argument("--mining", choices=["random", "batch_hard"], default=_RUN.mining, help="triplet selection within a batch")
    p.add_argument("--hidden", type=int, nargs="*", default=list(_RUN.hidden),
                   help="hidden layer widths (relu)")
    p.add_argument("--embed-dim", type=int, default=_RUN.embed_dim, help="embedding dimension")


def _add_recognize(p):
    p.add_argument("--vote-k", type=int, default=None, help="neighbors that vote (default: --k)")
    p.add_argument("--include-enrolled", action="store_true",
                   help="also score records whose id is in the gallery")


def _synth_config(a) -> SynthConfig:
    return SynthConfig(a.n_train_classes, a.n_dev_known, a.n_dev_novel, a.n_test_known,
                       a.n_test_novel, a.samples_per_class, a.feature_dim, a.cluster_spread,
                       a.cluster_separation, a.train_fraction, a.seed)


def _run_config(a) -> RunConfig:
    kw = {f.name: getattr(a, f.name) for f in fields(RunConfig) if hasattr(a, f.name)}
    return RunConfig(**kw)


def _require(*paths):
    for path in paths:
        if path is not None and not Path(path).exists():
            raise FileNotFoundError(f"required file not found: {path}")


def _sibling(path, suffix: str) -> Path:
    path = Path(path)
    return path.with_name(path.stem + suffix)


# stages -----------------------------------------------------------------------

def cmd_synth(a) -> None:
    cfg = _synth_config(a)
    write_dataset(generate_synthetic(cfg), a.out_dir, cfg)
    log.info("wrote synthetic dataset to %s", a.out_dir)


def cmd_train(a) -> None:
    _require(a.train, a.val)
    run = _run_config(a)
    recs = read_embeddings(a.train)
    if not recs:
        raise DataError(f"{a.train}: no training records")
    model = init_model(recs[0].vector.size, run.hidden, run.embed_dim, run.seed)
    result = train(model, stack(recs), [r.label for r in recs], run.train_config())
    save_model(result.model, a.out)
    trace = a.trace or _sibling(a.out, "_loss.csv")
    write_csv([["epoch", "mean_loss"], *[[i + 1, v] for i, v in enumerate(result.loss_trace)]], trace)
    if a.val:
        val = read_embeddings(a.val)
        if val:
            E = stack(embed_records(result.model, val))
            intra, inter = embedding_separation(E, [r.label for r in val], run.p_norm)
            log.info("validation mean intra-class %.4f, inter-class %.4f", intra, inter)


def cmd_embed(a) -> None:
    _require(a.model, a.input)
    model = load_model(a.model)
    recs = read_embeddings(a.input)
    if recs and recs[0].vector.size != model.input_dim:
        raise DimensionError(f"{a.input}: features have dim {recs[0].vector.size}, "
                             f"model expects {model.input_dim}")
    write_embeddings(embed_records(model, recs), a.out)


def cmd_enroll(a) -> None:
    _require(a.embeddings)
    recs = known_records(read_embeddings(a.embeddings))
    if not recs:
        raise DataError(f"{a.embeddings}: no Known (novelty false/null) records to enroll")
    save_gallery(enroll(recs, a.n_shots, a.seed), a.out, a.p_norm)


def cmd_calibrate(a) -> None:
    _require(a.gallery, a.embeddings)
    gallery, _ = load_gallery(a.gallery)
    dev = read_embeddings(a.embeddings)
    if not a.include_enrolled:
        dev = excluding(dev, gallery)
    if not any(r.novelty for r in dev):
        raise DataError("calibrate needs development records with novelty=true (Novel samples); none found")
    if all(r.novelty for r in dev):
        raise DataError("calibrate needs development records with novelty=false (Known samples); none found")
    result, samples = calibrate(gallery, dev, a.k, a.p_norm, a.bins)
    result.extra.update({"k": a.k, "p": a.p_norm, "n_dev": len(samples)})
    write_json(a.out, result.to_dict())
    _write_roc_csv(result.to_dict(), a.roc_csv or _sibling(a.out, "_roc.csv"))
    _write_hist_csv(result.to_dict(), a.hist_csv or _sibling(a.out, "_hist.csv"))


def _write_roc_csv(cal: dict, path) -> None:
    write_csv([["threshold", "tpr", "fpr"], *[[q["threshold"], q["tpr"], q["fpr"]] for q in cal["roc"]]], path)


def _write_hist_csv(cal: dict, path) -> None:
    h = cal["histograms"]
    rows = [["bin_left", "bin_right", "known", "novel"]]
    for i in range(len(h["known"])):
        rows.append([h["edges"][i], h["edges"][i + 1], h["known"][i], h["novel"][i]])
    write_csv(rows, path)


def cmd_recognize(a) -> None:
    _require(a.gallery, a.embeddings, a.calibration)
    if a.threshold_override is not None:
        threshold = a.threshold_override
    elif a.calibration:
        threshold = float(read_json(a.calibration)["threshold"])
    else:
        raise DataError("recognize needs --calibration or --threshold-override")
    gallery, _ = load_gallery(a.gallery)
    recs = read_embeddings(a.embeddings)
    if not a.include_enrolled:
        recs = excluding(recs, gallery)
    if recs and recs[0].vector.size != gallery.dim:
        raise DimensionError(f"{a.embeddings}: vectors have dim {recs[0].vector.size}, "
                             f"gallery has {gallery.dim}")
    results = recognize_batch(gallery, threshold, [r.vector for r in recs], a.k, a.p_norm,
                              a.vote_k, [r.id for r in recs])
    Path(a.out).write_text("".join(dumps_exact(r.to_dict()) + "\n" for r in results))


def read_results(path) -> list[RecognitionResult]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                novel = d["verdict"] == NOVEL
                out.append(RecognitionResult(novel, None if novel else d["label"],
                                             float(d["mean_distance"]), d.get("votes"), None, d["id"]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise DataError(f"{path}:{lineno}: malformed result ({e})") from e
    return out


def cmd_evaluate(a) -> None:
    _require(a.embeddings, a.results)
    truth = {r.id: r for r in read_embeddings(a.embeddings)}
    results = read_results(a.results)
    missing = [r.id for r in results if r.id not in truth]
    if missing:
        raise DataError(f"result id {missing[0]!r} has no ground-truth record")
    if any(truth[r.id].novelty is None for r in results):
        raise DataError("ground-truth records need novelty flags")
    rep = end_to_end_report([truth[r.id].label for r in results],
                            [truth[r.id].novelty for r in results], results)
    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    views = {"bipartition": (rep.bipartition.confusion, rep.bipartition.f1),
             "known_types": rep.known_types, "all_classes": rep.all_classes}
    for name, (cm, f1) in views.items():
        write_csv(cm.to_rows(), out / f"{name}_confusion.csv")
        write_csv(f1.to_rows(), out / f"{name}_f1.csv")
    write_json(out / "evaluation.json", {
        "summary": rep.summary(),
        **{name: {"per_class_f1": f1.per_class_f1, "support": f1.support,
                  "weighted_f1": f1.weighted_f1} for name, (cm, f1) in views.items()},
    })
    s = rep.summary()
    print(f"bipartition weighted F1 {s['bipartition_weighted_f1']:.4f}  "
          f"known-type weighted F1 {s['known_types_weighted_f1']:.4f}")


def cmd_report(a) -> None:
    _require(a.calibration, a.evaluation_dir)
    cal = read_json(a.calibration)
    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_roc_csv(cal, out / "roc.csv")
    _write_hist_csv(cal, out / "histograms.csv")
    ev = read_json(Path(a.evaluation_dir) / "evaluation.json")
    summary = {"threshold": cal["threshold"], "youden_j": cal["youden_j"], "tpr": cal["tpr"],
               "fpr": cal["fpr"], "auc": cal["auc"], **ev["summary"]}
    write_csv([["metric", "value"], *[[k, v] for k, v in summary.items()]], out / "summary.csv")
    for src in sorted(Path(a.evaluation_dir).glob("*.csv")):
        (out / src.name).write_bytes(src.read_bytes())


def cmd_run(a) -> None:
    """All stages in sequence under one output directory."""
    out = Path(a.out_dir)
    data, art = out / "data", out / "artifacts"
    art.mkdir(parents=True, exist_ok=True)
    ns = argparse.Namespace(**vars(a))

    def step(fn, **kw):
        for k, v in kw.items():
            setattr(ns, k, v)
        fn(ns)

    step(cmd_synth, out_dir=data)
    step(cmd_train, train=data / "train.jsonl", val=data / "val.jsonl", out=art / "model.json",
         trace=art / "loss_trace.csv")
    for split in ("dev", "test"):
        step(cmd_embed, model=art / "model.json", input=data / f"{split}.jsonl",
             out=art / f"{split}_emb.jsonl")
        step(cmd_enroll, embeddings=art / f"{split}_emb.jsonl", out=art / f"{split}_gallery.jsonl")
    step(cmd_calibrate, gallery=art / "dev_gallery.jsonl", embeddings=art / "dev_emb.jsonl",
         out=art / "calibration.json", roc_csv=None, hist_csv=None)
    step(cmd_recognize, gallery=art / "test_gallery.jsonl", embeddings=art / "test_emb.jsonl",
         calibration=art / "calibration.json", out=art / "results.jsonl")
    step(cmd_evaluate, embeddings=art / "test_emb.jsonl", results=art / "results.jsonl",
         out_dir=art / "evaluation")
    step(cmd_report, calibration=art / "calibration.json", evaluation_dir=art / "evaluation",
         out_dir=out / "report")


# parser -----------------------------------------------------------------------

class _Formatter(argparse.ArgumentDefaultsHelpFormatter):
    # the stock formatter skips options without help text
    def _get_help_string(self, action):
        text = action.help or ""
        if (action.option_strings and action.default not in (None, argparse.SUPPRESS)
                and action.nargs != 0 and "%(default)" not in text):
            text += " (default: %(default)s)"
        return text


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    fmt = _Formatter
    parser = _Parser(prog="fewshot-osr", formatter_class=fmt,
                     description="Triplet-trained embedder with few-shot open-set recognition.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic class-disjoint dataset", formatter_class=fmt)
    p.add_argument("--out-dir", required=True, help="output directory")
    _add_synth(p)
    _add_seed(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the embedder with triplet loss", formatter_class=fmt)
    p.add_argument("--train", required=True, help="training feature records (JSONL)")
    p.add_argument("--val", default=None, help="optional held-out records for a separation check")
    p.add_argument("--out", required=True, help="model checkpoint (JSON)")
    p.add_argument("--trace", default=None, help="loss trace CSV (default: <out>_loss.csv)")
    _add_train(p)
    _add_p(p)
    _add_seed(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("embed", help="map feature records through a checkpoint", formatter_class=fmt)
    p.add_argument("--model", required=True, help="model checkpoint (JSON)")
    p.add_argument("--input", required=True, help="feature records (JSONL)")
    p.add_argument("--out", required=True, help="embedding records (JSONL)")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("enroll", help="build the few-shot gallery from Known records", formatter_class=fmt)
    p.add_argument("--embeddings", required=True, help="embedded records; novelty=true ones are skipped")
    p.add_argument("--out", required=True, help="gallery JSONL (manifest written alongside)")
    p.add_argument("--n-shots", type=int, default=_RUN.n_shots, help="enrolled vectors per class")
    _add_p(p)
    _add_seed(p)
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("calibrate", help="choose the Known/Novel threshold on a dev set",
                       formatter_class=fmt)
    p.add_argument("--gallery", required=True, help="gallery JSONL written by enroll")
    p.add_argument("--embeddings", required=True, help="dev embeddings with novelty flags")
    p.add_argument("--out", required=True, help="calibration result (JSON)")
    p.add_argument("--roc-csv", default=None, help="default: <out>_roc.csv")
    p.add_argument("--hist-csv", default=None, help="default: <out>_hist.csv")
    p.add_argument("--bins", type=int, default=_RUN.bins, help="histogram bins")
    p.add_argument("--include-enrolled", action="store_true",
                   help="also score records whose id is in the gallery")
    _add_k(p)
    _add_p(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("recognize", help="classify records as Novel or a Known class",
                       formatter_class=fmt)
    p.add_argument("--gallery", required=True, help="gallery JSONL written by enroll")
    p.add_argument("--embeddings", required=True, help="query embeddings (JSONL)")
    p.add_argument("--calibration", default=None, help="calibration JSON written by calibrate")
    p.add_argument("--threshold-override", type=float, default=_RUN.threshold_override,
                   help="use this threshold instead of the calibrated one")
    p.add_argument("--out", required=True, help="results JSONL")
    _add_recognize(p)
    _add_k(p)
    _add_p(p)
    p.set_defaults(func=cmd_recognize)

    p = sub.add_parser("evaluate", help="confusion matrices and weighted F1", formatter_class=fmt)
    p.add_argument("--embeddings", required=True, help="ground-truth records")
    p.add_argument("--results", required=True, help="results JSONL written by recognize")
    p.add_argument("--out-dir", required=True, help="output directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="bundle plotting CSVs", formatter_class=fmt)
    p.add_argument("--calibration", required=True, help="calibration JSON written by calibrate")
    p.add_argument("--evaluation-dir", required=True, help="directory written by evaluate")
    p.add_argument("--out-dir", required=True, help="output directory")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", help="run every stage into one directory", formatter_class=fmt)
    p.add_argument("--out-dir", required=True, help="output directory")
    _add_synth(p)
    _add_train(p)
    p.add_argument("--n-shots", type=int, default=_RUN.n_shots, help="enrolled vectors per class")
    p.add_argument("--bins", type=int, default=_RUN.bins, help="histogram bins")
    p.add_argument("--threshold-override", type=float, default=_RUN.threshold_override,
                   help="use this threshold instead of the calibrated one")
    _add_recognize(p)
    _add_k(p)
    _add_p(p)
    _add_seed(p)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        a.func(a)
    except FileNotFoundError as e:
        code, msg = EXIT_MISSING, str(e)
    except DimensionError as e:
        code, msg = EXIT_DIM, f"dimension mismatch: {e}"
    except (DataError, ValueError) as e:
        code, msg = EXIT_DATA, str(e)
    except Exception as e:  # noqa: BLE001
        code, msg = EXIT_FAIL, f"{type(e).__name__}: {e}"
    else:
        return EXIT_OK
    print(f"fewshot-osr {a.command}: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
