"""Command-line interface wiring the pipeline together.

Subcommands: extract, augment, train, predict, eval, bootstrap,
word-targets, simulate.  Exit codes: 0 success, 1 usage error, 2 data
error.  Every run writes a `<command>.snapshot.json` with its arguments and
seed next to its outputs so results can be reproduced.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import os
import sys
from pathlib import Path

from . import augment, dataio, evalstats, qparse, vocab as vocabmod
from .errors import DanglingReference, QsupError
from .model import predict, train

logger = logging.getLogger(__name__)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise _UsageError(message)


def _write_snapshot(out_dir: Path, command: str, payload: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / f"{command}.snapshot.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True, default=str)
        fh.write("\n")


def _args_snapshot(args: argparse.Namespace) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


def _load_tables(args):
    types = (
        qparse.load_question_types(args.types)
        if getattr(args, "types", None)
        else qparse.default_question_types()
    )
    obj_vocab = (
        qparse.load_object_vocabulary(args.vocab)
        if getattr(args, "vocab", None)
        else qparse.default_object_vocabulary()
    )
    return obj_vocab, types


# ---------------------------------------------------------------------------
# subcommands


def _cmd_extract(args) -> int:
    obj_vocab, types = _load_tables(args)
    manifest = dataio.load_dataset(args.questions)
    grouped = dataio.questions_by_image(manifest)
    out_path = Path(args.out)
    with open(out_path, "w", encoding="utf-8") as fh:
        for entry in manifest.images:
            labels = qparse.extract_objects_multi(
                grouped[entry.image_id], obj_vocab, types, args.adjective_filter
            )
            fh.write(
                json.dumps({"image_id": entry.image_id, "labels": sorted(labels.present)})
                + "\n"
            )
    _write_snapshot(out_path.parent, "extract", _args_snapshot(args))
    return 0


def _cmd_augment(args) -> int:
    manifest = dataio.load_dataset(getattr(args, "in"))
    records = dataio.build_image_records(manifest)
    out_path = Path(args.out)
    count = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        for record in records:
            if not record.answered:
                continue
            for ex in augment.generate_exemplars(record, args.mode):
                fh.write(
                    json.dumps(
                        {
                            "image_id": ex.image_id,
                            "target_id": ex.target_question.id,
                            "extra_ids": [q.id for q in ex.extra],
                            "answer": ex.answer,
                        }
                    )
                    + "\n"
                )
                count += 1
    logger.info("wrote %d exemplars", count)
    _write_snapshot(out_path.parent, "augment", _args_snapshot(args))
    return 0


def _cmd_train(args) -> int:
    if not args.config:
        sys.stderr.write("qsup train: error: needs --config or $QSUP_CONFIG\n")
        return 1
    cfg = dataio.load_run_config(args.config)
    manifest = dataio.load_dataset(cfg.dataset)
    records = dataio.build_image_records(manifest)
    feature_file = dataio.load_features(cfg.features)
    features = {}
    for record in records:
        ref = record.resolved_feature_ref()
        if ref not in feature_file:
            raise DanglingReference(f"image {record.image_id}: no features under ref {ref}")
        features[record.image_id] = feature_file[ref]

    text_vocab = (
        vocabmod.load_vocabulary(cfg.vocab)
        if cfg.vocab is not None
        else vocabmod.build_vocabulary(list(manifest.questions), cfg.min_count)
    )
    exemplar_stream = itertools.chain.from_iterable(
        augment.generate_exemplars(r, cfg.augment_mode) for r in records if r.answered
    )
    model = train(exemplar_stream, features, text_vocab, cfg.train)

    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    dataio.save_model(model, cfg.out_dir / "model.qsmd")
    vocabmod.save_vocabulary(text_vocab, cfg.out_dir / "vocab.txt")
    _write_snapshot(cfg.out_dir, "train", dataio.run_config_snapshot(cfg))
    print(
        f"trained model over {len(text_vocab)} words and "
        f"{len(model.answer_vocab)} answers -> {cfg.out_dir / 'model.qsmd'}"
    )
    return 0


def _cmd_predict(args) -> int:
    model = dataio.load_model(args.model)
    text_vocab = vocabmod.load_vocabulary(args.vocab)
    features = dataio.load_features(args.features)
    manifest = dataio.load_dataset(args.questions)
    grouped = dataio.questions_by_image(manifest)
    feature_refs = {e.image_id: e.feature_ref for e in manifest.images}
    out_path = Path(args.out)
    with open(out_path, "w", encoding="utf-8") as fh:
        for q in manifest.questions:
            ref = feature_refs[q.image_id]
            if ref not in features:
                raise DanglingReference(f"image {q.image_id}: no features under ref {ref}")
            extras = None
            if args.use_extras:
                extras = [x for x in grouped[q.image_id] if x.id != q.id]
            answer, _ = predict(model, text_vocab, features[ref], q, extras)
            fh.write(
                json.dumps({"question_id": q.id, "image_id": q.image_id, "answer": answer})
                + "\n"
            )
    _write_snapshot(out_path.parent, "predict", _args_snapshot(args))
    return 0


def _load_predictions(path: str) -> dict:
    predictions = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise dataio.ParseError(f"{path}:{lineno}: {exc.msg}") from exc
            if "question_id" not in record or "answer" not in record:
                raise dataio.ParseError(f"{path}:{lineno}: need question_id and answer")
            predictions[record["question_id"]] = record["answer"]
    return predictions


def _matched_pairs(pred_path: str, dataset_path: str) -> list[tuple[str, str]]:
    predictions = _load_predictions(pred_path)
    manifest = dataio.load_dataset(dataset_path)
    pairs = []
    for q in manifest.questions:
        if q.answer is None:
            continue
        if q.id not in predictions:
            raise DanglingReference(f"no prediction for question {q.id!r}")
        pairs.append((predictions[q.id], q.answer))
    return pairs


def _cmd_eval(args) -> int:
    out_prefix = Path(args.out_prefix)
    out_prefix.parent.mkdir(parents=True, exist_ok=True)
    if args.task == "vqa":
        pairs = _matched_pairs(args.pred, args.dataset)
        report = evalstats.vqa_accuracy(pairs)
        payload = {
            "overall": report.overall,
            "by_type": {t.value: acc for t, acc in report.by_type.items()},
            "n_examples": {t.value: n for t, n in report.n_examples.items()},
        }
        rows = [("answer_type", "accuracy", "n_examples")] + [
            (t.value, f"{report.by_type[t]:.6f}", str(report.n_examples[t]))
            for t in report.by_type
        ]
    else:
        obj_vocab, types = _load_tables(args)
        manifest = dataio.load_dataset(args.dataset)
        truth, predicted = [], []
        labels_by_image = {}
        with open(args.labels, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    record = json.loads(line)
                    labels_by_image[record["image_id"]] = record["labels"]
        for entry in manifest.images:
            if entry.gt_labels is None:
                continue
            if entry.image_id not in labels_by_image:
                raise DanglingReference(f"no extracted labels for image {entry.image_id}")
            predicted.append(
                qparse.LabelSet(frozenset(labels_by_image[entry.image_id]), obj_vocab.class_names)
            )
            truth.append(qparse.LabelSet(frozenset(entry.gt_labels), obj_vocab.class_names))
        report = evalstats.per_class_pr(predicted, truth)
        payload = {
            "mean_precision": report.mean_precision,
            "mean_recall": report.mean_recall,
            "per_class": {
                c: {"precision": pr.precision, "recall": pr.recall, "support": pr.support}
                for c, pr in report.per_class.items()
            },
        }
        rows = [("class", "precision", "recall", "support")] + [
            (c, f"{pr.precision:.6f}", f"{pr.recall:.6f}", str(pr.support))
            for c, pr in report.per_class.items()
        ]

    with open(f"{out_prefix}.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")
    with open(f"{out_prefix}.csv", "w", encoding="utf-8", newline="") as fh:
        csv.writer(fh).writerows(rows)
    print(json.dumps(payload if args.task == "vqa" else {
        "mean_precision": payload["mean_precision"],
        "mean_recall": payload["mean_recall"],
    }))
    _write_snapshot(out_prefix.parent, "eval", _args_snapshot(args))
    return 0


def _cmd_bootstrap(args) -> int:
    pairs = _matched_pairs(args.pred, args.dataset)
    correct = [int(evalstats._answer_match(p, t)) for p, t in pairs]
    lower, upper = evalstats.bootstrap_ci(correct, args.confidence, args.resamples, args.seed)
    payload = {
        "accuracy": sum(correct) / len(correct),
        "confidence": args.confidence,
        "lower": lower,
        "upper": upper,
        "n": len(correct),
    }
    print(json.dumps(payload))
    if args.out:
        out_path = Path(args.out)
        with open(out_path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1)
            fh.write("\n")
        _write_snapshot(out_path.parent, "bootstrap", _args_snapshot(args))
    return 0


def _cmd_word_targets(args) -> int:
    manifest = dataio.load_dataset(args.questions)
    grouped = dataio.questions_by_image(manifest)
    corpus = list(manifest.questions)
    mode = vocabmod.WordTargetMode(args.mode)

    obj_vocab = types = None
    text_vocab = None
    if mode is vocabmod.WordTargetMode.CLASSES_80:
        obj_vocab, types = _load_tables(args)
    else:
        text_vocab = (
            vocabmod.load_vocabulary(args.text_vocab)
            if args.text_vocab
            else vocabmod.build_vocabulary(corpus, args.min_count)
        )

    targets = vocabmod.word_targets(grouped, mode, text_vocab, obj_vocab, types)
    words = vocabmod.word_target_words(mode, text_vocab, corpus, obj_vocab)
    out_path = Path(args.out)
    with open(out_path, "w", encoding="utf-8") as fh:
        for target in targets:
            fh.write(json.dumps({"image_id": target.image_id, "indices": target.indices()}) + "\n")
    with open(out_path.with_suffix(out_path.suffix + ".words"), "w", encoding="utf-8") as fh:
        fh.writelines(w + "\n" for w in words)
    _write_snapshot(out_path.parent, "word-targets", _args_snapshot(args))
    return 0


def _records_to_manifest(records, original: dataio.DatasetManifest) -> dataio.DatasetManifest:
    keep = {r.image_id for r in records}
    gt = {e.image_id: e for e in original.images}
    images = tuple(gt[r.image_id] for r in records)
    questions = tuple(q for r in records for q in r.all_questions)
    return dataio.DatasetManifest(images, questions)


def _cmd_simulate(args) -> int:
    manifest = dataio.load_dataset(getattr(args, "in"))
    records = dataio.build_image_records(manifest)
    out_path = Path(args.out)
    if args.keep is not None:
        result = augment.simulate_unanswered(records, args.keep, args.seed)
        dataio.save_dataset(_records_to_manifest(result, manifest), out_path)
    else:
        if args.out_rest is None:
            raise _UsageError("--fraction needs --out-rest")
        kept, rest = augment.simulate_answered_fraction(records, args.fraction, args.seed)
        dataio.save_dataset(_records_to_manifest(kept, manifest), out_path)
        dataio.save_dataset(_records_to_manifest(rest, manifest), args.out_rest)
    _write_snapshot(out_path.parent, "simulate", _args_snapshot(args))
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> _Parser:
    parser = _Parser(prog="qsup", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    p = sub.add_parser("extract", help="extract object labels per image")
    p.add_argument("--questions", required=True, help="dataset manifest (JSON)")
    p.add_argument("--vocab", help="object vocabulary file (default: packaged table)")
    p.add_argument("--types", help="question-type table (default: packaged table)")
    p.add_argument("--out", required=True, help="output JSONL, one record per image")
    p.add_argument("--adjective-filter", action="store_true",
                   help="skip class words that look like adjectives before a noun")
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("augment", help="generate training exemplars")
    p.add_argument("--in", required=True, help="dataset manifest (JSON)")
    p.add_argument("--mode", default="powerset",
                   choices=[m.value for m in augment.AugmentMode])
    p.add_argument("--out", required=True, help="output JSONL of exemplar records")
    p.set_defaults(func=_cmd_augment)

    p = sub.add_parser("train", help="train a model from a run config")
    p.add_argument("--config", default=os.environ.get("QSUP_CONFIG"),
                   help="run configuration (JSON); defaults to $QSUP_CONFIG")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", help="answer questions with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab", required=True, help="text vocabulary written by train")
    p.add_argument("--features", required=True)
    p.add_argument("--questions", required=True, help="dataset manifest (JSON)")
    p.add_argument("--out", required=True, help="output JSONL of answers")
    p.add_argument("--use-extras", action="store_true",
                   help="feed the image's other questions as the extra block")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("eval", help="accuracy or extraction quality reports")
    p.add_argument("--task", choices=["vqa", "extraction"], default="vqa")
    p.add_argument("--pred", help="predictions JSONL (vqa task)")
    p.add_argument("--labels", help="extracted labels JSONL (extraction task)")
    p.add_argument("--dataset", required=True, help="dataset manifest (JSON)")
    p.add_argument("--vocab", help="object vocabulary file (extraction task)")
    p.add_argument("--types", help="question-type table (extraction task)")
    p.add_argument("--out-prefix", required=True, help="writes <prefix>.json and <prefix>.csv")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("bootstrap", help="bootstrap confidence interval for accuracy")
    p.add_argument("--pred", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--confidence", type=float, default=0.999)
    p.add_argument("--resamples", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="optional JSON output path")
    p.set_defaults(func=_cmd_bootstrap)

    p = sub.add_parser("word-targets", help="multi-label word targets per image")
    p.add_argument("--questions", required=True, help="dataset manifest (JSON)")
    p.add_argument("--mode", required=True,
                   choices=[m.value for m in vocabmod.WordTargetMode])
    p.add_argument("--out", required=True, help="output JSONL (a .words sidecar is added)")
    p.add_argument("--text-vocab", help="vocabulary file; built from the data if absent")
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--vocab", help="object vocabulary file (classes80 mode)")
    p.add_argument("--types", help="question-type table (classes80 mode)")
    p.set_defaults(func=_cmd_word_targets)

    p = sub.add_parser("simulate", help="strip answers to simulate weak supervision")
    p.add_argument("--in", required=True, help="dataset manifest (JSON)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--keep", type=int, help="answered questions kept per image")
    p.add_argument("--fraction", type=float,
                   help="fraction of images keeping their answers")
    p.add_argument("--out", required=True)
    p.add_argument("--out-rest", help="output for the stripped split (fraction mode)")
    p.set_defaults(func=_cmd_simulate)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_usage(sys.stderr)
            return 1
        if args.command == "simulate" and (args.keep is None) == (args.fraction is None):
            parser.print_usage(sys.stderr)
            sys.stderr.write("qsup simulate: error: give exactly one of --keep / --fraction\n")
            return 1
        return args.func(args)
    except _UsageError:
        return 1
    except (QsupError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        sys.stderr.write(f"qsup: error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
