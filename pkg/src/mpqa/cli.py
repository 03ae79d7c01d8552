"""Command line interface: ``mpqa {index,retrieve,answer,train-ranker,eval,sweep}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .aggregate import NormalizationMode
from .corpus import CorpusError, chunk_corpus, load_corpus
from .eval import (
    ALL_MODES,
    DatasetError,
    QuestionRecord,
    SweepConfig,
    evaluate_dataset,
    load_dataset,
    sweep_passages,
    sweep_to_csv,
)
from .pipeline import ConfigError, Pipeline, PipelineConfig, contains_answer
from .ranker import (
    RankerError,
    RankerExample,
    TrainConfig,
    extract_features,
    load_ranker_dataset,
    select_training_passages,
    train_linear_ranker,
    write_ranker_dataset,
)
from .retrieval import IndexFormatError, build_index, load_index, persist_index, retrieve
from .scorer import ScorerError

log = logging.getLogger("mpqa")

MODE_CHOICES = {"per-passage": NormalizationMode.PER_PASSAGE, "global": NormalizationMode.GLOBAL}


class CliError(Exception):
    pass


def _require(args, *names):
    for n in names:
        if getattr(args, n) is None:
            raise CliError(f"--{n.replace('_', '-')} is required for '{args.command}'")


def _config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    changes = {}
    if args.mode is not None:
        changes["mode"] = MODE_CHOICES[args.mode]
    if args.passage_scores is not None:
        changes["use_passage_scores"] = args.passage_scores == "on"
    if args.seed is not None:
        changes["seed"] = args.seed
    return cfg.replace(**changes) if changes else cfg


def _write(out: str | None, text: str) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _jsonl(records) -> str:
    return "".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in records)


def _questions(args) -> list[QuestionRecord]:
    if getattr(args, "question", None):
        return [QuestionRecord("q0", args.question, ("",))]
    _require(args, "dataset")
    return load_dataset(args.dataset)


def cmd_index(args, cfg: PipelineConfig) -> None:
    _require(args, "corpus", "index")
    t0 = time.perf_counter()
    docs = load_corpus(args.corpus)
    passages = chunk_corpus(docs, cfg.chunking)
    index = build_index(passages, cfg.bm25)
    persist_index(index, args.index)
    log.info(
        "indexed %d documents into %d passages (%s, length=%d, stride=%d) in %.2fs -> %s",
        len(docs), len(passages), cfg.chunking.mode.value, cfg.chunking.length, cfg.chunking.stride,
        time.perf_counter() - t0, args.index,
    )


def cmd_retrieve(args, cfg: PipelineConfig) -> None:
    _require(args, "index")
    index = load_index(args.index)
    k = args.k[0] if args.k else cfg.k_retrieve
    records = []
    for q in _questions(args):
        hits = retrieve(index, q.text, k)
        records.append(
            {"question_id": q.question_id, "hits": [{"passage_id": h.passage_id, "score": h.score, "rank": h.rank} for h in hits]}
        )
    _write(args.out, _jsonl(records))
    log.info("retrieved top-%d for %d questions", k, len(records))


def cmd_answer(args, cfg: PipelineConfig) -> None:
    _require(args, "index")
    if args.k:
        cfg = cfg.replace(k_rerank=args.k[0], k_retrieve=max(cfg.k_retrieve, args.k[0]))
    pipe = Pipeline(cfg, load_index(args.index))
    questions = _questions(args)
    records = [pipe.answer_question(q.text, q.question_id).to_record() for q in questions]
    _write(args.out, _jsonl(records))
    empty = sum(r["status"] != "ok" for r in records)
    log.info(
        "answered %d questions (mode=%s, passage scores %s, k=%d); %d with no passages",
        len(records), cfg.mode.value, "on" if cfg.use_passage_scores else "off", cfg.k_rerank, empty,
    )


def _ranker_dataset(args, cfg: PipelineConfig) -> list[RankerExample]:
    if args.features:
        return load_ranker_dataset(args.features)
    _require(args, "index", "dataset")
    index = load_index(args.index)
    examples = []
    skipped = 0
    for q in load_dataset(args.dataset):
        hits = retrieve(index, q.text, cfg.k_retrieve)
        positives = {h.passage_id for h in hits if contains_answer(index.passages[h.passage_id], q.gold_answers)}
        if not positives:
            skipped += 1
            continue
        by_id = {h.passage_id: h for h in hits}
        ids = select_training_passages(hits, positives)
        feats = [extract_features(q.text, index.passages[p], by_id[p].score) for p in ids]
        examples.append(RankerExample(q.question_id, feats, [p in positives for p in ids]))
    log.info("built ranker training data: %d questions (%d skipped without a positive passage)", len(examples), skipped)
    return examples


def cmd_train_ranker(args, cfg: PipelineConfig) -> None:
    _require(args, "out")
    data = _ranker_dataset(args, cfg)
    if args.export_features:
        write_ranker_dataset(data, args.export_features)
    tc = TrainConfig(cfg.ranker_epochs, cfg.ranker_learning_rate, cfg.seed)
    model = train_linear_ranker(data, tc)
    model.save(args.out)
    log.info("trained linear ranker on %d questions: loss %.4f -> %.4f", len(data), model.history[0], model.history[-1])


def _load_predictions(path) -> dict[str, str]:
    preds = {}
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{") and "\n" not in text.strip():
        obj = json.loads(text)
        if "question_id" not in obj:
            return {str(k): str(v) for k, v in obj.items()}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            preds[str(rec["question_id"])] = rec["answer"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise CliError(f"{path}:{lineno}: malformed prediction record ({exc})") from exc
    return preds


def cmd_eval(args, cfg: PipelineConfig) -> None:
    _require(args, "dataset", "predictions")
    rep = evaluate_dataset(_load_predictions(args.predictions), load_dataset(args.dataset))
    _write(args.out, json.dumps(rep.to_dict(), sort_keys=True) + "\n")
    log.info("EM %.2f  F1 %.2f  over %d questions", rep.em, rep.f1, rep.n_questions)


def cmd_sweep(args, cfg: PipelineConfig) -> None:
    _require(args, "index", "dataset")
    counts = tuple(args.k) if args.k else tuple(range(1, cfg.k_rerank + 1))
    modes = ALL_MODES
    if args.mode is not None:
        modes = tuple(m for m in modes if m[0] is MODE_CHOICES[args.mode])
    if args.passage_scores is not None:
        modes = tuple(m for m in modes if m[1] == (args.passage_scores == "on"))
    cfg = cfg.replace(k_retrieve=max(cfg.k_retrieve, counts[-1]), k_rerank=max(cfg.k_rerank, counts[-1]))
    pipe = Pipeline(cfg, load_index(args.index))
    rows = sweep_passages(pipe, load_dataset(args.dataset), SweepConfig(counts, modes, cfg.seed))
    _write(args.out, sweep_to_csv(rows))
    for r in rows:
        note = f"  ({r.truncated} questions had fewer than k passages)" if r.truncated else ""
        log.info("%-20s k=%-3d EM %6.2f  F1 %6.2f%s", r.mode, r.k, r.em, r.f1, note)


COMMANDS = {
    "index": cmd_index,
    "retrieve": cmd_retrieve,
    "answer": cmd_answer,
    "train-ranker": cmd_train_ranker,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
}


def _int_list(s: str) -> list[int]:
    try:
        return [int(x) for x in s.replace(" ", "").split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer or comma-separated integers, got {s!r}") from None


def _common(suppress: bool) -> argparse.ArgumentParser:
    # subcommand copies must not overwrite flags given before the subcommand
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON pipeline config (see --dump-config)", **kw)
    common.add_argument("--corpus", help="line-delimited {id, title, text} documents", **kw)
    common.add_argument("--index", help="index file", **kw)
    common.add_argument("--dataset", help="SQuAD JSON or line-delimited {question_id, question, answers}", **kw)
    common.add_argument("--out", help="output file (default: stdout)", **kw)
    common.add_argument("--mode", choices=sorted(MODE_CHOICES), **kw)
    common.add_argument("--passage-scores", choices=["on", "off"], **kw)
    common.add_argument("--k", type=_int_list, help="passage count; a comma-separated list for 'sweep'", **kw)
    common.add_argument("--seed", type=int, **kw)
    common.add_argument("-v", "--verbose", action="store_true", **kw)
    return common


def build_parser() -> argparse.ArgumentParser:
    sub_common = _common(suppress=True)
    parser = argparse.ArgumentParser(prog="mpqa", description=__doc__, parents=[_common(suppress=False)])
    parser.add_argument("--dump-config", action="store_true", help="print the effective config and exit")
    sub = parser.add_subparsers(dest="command")
    sub.add_parser("index", parents=[sub_common], help="chunk a corpus and build a BM25 index")
    p = sub.add_parser("retrieve", parents=[sub_common], help="top-k BM25 passages per question")
    p.add_argument("--question", help="a single question instead of --dataset")
    p = sub.add_parser("answer", parents=[sub_common], help="answer questions end to end")
    p.add_argument("--question", help="a single question instead of --dataset")
    p = sub.add_parser("train-ranker", parents=[sub_common], help="train the linear passage ranker")
    p.add_argument("--features", help="precomputed line-delimited {question_id, features, positive} records")
    p.add_argument("--export-features", help="also write the training features to this file")
    p = sub.add_parser("eval", parents=[sub_common], help="EM/F1 of predictions against a dataset")
    p.add_argument("--predictions", help="answer records from 'answer' (or a {question_id: answer} JSON map)")
    sub.add_parser("sweep", parents=[sub_common], help="EM/F1 as a function of passage count, CSV output")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s", stream=sys.stderr
    )
    try:
        cfg = _config(args)
        if args.dump_config:
            sys.stdout.write(cfg.dumps())
            return 0
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 2
        COMMANDS[args.command](args, cfg)
    except (CliError, ConfigError, CorpusError, DatasetError, IndexFormatError, RankerError, ScorerError) as exc:
        print(f"mpqa: error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"mpqa: error: file not found: {exc.filename}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
