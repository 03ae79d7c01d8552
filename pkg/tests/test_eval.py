import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from golden import METRIC_VECTORS, NORMALIZE_VECTORS
from oracles import squad_f1, squad_normalize
from mpqa.corpus import ChunkingPolicy, ChunkMode, Document, chunk_corpus
from mpqa.eval import (
    ALL_MODES,
    DatasetError,
    QuestionRecord,
    SweepConfig,
    evaluate_dataset,
    load_dataset,
    mode_label,
    parse_mode_label,
    split_dataset,
    sweep_passages,
    sweep_to_csv,
    write_dataset,
)
from mpqa.pipeline import Pipeline, PipelineConfig
from mpqa.ranker import LinearRankerModel
from mpqa.retrieval import build_index
from mpqa.text import em_f1, normalize_answer

ASCII_TEXT = st.text(alphabet="abcdeAB THE an,.!-'", max_size=30)


@pytest.mark.parametrize("s,want", NORMALIZE_VECTORS)
def test_normalize_vectors(s, want):
    assert normalize_answer(s) == want


@settings(max_examples=200)
@given(st.text(max_size=40))
def test_normalize_idempotent(s):
    once = normalize_answer(s)
    assert normalize_answer(once) == once


@settings(max_examples=200)
@given(ASCII_TEXT)
def test_normalize_matches_reference_on_ascii(s):
    assert normalize_answer(s) == squad_normalize(s)


@pytest.mark.parametrize("pred,golds,em,f1", METRIC_VECTORS)
def test_metric_vectors(pred, golds, em, f1):
    got_em, got_f1 = em_f1(pred, golds)
    assert got_em == em
    assert math.isclose(got_f1, f1, rel_tol=1e-12, abs_tol=1e-12)


@settings(max_examples=200)
@given(ASCII_TEXT, st.lists(ASCII_TEXT, min_size=1, max_size=3))
def test_metric_properties(pred, golds):
    em, f1 = em_f1(pred, golds)
    assert em in (0, 1) and 0.0 <= f1 <= 1.0
    assert em <= f1
    assert math.isclose(f1, max(squad_f1(pred, g) for g in golds), rel_tol=1e-12)
    multiset_equal = any(sorted(normalize_answer(pred).split()) == sorted(normalize_answer(g).split()) for g in golds)
    assert (f1 == 1.0) == multiset_equal


def test_empty_golds_rejected():
    with pytest.raises(ValueError):
        em_f1("x", [])


class TestEvaluate:
    records = [QuestionRecord("q1", "?", ("Paris",)), QuestionRecord("q2", "?", ("Lyon",))]

    def test_half(self):
        rep = evaluate_dataset({"q1": "Paris", "q2": "Berlin"}, self.records)
        assert rep.em == 50.0 and rep.f1 == 50.0 and rep.n_questions == 2

    def test_missing_is_empty(self):
        rep = evaluate_dataset({"q1": "Paris"}, self.records)
        assert rep.per_question[1] == ("q2", 0, 0.0)

    def test_perfect(self):
        rep = evaluate_dataset({"q1": "Paris", "q2": "lyon."}, self.records)
        assert (rep.em, rep.f1) == (100.0, 100.0)

    def test_unknown_id(self):
        with pytest.raises(DatasetError, match="unknown"):
            evaluate_dataset({"zz": "x"}, self.records)

    def test_per_question_em_le_f1(self):
        rep = evaluate_dataset({"q1": "Paris France", "q2": "Lyon"}, self.records)
        assert all(e <= f for _, e, f in rep.per_question)

    def test_no_gold(self):
        with pytest.raises(DatasetError):
            QuestionRecord("q", "?", ())


class TestDatasets:
    def test_squad_json(self, tmp_path):
        data = {"data": [{"title": "t", "paragraphs": [{"context": "c", "qas": [
            {"id": "a1", "question": "who?", "answers": [{"text": "me", "answer_start": 0}, {"text": "I", "answer_start": 3}]},
            {"id": "a2", "question": "none?", "answers": []},
        ]}]}]}
        p = tmp_path / "d.json"
        p.write_text(json.dumps(data))
        (rec,) = load_dataset(p)
        assert rec == QuestionRecord("a1", "who?", ("me", "I"))

    def test_jsonl_round_trip(self, tmp_path):
        recs = [QuestionRecord(f"q{i}", f"question {i}?", (f"ans {i}",)) for i in range(5)]
        write_dataset(recs, tmp_path / "d.jsonl")
        assert load_dataset(tmp_path / "d.jsonl") == recs

    def test_malformed_line(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text('{"id": "a", "question": "q", "answers": ["x"]}\n{oops\n')
        with pytest.raises(DatasetError, match=":2:"):
            load_dataset(p)

    def test_duplicate(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text('{"id": "a", "question": "q", "answers": ["x"]}\n' * 2)
        with pytest.raises(DatasetError, match="duplicate"):
            load_dataset(p)

    def test_split(self):
        recs = [QuestionRecord(f"q{i}", "?", ("x",)) for i in range(50)]
        rest, held = split_dataset(recs, 10, seed=3)
        assert len(held) == 10 and len(rest) == 40
        assert {r.question_id for r in rest} | {r.question_id for r in held} == {r.question_id for r in recs}
        assert split_dataset(recs, 10, seed=3) == (rest, held)
        assert split_dataset(recs, 10, seed=4)[1] != held
        with pytest.raises(DatasetError):
            split_dataset(recs, 51)


def test_mode_labels():
    labels = [mode_label(m, s) for m, s in ALL_MODES]
    assert labels == ["per-passage", "per-passage+scores", "global", "global+scores"]
    assert [parse_mode_label(x) for x in labels] == list(ALL_MODES)
    with pytest.raises(ValueError):
        parse_mode_label("global+other")


def test_sweep_config_validation():
    with pytest.raises(ValueError):
        SweepConfig(passage_counts=(3, 1))
    with pytest.raises(ValueError):
        SweepConfig(passage_counts=(0, 1))


def small_pipeline(docs, config=None, ranker=None):
    config = config or PipelineConfig()
    passages = chunk_corpus(docs, config.chunking)
    return Pipeline(config, build_index(passages), ranker=ranker)


def toy_docs():
    return [
        Document("d1", "", "the capital of france is paris and it is large"),
        Document("d2", "", "berlin is the capital of germany"),
        Document("d3", "", "rome is old and the capital of italy"),
    ]


def test_sweep_k1_equality_and_determinism():
    pipe = small_pipeline(toy_docs())
    data = [
        QuestionRecord("q1", "capital of france", ("paris",)),
        QuestionRecord("q2", "capital of germany", ("berlin",)),
        QuestionRecord("q3", "capital of italy", ("rome",)),
    ]
    cfg = SweepConfig(passage_counts=(1, 2, 3, 5))
    rows = sweep_passages(pipe, data, cfg)
    assert len(rows) == 16
    k1 = {r.mode: (r.em, r.f1) for r in rows if r.k == 1}
    assert k1["global"] == k1["per-passage"]
    assert sweep_to_csv(rows) == sweep_to_csv(sweep_passages(small_pipeline(toy_docs()), data, cfg))
    assert sweep_to_csv(rows).splitlines()[0] == "mode,k,em,f1,n"
    # only three passages exist
    assert all(r.truncated == 3 for r in rows if r.k == 5)


def test_sweep_max_questions():
    pipe = small_pipeline(toy_docs())
    data = [QuestionRecord(f"q{i}", "capital", ("paris",)) for i in range(6)]
    rows = sweep_passages(pipe, data, SweepConfig(passage_counts=(1,), max_questions=2))
    assert all(r.n == 2 for r in rows)


def rank5_corpus():
    """Gold answer lives in one short document; four long distractors outrank it.

    The ranker prefers long passages, so the distractors (each holding a single
    question word) take ranks 1-4 and the gold passage lands at rank 5.
    """
    keys = ["zorvex", "quilbarn", "moltreck", "fendaspire"]
    docs = [Document("gold", "", "long ago people said " + " ".join(keys) + " was the thing to know")]
    for i, key in enumerate(keys):
        filler = [f"f{i}w{j}" for j in range(99)]
        filler.insert(40 + i, key)
        docs.append(Document(f"noise{i}", "", " ".join(filler)))
    question = QuestionRecord("q", " ".join(keys) + "?", (" ".join(keys),))
    return docs, question


def test_gold_only_at_rank5(tmp_path):
    docs, question = rank5_corpus()
    LinearRankerModel(np.array([0.0, 0.0, 0.0, 0.5, 0.0])).save(tmp_path / "long.json")
    config = PipelineConfig(
        ranker="linear", ranker_model=str(tmp_path / "long.json"), chunking=ChunkingPolicy(ChunkMode.FIXED, 100)
    )
    pipe = small_pipeline(docs, config)
    prep = pipe.prepare(question.text, "q", k=30)
    assert [p.passage_id.split("#")[0] for p in prep.ranked][4] == "gold"
    rows = sweep_passages(pipe, [question], SweepConfig(passage_counts=tuple(range(1, 8))))
    for label in ["per-passage", "per-passage+scores", "global", "global+scores"]:
        em = {r.k: r.em for r in rows if r.mode == label}
        assert min(em[k] for k in range(5, 8)) > max(em[k] for k in range(1, 5)), label
