"""Multi-passage open-domain question answering.

Retrieve passages with BM25, rerank them, score answer spans per passage,
and aggregate either per passage or under one softmax over every passage of
the question.
"""

from ._kernels import BACKEND
from .aggregate import (
    AnswerCandidate,
    AnswerGroup,
    GoldSpan,
    NormalizationMode,
    SpanDistribution,
    combine_passage_score,
    enumerate_spans,
    merge_answers,
    normalize_global,
    normalize_per_passage,
    span_nll_and_grad,
)
from .corpus import (
    ChunkingPolicy,
    ChunkMode,
    Document,
    Passage,
    Token,
    chunk,
    chunk_fixed,
    chunk_sentences,
    chunk_sliding,
    tokenize,
)
from .eval import MetricReport, QuestionRecord, SweepConfig, em_f1, evaluate_dataset, normalize_answer, sweep_passages
from .pipeline import Pipeline, PipelineConfig
from .ranker import (
    LinearRankerModel,
    PassagePosterior,
    extract_features,
    passage_posterior,
    ranker_loss_and_grad,
    rerank_topk,
    select_training_passages,
    train_linear_ranker,
)
from .retrieval import Bm25Params, InvertedIndex, RetrievalHit, build_index, load_index, persist_index, retrieve
from .scorer import LexicalScorer, RemoteScorer, SpanLogits, lexical_score, remote_score

__version__ = "0.1.0"
