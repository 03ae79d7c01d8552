"""Seeded toy corpora on which the lexical scorer can find answers.

Each question is three made-up key words and its gold answer is the same
three words as a contiguous phrase. A gold document hides the phrase inside
filler text. Distractor documents contain isolated key words: short ones
give sharply peaked per-passage distributions around a wrong one-word span,
and a few "near-miss" documents hold two key words side by side, which BM25
tends to rank above the gold passage. Under one softmax over all passages
the full phrase wins, because its raw span logit is the largest.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .corpus import Document
from .eval import QuestionRecord

_CONS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


def _word(rng: random.Random, syllables: int) -> str:
    return "".join(rng.choice(_CONS) + rng.choice(_VOWELS) for _ in range(syllables))


def _fresh(rng: random.Random, taken: set[str], syllables: int) -> str:
    while True:
        w = _word(rng, syllables)
        if w not in taken:
            taken.add(w)
            return w


@dataclass(frozen=True)
class ToyQA:
    documents: list[Document]
    questions: list[QuestionRecord]


def make_toy_qa(
    n_questions: int = 50,
    seed: int = 0,
    distractors_per_term: int = 9,
    near_misses: int = 2,
    filler_vocab: int = 400,
) -> ToyQA:
    rng = random.Random(seed)
    taken: set[str] = set()
    # filler words have 2 syllables, key words 4, so the two sets never collide
    filler = [_fresh(rng, taken, 2) for _ in range(filler_vocab)]

    def fill(n: int) -> list[str]:
        return [rng.choice(filler) for _ in range(n)]

    docs: list[Document] = []
    questions: list[QuestionRecord] = []
    for q in range(n_questions):
        keys = [_fresh(rng, taken, 4) for _ in range(3)]
        phrase = " ".join(keys)
        qid = f"q{q:03d}"
        body = fill(rng.randint(60, 140))
        at = rng.randint(0, len(body))
        words = body[:at] + keys + body[at:]
        docs.append(Document(f"{qid}-gold", f"gold {qid}", " ".join(words)))
        n = 0
        for key in keys:
            for _ in range(distractors_per_term):
                size = rng.choice((6, 8, 10, 14, 20, 40, 90))
                words = fill(size)
                words.insert(rng.randint(0, size), key)
                docs.append(Document(f"{qid}-d{n:02d}", "", " ".join(words)))
                n += 1
        for _ in range(rng.randint(0, near_misses)):
            a = rng.randrange(3)
            b = (a + 1) % 3
            size = rng.choice((6, 8, 10))
            words = fill(size)
            words[rng.randint(0, size) : 0] = [keys[min(a, b)], keys[max(a, b)]]
            docs.append(Document(f"{qid}-d{n:02d}", "", " ".join(words)))
            n += 1
        questions.append(QuestionRecord(qid, f"{keys[0]} {keys[1]} {keys[2]}?", (phrase,)))
    rng.shuffle(docs)
    return ToyQA(docs, questions)


def main(argv=None) -> None:
    import argparse
    from pathlib import Path

    from .corpus import write_corpus
    from .eval import write_dataset

    ap = argparse.ArgumentParser(prog="python -m mpqa.synthetic", description="write a toy corpus and questions")
    ap.add_argument("out_dir")
    ap.add_argument("--questions", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    toy = make_toy_qa(args.questions, args.seed)
    write_corpus(toy.documents, out / "corpus.jsonl")
    write_dataset(toy.questions, out / "questions.jsonl")
    print(f"wrote {len(toy.documents)} documents and {len(toy.questions)} questions to {out}")


if __name__ == "__main__":
    main()
