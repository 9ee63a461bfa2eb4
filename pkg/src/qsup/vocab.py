"""Text vocabularies, bag-of-words features, tf-idf ranking and word targets."""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import EmptyCorpus, KTooLarge, UnknownMode
from .qparse import (
    ObjectVocabulary,
    Question,
    QuestionTypeTable,
    extract_objects_multi,
    tokenize,
)

__all__ = [
    "Vocabulary",
    "BowVector",
    "WordTarget",
    "WordTargetMode",
    "build_vocabulary",
    "bow_featurize",
    "tfidf_rank",
    "word_targets",
    "save_vocabulary",
    "load_vocabulary",
]


class Vocabulary:
    """Ordered set of unique words with dense positions 0..n-1."""

    def __init__(self, words: Sequence[str]):
        self.words: tuple[str, ...] = tuple(words)
        if len(set(self.words)) != len(self.words):
            raise ValueError("vocabulary words must be unique")
        self.index: Mapping[str, int] = {w: i for i, w in enumerate(self.words)}

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.words == other.words

    def __repr__(self) -> str:
        return f"Vocabulary({len(self.words)} words)"


@dataclass(frozen=True)
class BowVector:
    """Sparse token counts over a fixed vocabulary."""

    entries: Mapping[int, int]
    vocab_size: int

    def __post_init__(self):
        object.__setattr__(self, "entries", dict(self.entries))
        for pos, count in self.entries.items():
            if not 0 <= pos < self.vocab_size:
                raise ValueError(f"position {pos} outside vocabulary of {self.vocab_size}")
            if count < 1:
                raise ValueError(f"count {count} at position {pos} must be >= 1")

    def total(self) -> int:
        return sum(self.entries.values())

    def __add__(self, other: "BowVector") -> "BowVector":
        if self.vocab_size != other.vocab_size:
            raise ValueError("cannot add bow vectors over different vocabularies")
        merged = Counter(self.entries)
        merged.update(other.entries)
        return BowVector(dict(merged), self.vocab_size)

    def as_dense(self, dtype=np.float64) -> np.ndarray:
        out = np.zeros(self.vocab_size, dtype=dtype)
        for pos, count in self.entries.items():
            out[pos] = count
        return out


def build_vocabulary(corpus: Sequence[Question], min_count: int = 1) -> Vocabulary:
    """All tokens with frequency >= min_count, most frequent first, ties A-Z."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    if not corpus:
        raise EmptyCorpus("cannot build a vocabulary from zero questions")
    counts = Counter()
    for q in corpus:
        counts.update(tokenize(q.text))
    kept = sorted(
        (w for w, c in counts.items() if c >= min_count),
        key=lambda w: (-counts[w], w),
    )
    return Vocabulary(kept)


def bow_featurize(text: str, vocab: Vocabulary) -> BowVector:
    """Count in-vocabulary tokens; out-of-vocabulary tokens are dropped."""
    entries = Counter()
    for tok in tokenize(text):
        pos = vocab.index.get(tok)
        if pos is not None:
            entries[pos] += 1
    return BowVector(dict(entries), len(vocab))


def _documents_by_image(corpus: Sequence[Question]) -> list[str]:
    # One document per image: all of its question texts concatenated.
    grouped: dict[int, list[str]] = {}
    for q in corpus:
        grouped.setdefault(q.image_id, []).append(q.text)
    return [" ".join(texts) for texts in grouped.values()]


def tfidf_rank(corpus: Sequence[Question], vocab: Vocabulary, k: int) -> list[str]:
    """Top-k vocabulary words by tf * idf.

    tf is the total corpus count of the word; idf is ln(N / (1 + df)) where a
    document is the concatenation of one image's questions and df counts the
    documents containing the word.  Ties break lexicographically.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if k > len(vocab):
        raise KTooLarge(f"k={k} exceeds vocabulary size {len(vocab)}")
    if not corpus:
        raise EmptyCorpus("cannot rank words over zero questions")
    docs = _documents_by_image(corpus)
    tf = Counter()
    df = Counter()
    for doc in docs:
        tokens = [t for t in tokenize(doc) if t in vocab]
        tf.update(tokens)
        df.update(set(tokens))
    n_docs = len(docs)
    scores = {w: tf[w] * math.log(n_docs / (1 + df[w])) for w in vocab.words}
    ranked = sorted(vocab.words, key=lambda w: (-scores[w], w))
    return ranked[:k]


class WordTargetMode(enum.Enum):
    FULL = "full"
    TFIDF_1024 = "tfidf1024"
    CLASSES_80 = "classes80"


@dataclass(frozen=True)
class WordTarget:
    """Binary word-presence labels for one image."""

    image_id: int
    labels: np.ndarray

    def indices(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.labels)]


def _coerce_mode(mode: WordTargetMode | str) -> WordTargetMode:
    if isinstance(mode, WordTargetMode):
        return mode
    try:
        return WordTargetMode(mode)
    except ValueError:
        raise UnknownMode(f"unknown word-target mode {mode!r}") from None


def word_target_words(
    mode: WordTargetMode | str,
    vocab: Vocabulary | None,
    corpus: Sequence[Question] | None = None,
    object_vocab: ObjectVocabulary | None = None,
) -> tuple[str, ...]:
    """The label-space word list a given mode produces targets over."""
    mode = _coerce_mode(mode)
    if mode is WordTargetMode.FULL:
        if vocab is None:
            raise ValueError("full mode needs a vocabulary")
        return vocab.words
    if mode is WordTargetMode.TFIDF_1024:
        if vocab is None or corpus is None:
            raise ValueError("tfidf1024 mode needs a vocabulary and a corpus")
        return tuple(tfidf_rank(corpus, vocab, min(1024, len(vocab))))
    if object_vocab is None:
        raise ValueError("classes80 mode needs an object vocabulary")
    return object_vocab.class_names


def word_targets(
    questions_by_image: Mapping[int, Sequence[Question]],
    mode: WordTargetMode | str,
    vocab: Vocabulary | None = None,
    object_vocab: ObjectVocabulary | None = None,
    type_table: QuestionTypeTable | None = None,
) -> list[WordTarget]:
    """Multi-label word targets per image for visual-model finetuning.

    full: presence of each vocabulary word in the image's questions.
    tfidf1024: the same, restricted to the top tf-idf words (at most 1024).
    classes80: the extracted object-class vector.
    """
    mode = _coerce_mode(mode)
    corpus = [q for qs in questions_by_image.values() for q in qs]

    if mode is WordTargetMode.CLASSES_80:
        if object_vocab is None or type_table is None:
            raise ValueError("classes80 mode needs an object vocabulary and type table")
        return [
            WordTarget(image_id, extract_objects_multi(list(qs), object_vocab, type_table).as_vector)
            for image_id, qs in questions_by_image.items()
        ]

    words = word_target_words(mode, vocab, corpus, object_vocab)
    index = {w: i for i, w in enumerate(words)}
    out = []
    for image_id, qs in questions_by_image.items():
        labels = np.zeros(len(words), dtype=np.int8)
        for q in qs:
            for tok in tokenize(q.text):
                pos = index.get(tok)
                if pos is not None:
                    labels[pos] = 1
        out.append(WordTarget(image_id, labels))
    return out


def save_vocabulary(vocab: Vocabulary, path: str) -> None:
    """Newline-delimited UTF-8, position = line number."""
    with open(path, "w", encoding="utf-8") as fh:
        for word in vocab.words:
            fh.write(word + "\n")


def load_vocabulary(path: str) -> Vocabulary:
    with open(path, encoding="utf-8") as fh:
        return Vocabulary([line.rstrip("\n") for line in fh if line.rstrip("\n")])
