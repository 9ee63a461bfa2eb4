"""Bag-of-words linear VQA model with a second text block for extra questions.

The representation concatenates three independently L2-normalized blocks:
ingested image features, an embedded bag-of-words of the target question,
and an embedded bag-of-words of the extra questions concatenated together.
A learned affine layer plus softmax predicts the answer class.  Training is
plain mini-batch SGD with analytic gradients, including the Jacobian of the
L2 normalization applied to the two text blocks.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .augment import Exemplar
from .errors import (
    DanglingReference,
    DimMismatch,
    EmptyBatch,
    NoTrainableExemplars,
)
from .qparse import Question
from .vocab import BowVector, Vocabulary, bow_featurize

__all__ = [
    "ModelDims",
    "LinearModel",
    "FeatureBlock",
    "Gradients",
    "TrainConfig",
    "embed_bow",
    "l2_normalize",
    "make_feature_block",
    "forward",
    "loss_and_grad",
    "build_answer_vocab",
    "train",
    "predict",
    "predict_multiple_choice",
]

logger = logging.getLogger(__name__)

_NORM_EPS = 1e-12


class ModelDims(NamedTuple):
    d_img: int
    d_t: int
    d_e: int
    n_answers: int


@dataclass
class LinearModel:
    """Parameters of the two-text-block linear softmax model."""

    embed_target: np.ndarray  # (vocab, d_t)
    embed_extra: np.ndarray  # (vocab, d_e)
    fc_weights: np.ndarray  # (n_answers, d_img + d_t + d_e)
    fc_bias: np.ndarray  # (n_answers,)
    answer_vocab: tuple[str, ...]

    def __post_init__(self):
        self.answer_vocab = tuple(self.answer_vocab)
        if len(set(self.answer_vocab)) != len(self.answer_vocab):
            raise ValueError("answer vocabulary has duplicate entries")
        if self.fc_bias.shape != (len(self.answer_vocab),):
            raise DimMismatch("fc_bias length must equal the answer vocabulary size")
        if self.fc_weights.shape[0] != len(self.answer_vocab):
            raise DimMismatch("fc_weights rows must equal the answer vocabulary size")
        if self.fc_weights.shape[1] < self.embed_target.shape[1] + self.embed_extra.shape[1]:
            raise DimMismatch("fc_weights columns too few for the text blocks")

    @property
    def dims(self) -> ModelDims:
        d_t = self.embed_target.shape[1]
        d_e = self.embed_extra.shape[1]
        d_img = self.fc_weights.shape[1] - d_t - d_e
        return ModelDims(d_img, d_t, d_e, len(self.answer_vocab))

    @property
    def vocab_size(self) -> int:
        return self.embed_target.shape[0]

    def parameters(self) -> dict[str, np.ndarray]:
        return {
            "embed_target": self.embed_target,
            "embed_extra": self.embed_extra,
            "fc_weights": self.fc_weights,
            "fc_bias": self.fc_bias,
        }


@dataclass(frozen=True)
class FeatureBlock:
    """Inputs for one example: image vector plus the two text bags.

    The text blocks are kept as bag-of-words counts; they are embedded and
    L2-normalized against the current parameters inside ``forward`` and
    ``loss_and_grad``, which is what makes gradients w.r.t. the embedding
    matrices well defined.  The image vector is expected to be normalized
    already (``make_feature_block`` does it).
    """

    image: np.ndarray
    target_bow: BowVector
    extra_bow: BowVector


@dataclass
class Gradients:
    embed_target: np.ndarray
    embed_extra: np.ndarray
    fc_weights: np.ndarray
    fc_bias: np.ndarray


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 10
    batch_size: int = 32
    seed: int = 0
    answer_vocab_size: int = 1000
    weight_init_scale: float = 0.01
    embed_dim: int = 256
    momentum: float = 0.0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.answer_vocab_size < 1 or self.embed_dim < 1:
            raise ValueError("answer_vocab_size and embed_dim must be >= 1")
        if self.weight_init_scale < 0:
            raise ValueError("weight_init_scale must be >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")


# ---------------------------------------------------------------------------
# building blocks


def embed_bow(counts: BowVector, embedding: np.ndarray) -> np.ndarray:
    """Sum of count * embedding row over the bag's entries."""
    if counts.vocab_size != embedding.shape[0]:
        raise DimMismatch(
            f"bow over {counts.vocab_size} words vs embedding with {embedding.shape[0]} rows"
        )
    out = np.zeros(embedding.shape[1], dtype=np.float64)
    for pos, count in counts.entries.items():
        out += count * embedding[pos]
    return out


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """v / ||v||, with vectors of near-zero norm returned unchanged."""
    norm = float(np.linalg.norm(v))
    if norm <= _NORM_EPS:
        return v
    return v / norm


def make_feature_block(
    vocab: Vocabulary,
    image_feat: np.ndarray,
    target_q: Question,
    extra_qs: Sequence[Question] | None = None,
) -> FeatureBlock:
    """Featurize one example; absent extras give an all-zero extra bag."""
    extra_text = " ".join(q.text for q in extra_qs) if extra_qs else ""
    return FeatureBlock(
        image=l2_normalize(np.asarray(image_feat, dtype=np.float64)),
        target_bow=bow_featurize(target_q.text, vocab),
        extra_bow=bow_featurize(extra_text, vocab),
    )


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def forward(model: LinearModel, block: FeatureBlock) -> np.ndarray:
    """Probability vector over answers for one feature block."""
    d_img, d_t, d_e, _ = model.dims
    if block.image.shape != (d_img,):
        raise DimMismatch(f"image block has shape {block.image.shape}, expected ({d_img},)")
    t = l2_normalize(embed_bow(block.target_bow, model.embed_target))
    e = l2_normalize(embed_bow(block.extra_bow, model.embed_extra))
    x = np.concatenate([block.image, t, e])
    return _softmax(model.fc_weights @ x + model.fc_bias)


# ---------------------------------------------------------------------------
# loss and gradients


def _batch_matrices(model: LinearModel, batch: Sequence[tuple[FeatureBlock, int]]):
    d_img, d_t, d_e, n_answers = model.dims
    v = model.vocab_size
    b = len(batch)
    img = np.zeros((b, d_img))
    c_t = np.zeros((b, v))
    c_e = np.zeros((b, v))
    labels = np.zeros(b, dtype=np.int64)
    for row, (block, label) in enumerate(batch):
        if block.image.shape != (d_img,):
            raise DimMismatch(f"image block has shape {block.image.shape}, expected ({d_img},)")
        if block.target_bow.vocab_size != v or block.extra_bow.vocab_size != v:
            raise DimMismatch("bag-of-words vocabulary does not match the embeddings")
        if not 0 <= label < n_answers:
            raise ValueError(f"label {label} outside answer vocabulary of {n_answers}")
        img[row] = block.image
        for pos, count in block.target_bow.entries.items():
            c_t[row, pos] = count
        for pos, count in block.extra_bow.entries.items():
            c_e[row, pos] = count
        labels[row] = label
    return img, c_t, c_e, labels


def _normalize_rows(raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    safe = norms > _NORM_EPS
    out = np.where(safe, raw / np.where(safe, norms, 1.0), raw)
    return out, norms


def loss_and_grad(
    model: LinearModel, batch: Sequence[tuple[FeatureBlock, int]]
) -> tuple[float, Gradients]:
    """Mean cross-entropy over the batch and analytic parameter gradients.

    Backpropagation runs through the affine layer, the concatenation, the
    L2 normalization of each text block (Jacobian (I - vv^T/||v||^2)/||v||)
    and the bag-of-words embedding sums.  Zero-norm text blocks pass the
    upstream gradient through unchanged, matching the identity behaviour of
    ``l2_normalize`` there.
    """
    if not batch:
        raise EmptyBatch("loss_and_grad needs at least one example")
    d_img, d_t, d_e, _ = model.dims
    b = len(batch)
    img, c_t, c_e, labels = _batch_matrices(model, batch)

    t_raw = c_t @ model.embed_target
    e_raw = c_e @ model.embed_extra
    t_norm, t_norms = _normalize_rows(t_raw)
    e_norm, e_norms = _normalize_rows(e_raw)
    x = np.concatenate([img, t_norm, e_norm], axis=1)

    z = x @ model.fc_weights.T + model.fc_bias
    z_shift = z - z.max(axis=1, keepdims=True)
    log_probs = z_shift - np.log(np.exp(z_shift).sum(axis=1, keepdims=True))
    loss = float(-log_probs[np.arange(b), labels].mean())

    dz = np.exp(log_probs)
    dz[np.arange(b), labels] -= 1.0
    dz /= b

    d_bias = dz.sum(axis=0)
    d_weights = dz.T @ x
    dx = dz @ model.fc_weights
    g_t = dx[:, d_img : d_img + d_t]
    g_e = dx[:, d_img + d_t :]

    def back_normalize(g, normed, norms):
        safe = norms > _NORM_EPS
        inner = (g * normed).sum(axis=1, keepdims=True)
        return np.where(safe, (g - normed * inner) / np.where(safe, norms, 1.0), g)

    d_t_raw = back_normalize(g_t, t_norm, t_norms)
    d_e_raw = back_normalize(g_e, e_norm, e_norms)
    d_embed_t = c_t.T @ d_t_raw
    d_embed_e = c_e.T @ d_e_raw

    return loss, Gradients(d_embed_t, d_embed_e, d_weights, d_bias)


# ---------------------------------------------------------------------------
# training


def build_answer_vocab(answers: Iterable[str], size: int) -> tuple[str, ...]:
    """The ``size`` most frequent answers, most frequent first, ties A-Z."""
    counts = Counter(answers)
    ranked = sorted(counts, key=lambda a: (-counts[a], a))
    return tuple(ranked[:size])


def train(
    exemplars: Iterable[Exemplar],
    features: Mapping[int, np.ndarray],
    vocab: Vocabulary,
    config: TrainConfig,
    on_epoch_end: Callable[[int, float], None] | None = None,
) -> LinearModel:
    """Mini-batch SGD over the exemplar stream; deterministic given the seed.

    The answer vocabulary is the most frequent answers in the stream;
    exemplars whose answer falls outside it are dropped (and counted in the
    log).  ``on_epoch_end`` receives (epoch, full-dataset loss) after each
    epoch when provided.
    """
    exemplar_list = list(exemplars)
    if not exemplar_list:
        raise NoTrainableExemplars("empty exemplar stream")

    answer_vocab = build_answer_vocab(
        (e.answer for e in exemplar_list), config.answer_vocab_size
    )
    answer_index = {a: i for i, a in enumerate(answer_vocab)}
    kept = [e for e in exemplar_list if e.answer in answer_index]
    dropped = len(exemplar_list) - len(kept)
    if dropped:
        logger.info("dropped %d exemplars with out-of-vocabulary answers", dropped)
    if not kept:
        raise NoTrainableExemplars("no exemplars with in-vocabulary answers")

    image_cache: dict[int, np.ndarray] = {}

    def image_vec(image_id: int) -> np.ndarray:
        if image_id not in image_cache:
            if image_id not in features:
                raise DanglingReference(f"no features for image {image_id}")
            image_cache[image_id] = l2_normalize(
                np.asarray(features[image_id], dtype=np.float64)
            )
        return image_cache[image_id]

    blocks: list[FeatureBlock] = []
    labels: list[int] = []
    for e in kept:
        blocks.append(make_feature_block(vocab, image_vec(e.image_id), e.target_question, e.extra))
        labels.append(answer_index[e.answer])

    d_img = blocks[0].image.shape[0]
    d = config.embed_dim
    n_answers = len(answer_vocab)
    v = len(vocab)
    s = config.weight_init_scale
    rng = np.random.default_rng(config.seed)
    model = LinearModel(
        embed_target=rng.uniform(-s, s, (v, d)),
        embed_extra=rng.uniform(-s, s, (v, d)),
        fc_weights=rng.uniform(-s, s, (n_answers, d_img + 2 * d)),
        fc_bias=rng.uniform(-s, s, n_answers),
        answer_vocab=answer_vocab,
    )
    velocity = (
        {k: np.zeros_like(p) for k, p in model.parameters().items()}
        if config.momentum > 0
        else None
    )

    n = len(blocks)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, config.batch_size):
            idx = order[lo : lo + config.batch_size]
            _, grads = loss_and_grad(model, [(blocks[i], labels[i]) for i in idx])
            for name, param in model.parameters().items():
                g = getattr(grads, name)
                if velocity is not None:
                    velocity[name] = config.momentum * velocity[name] - config.learning_rate * g
                    param += velocity[name]
                else:
                    param -= config.learning_rate * g
        for param in model.parameters().values():
            if not np.isfinite(param).all():
                raise FloatingPointError(f"non-finite parameters after epoch {epoch}")
        if on_epoch_end is not None:
            full_loss, _ = loss_and_grad(model, list(zip(blocks, labels)))
            on_epoch_end(epoch, full_loss)
    return model


# ---------------------------------------------------------------------------
# inference


def predict(
    model: LinearModel,
    vocab: Vocabulary,
    image_feat: np.ndarray,
    target_q: Question,
    extra_qs: Sequence[Question] | None = None,
) -> tuple[str, np.ndarray]:
    """Most probable answer and the full probability vector.

    Absent or empty ``extra_qs`` leave the extra block at the zero vector,
    the standard single-question test protocol.  Provided extra questions
    are concatenated into one string before featurization.
    """
    block = make_feature_block(vocab, image_feat, target_q, extra_qs)
    probs = forward(model, block)
    idx = int(np.argmax(probs))  # ties resolve to the lowest index
    return model.answer_vocab[idx], probs


def predict_multiple_choice(
    model: LinearModel,
    vocab: Vocabulary,
    image_feat: np.ndarray,
    target_q: Question,
    extra_qs: Sequence[Question] | None,
    choices: Sequence[str],
) -> str:
    """The choice with the highest model probability.

    Choices absent from the answer vocabulary score -inf; if none is
    present the first choice is returned.  Ties go to the earliest choice.
    """
    if not choices:
        raise ValueError("choices must be non-empty")
    _, probs = predict(model, vocab, image_feat, target_q, extra_qs)
    index = {a: i for i, a in enumerate(model.answer_vocab)}
    best_choice = choices[0]
    best_score = -np.inf
    for choice in choices:
        pos = index.get(choice)
        score = probs[pos] if pos is not None else -np.inf
        if score > best_score:
            best_choice = choice
            best_score = score
    return best_choice
