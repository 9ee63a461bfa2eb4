#!/usr/bin/env python3
"""Compare plain training against powerset augmentation with extra questions.

Builds a synthetic dataset whose answers need both the image feature and an
unanswered question, trains both variants over several seeds, and prints the
held-out accuracy table.
"""

import argparse
import itertools

import numpy as np

from qsup.augment import AugmentMode, generate_exemplars
from qsup.model import TrainConfig, train
from qsup.synth import answer_accuracy, make_pair_dataset
from qsup.vocab import build_vocabulary


def run_seed(seed, n_train, n_test, epochs):
    train_recs, train_feats = make_pair_dataset(n_train, seed=100 + seed)
    test_recs, test_feats = make_pair_dataset(n_test, seed=900 + seed, id_offset=10_000)
    vocab = build_vocabulary([q for r in train_recs for q in r.all_questions])
    features = {**train_feats, **test_feats}
    cfg = TrainConfig(learning_rate=0.5, epochs=epochs, batch_size=16, seed=seed,
                      answer_vocab_size=8, weight_init_scale=0.01, embed_dim=12)

    models = {}
    for mode in (AugmentMode.PLAIN, AugmentMode.POWERSET):
        stream = itertools.chain.from_iterable(
            generate_exemplars(r, mode) for r in train_recs
        )
        models[mode] = train(stream, features, vocab, cfg)

    return {
        "plain": answer_accuracy(models[AugmentMode.PLAIN], vocab, test_recs, test_feats),
        "powerset_zero": answer_accuracy(models[AugmentMode.POWERSET], vocab,
                                         test_recs, test_feats),
        "powerset_extras": answer_accuracy(models[AugmentMode.POWERSET], vocab,
                                           test_recs, test_feats, use_extras=True),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--train-images", type=int, default=300)
    parser.add_argument("--test-images", type=int, default=150)
    parser.add_argument("--epochs", type=int, default=12)
    args = parser.parse_args()

    print(f"{'seed':>4}  {'plain':>7}  {'2x zero':>8}  {'2x extras':>9}  {'gap':>7}")
    rows = []
    for seed in range(args.seeds):
        result = run_seed(seed, args.train_images, args.test_images, args.epochs)
        gap = result["powerset_extras"] - result["plain"]
        rows.append((result["plain"], result["powerset_zero"], result["powerset_extras"], gap))
        print(f"{seed:>4}  {result['plain']:7.3f}  {result['powerset_zero']:8.3f}  "
              f"{result['powerset_extras']:9.3f}  {gap:+7.3f}")
    means = np.mean(rows, axis=0)
    print(f"{'mean':>4}  {means[0]:7.3f}  {means[1]:8.3f}  {means[2]:9.3f}  {means[3]:+7.3f}")


if __name__ == "__main__":
    main()
