"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines alongside the pytest verdicts.
"""

import contextlib
import itertools
import json
import math
import random
import time

import numpy as np

from qsup.augment import AugmentMode, ImageRecord, generate_exemplars
from qsup.cli import main
from qsup.dataio import save_dataset, save_features
from qsup.evalstats import (
    AnswerType,
    bootstrap_ci,
    classify_answer_type,
    fuse_max,
    mean_average_precision,
)
from qsup.model import (
    FeatureBlock,
    LinearModel,
    TrainConfig,
    loss_and_grad,
    predict,
    train,
)
from qsup.qparse import Question, extract_objects
from qsup.synth import (
    answer_accuracy,
    majority_baseline,
    make_pair_dataset,
    make_separable_dataset,
)
from qsup.vocab import BowVector, Vocabulary, build_vocabulary

from test_cli import records_to_manifest


@contextlib.contextmanager
def criterion(num, name, budget_seconds=None):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"\nacceptance {num:02d} [{name}]: FAIL")
        raise
    elapsed = time.perf_counter() - start
    print(f"\nacceptance {num:02d} [{name}]: PASS ({elapsed:.2f}s)")
    if budget_seconds is not None:
        assert elapsed < budget_seconds, f"criterion {num} exceeded {budget_seconds}s"


def test_01_powerset_counts():
    with criterion(1, "powerset counts", budget_seconds=1.0):
        q = Question("q", 1, "what is on the table", answer="cup")
        u1 = Question("u1", 1, "is it clean")
        u2 = Question("u2", 1, "is this a kitchen")
        record = ImageRecord(1, (q,), (u1, u2))
        exemplars = list(generate_exemplars(record, AugmentMode.POWERSET))
        assert len(exemplars) == 8
        extra_sets = {frozenset(x.id for x in e.extra) for e in exemplars}
        assert extra_sets == {
            frozenset(),
            frozenset({"q"}),
            frozenset({"u1"}),
            frozenset({"u2"}),
            frozenset({"q", "u1"}),
            frozenset({"q", "u2"}),
            frozenset({"u1", "u2"}),
            frozenset({"q", "u1", "u2"}),
        }

        answered = tuple(
            Question(f"a{i}", 2, f"what is thing {i}", answer=str(i)) for i in range(3)
        )
        record = ImageRecord(2, answered)
        assert len(list(generate_exemplars(record, AugmentMode.POWERSET))) == 24


def test_02_extraction_goldens(obj_vocab, type_table):
    with criterion(2, "extraction goldens", budget_seconds=1.0):
        cases = {
            # the four worked question/class pairs
            "What color is the bus?": {"bus"},
            "Are people waiting for the food truck?": {"person", "truck"},
            "How many umbrellas are in the image?": {"umbrella"},
            "Is the bird sitting on a plant?": {"bird", "potted plant"},
            # phrase-word exclusivity
            "What does this teddy bear have on its neck?": {"teddy bear"},
            # unconfirmed question type
            "Is there a zebra in the photo?": set(),
            # super-category members
            "Which foot will kick the soccer ball?": {"sports ball"},
            "What color is the jet plane on the runway?": {"airplane"},
        }
        for text, expected in cases.items():
            got = extract_objects(Question("q", 1, text), obj_vocab, type_table).present
            assert got == expected, f"{text!r}: {sorted(got)} != {sorted(expected)}"


def test_03_gradient_check():
    with criterion(3, "gradient vs central differences", budget_seconds=10.0):
        rng = np.random.default_rng(17)
        v, d_t, d_e, d_img, n_answers = 5, 3, 3, 4, 3
        model = LinearModel(
            embed_target=rng.normal(size=(v, d_t)),
            embed_extra=rng.normal(size=(v, d_e)),
            fc_weights=rng.normal(size=(n_answers, d_img + d_t + d_e)),
            fc_bias=rng.normal(size=n_answers),
            answer_vocab=("a", "b", "c"),
        )
        batch = []
        for i in range(8):
            target = {int(k): int(rng.integers(1, 3)) for k in rng.choice(v, 2, replace=False)}
            # include empty extra bags so the zero-vector path is covered too
            extra = {} if i % 3 == 0 else {int(k): 1 for k in rng.choice(v, 2, replace=False)}
            image = rng.normal(size=d_img)
            image /= np.linalg.norm(image)
            batch.append(
                (FeatureBlock(image, BowVector(target, v), BowVector(extra, v)),
                 int(rng.integers(n_answers)))
            )
        _, grads = loss_and_grad(model, batch)
        h = 1e-5
        for name, param in model.parameters().items():
            analytic = getattr(grads, name)
            it = np.nditer(param, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = param[idx]
                param[idx] = orig + h
                up, _ = loss_and_grad(model, batch)
                param[idx] = orig - h
                down, _ = loss_and_grad(model, batch)
                param[idx] = orig
                numeric = (up - down) / (2 * h)
                rel = abs(analytic[idx] - numeric) / max(abs(analytic[idx]), abs(numeric), 1e-8)
                assert rel < 1e-4, f"{name}{idx}: rel err {rel:.2e}"


def test_04_separable_learning():
    with criterion(4, "separable synthetic learning", budget_seconds=30.0):
        records, features = make_separable_dataset(500, seed=11)
        vocab = build_vocabulary([q for r in records for q in r.all_questions])
        exemplars = list(
            itertools.chain.from_iterable(
                generate_exemplars(r, AugmentMode.PLAIN) for r in records
            )
        )
        assert len(exemplars) == 500
        cfg = TrainConfig(learning_rate=0.5, epochs=20, batch_size=32, seed=3,
                          answer_vocab_size=10, weight_init_scale=0.01, embed_dim=16)
        model = train(exemplars, features, vocab, cfg)
        assert answer_accuracy(model, vocab, records, features) >= 0.99

        # with no learning, the zero-initialized model always predicts the
        # most frequent answer (ties in the logits go to answer index 0)
        frozen_cfg = TrainConfig(learning_rate=0.0, epochs=20, batch_size=32, seed=3,
                                 answer_vocab_size=10, weight_init_scale=0.0, embed_dim=16)
        frozen = train(exemplars, features, vocab, frozen_cfg)
        assert answer_accuracy(frozen, vocab, records, features) == majority_baseline(records)


def test_05_extras_help():
    with criterion(5, "extra questions help", budget_seconds=120.0):
        gaps = []
        for seed in range(5):
            train_recs, train_feats = make_pair_dataset(300, seed=100 + seed)
            test_recs, test_feats = make_pair_dataset(150, seed=900 + seed, id_offset=10_000)
            vocab = build_vocabulary([q for r in train_recs for q in r.all_questions])
            features = {**train_feats, **test_feats}
            cfg = TrainConfig(learning_rate=0.5, epochs=12, batch_size=16, seed=seed,
                              answer_vocab_size=8, weight_init_scale=0.01, embed_dim=12)
            plain = train(
                itertools.chain.from_iterable(
                    generate_exemplars(r, AugmentMode.PLAIN) for r in train_recs
                ),
                features, vocab, cfg,
            )
            powerset = train(
                itertools.chain.from_iterable(
                    generate_exemplars(r, AugmentMode.POWERSET) for r in train_recs
                ),
                features, vocab, cfg,
            )
            acc_plain = answer_accuracy(plain, vocab, test_recs, test_feats, use_extras=False)
            acc_powerset = answer_accuracy(powerset, vocab, test_recs, test_feats, use_extras=True)
            gaps.append(acc_powerset - acc_plain)
        mean_gap = float(np.mean(gaps))
        assert mean_gap >= 0.10, f"mean gap {mean_gap:.3f} below 10 points; per-seed {gaps}"


def test_06_zero_vector_protocol():
    with criterion(6, "zero-vector test protocol"):
        rng = np.random.default_rng(23)
        vocab = Vocabulary(["what", "is", "this", "thing"])
        model = LinearModel(
            embed_target=rng.normal(size=(4, 3)),
            embed_extra=rng.normal(size=(4, 3)),
            fc_weights=rng.normal(size=(3, 2 + 3 + 3)),
            fc_bias=rng.normal(size=3),
            answer_vocab=("a", "b", "c"),
        )
        image = rng.normal(size=2)
        question = Question("q", 1, "what is this thing")
        answer_absent, probs_absent = predict(model, vocab, image, question, None)
        answer_empty, probs_empty = predict(model, vocab, image, question, [])
        assert answer_absent == answer_empty
        assert np.array_equal(probs_absent, probs_empty)


def test_07_bootstrap():
    with criterion(7, "bootstrap interval", budget_seconds=10.0):
        assert bootstrap_ci(np.ones(100), 0.999, 10_000, seed=1) == (1.0, 1.0)

        rng = np.random.default_rng(123)
        data = rng.integers(0, 2, 1000)
        lower, upper = bootstrap_ci(data, 0.999, 10_000, seed=7)
        half_width = (upper - lower) / 2.0
        normal_approx = 3.29 * math.sqrt(0.25 / 1000)
        assert abs(half_width - normal_approx) <= 0.25 * normal_approx, (
            f"half-width {half_width:.4f} vs normal approximation {normal_approx:.4f}"
        )


def _brute_force_ap(scores, truth, class_idx):
    order = sorted(scores, key=lambda i: (-float(scores[i][class_idx]), i))
    positives = [i for i in order if truth[i][class_idx]]
    if not positives:
        return None
    total = 0.0
    for i in positives:
        rank = order.index(i) + 1
        hits = sum(1 for j in order[:rank] if truth[j][class_idx])
        total += hits / rank
    return total / len(positives)


def test_08_map_oracle_equivalence():
    with criterion(8, "AP/mAP oracle equivalence", budget_seconds=10.0):
        rng = np.random.default_rng(31)
        grid = [0.0, 0.25, 0.5, 0.75, 1.0]
        ids = [0, 1, 2, 3]
        scores = {i: rng.choice(grid, size=2) for i in ids}
        # every possible truth assignment over 4 images and 2 classes
        for bits in itertools.product([0, 1], repeat=8):
            truth = {i: np.array(bits[2 * i : 2 * i + 2]) for i in ids}
            per_class, mean_ap = mean_average_precision(scores, truth, ["a", "b"])
            expected = {
                cls: _brute_force_ap(scores, truth, j) for j, cls in enumerate(["a", "b"])
            }
            assert per_class == expected
            valid = [ap for ap in expected.values() if ap is not None]
            assert mean_ap == (sum(valid) / len(valid) if valid else 0.0)


def test_09_fusion_dominance():
    with criterion(9, "max-fusion dominance", budget_seconds=5.0):
        rng = np.random.default_rng(37)
        for _ in range(1000):
            x_o = (rng.random(80) > 0.7).astype(float)
            x_c = rng.random(80)
            fused = fuse_max(x_o, x_c)
            assert (fused >= x_o).all()
            assert (fused >= x_c).all()

        # perfect-precision extraction can only improve the ranking
        ids = list(range(30))
        truth = {i: (rng.random(80) < 0.3).astype(int) for i in ids}
        x_c = {i: rng.random(80) for i in ids}
        x_o = {i: truth[i] * (rng.random(80) < 0.5) for i in ids}
        fused = {i: fuse_max(x_o[i], x_c[i]) for i in ids}
        classes = [f"c{j}" for j in range(80)]
        _, map_fused = mean_average_precision(fused, truth, classes)
        _, map_classifier = mean_average_precision(x_c, truth, classes)
        assert map_fused >= map_classifier


def test_10_train_determinism(tmp_path):
    with criterion(10, "byte-identical training runs"):
        records, features = make_pair_dataset(40, seed=3)
        save_dataset(records_to_manifest(records), tmp_path / "data.json")
        save_features(features, tmp_path / "feats.qvft")
        (tmp_path / "types.txt").write_text("[confirmed]\nwhat\n[unconfirmed]\nis\n")
        (tmp_path / "objects.txt").write_text("cat\n")
        config = {
            "dataset": "data.json",
            "features": "feats.qvft",
            "types": "types.txt",
            "object_vocab": "objects.txt",
            "seed": 13,
            "augment_mode": "powerset",
            "train": {"learning_rate": 0.5, "epochs": 3, "batch_size": 16,
                      "answer_vocab_size": 8, "weight_init_scale": 0.01, "embed_dim": 8},
        }
        model_bytes = []
        for run in ("first", "second"):
            config["out_dir"] = f"out_{run}"
            (tmp_path / "run.json").write_text(json.dumps(config))
            assert main(["train", "--config", str(tmp_path / "run.json")]) == 0
            model_bytes.append((tmp_path / f"out_{run}" / "model.qsmd").read_bytes())
        assert model_bytes[0] == model_bytes[1]


def test_11_answer_type_partition():
    with criterion(11, "answer-type partition totality"):
        assert classify_answer_type("yes") is AnswerType.YES_NO
        assert classify_answer_type("2") is AnswerType.NUMBER
        assert classify_answer_type("canadian") is AnswerType.WORD

        alphabet = "abcdefghijklmnopqrstuvwxyz0123456789 .,'-?!éπ漢"
        fuzz = random.Random(99)
        for _ in range(10_000):
            answer = "".join(
                fuzz.choices(alphabet, k=fuzz.randint(1, 12))
            ).strip() or "x"
            result = classify_answer_type(answer)
            assert result in (AnswerType.NUMBER, AnswerType.YES_NO, AnswerType.WORD)
