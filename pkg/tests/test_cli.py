import json

import pytest

from qsup.cli import main
from qsup.dataio import DatasetManifest, ImageEntry, save_dataset, save_features
from qsup.synth import make_pair_dataset


def write_table2_fixture(path):
    payload = {
        "images": [{"image_id": i} for i in range(1, 5)],
        "questions": [
            {"id": "q1", "image_id": 1, "text": "What color is the bus?"},
            {"id": "q2", "image_id": 2, "text": "Are people waiting for the food truck?"},
            {"id": "q3", "image_id": 3, "text": "How many umbrellas are in the image?"},
            {"id": "q4", "image_id": 4, "text": "Is the bird sitting on a plant?"},
        ],
    }
    path.write_text(json.dumps(payload))


def records_to_manifest(records):
    images = tuple(ImageEntry(r.image_id, r.image_id) for r in records)
    questions = tuple(q for r in records for q in r.all_questions)
    return DatasetManifest(images, questions)


@pytest.fixture
def pair_setup(tmp_path):
    records, features = make_pair_dataset(60, seed=5)
    save_dataset(records_to_manifest(records), tmp_path / "data.json")
    save_features(features, tmp_path / "feats.qvft")
    cfg = {
        "dataset": "data.json",
        "features": "feats.qvft",
        "types": "types.txt",
        "object_vocab": "objects.txt",
        "out_dir": "out",
        "seed": 3,
        "augment_mode": "powerset",
        "train": {"learning_rate": 0.5, "epochs": 4, "batch_size": 16,
                  "answer_vocab_size": 8, "weight_init_scale": 0.01, "embed_dim": 8},
    }
    (tmp_path / "types.txt").write_text("[confirmed]\nwhat\n[unconfirmed]\nis\n")
    (tmp_path / "objects.txt").write_text("cat\n")
    (tmp_path / "run.json").write_text(json.dumps(cfg))
    return tmp_path


class TestUsageErrors:
    def test_unknown_subcommand(self, capsys):
        assert main(["frobnicate"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_no_subcommand(self, capsys):
        assert main([]) == 1
        assert "usage" in capsys.readouterr().err

    def test_missing_required_flag(self, capsys):
        assert main(["extract", "--out", "x.jsonl"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_missing_file_is_data_error(self, tmp_path, capsys):
        code = main(["extract", "--questions", str(tmp_path / "absent.json"),
                     "--out", str(tmp_path / "out.jsonl")])
        assert code == 2
        assert "error" in capsys.readouterr().err

    def test_simulate_needs_exactly_one_mode(self, tmp_path, capsys):
        write_table2_fixture(tmp_path / "data.json")
        assert main(["simulate", "--in", str(tmp_path / "data.json"),
                     "--seed", "1", "--out", str(tmp_path / "o.json")]) == 1


class TestExtract:
    def test_table2_fixture(self, tmp_path):
        data = tmp_path / "data.json"
        out = tmp_path / "labels.jsonl"
        write_table2_fixture(data)
        assert main(["extract", "--questions", str(data), "--out", str(out)]) == 0
        rows = [json.loads(line) for line in out.read_text().splitlines()]
        by_image = {r["image_id"]: set(r["labels"]) for r in rows}
        assert by_image == {
            1: {"bus"},
            2: {"person", "truck"},
            3: {"umbrella"},
            4: {"bird", "potted plant"},
        }
        assert (tmp_path / "extract.snapshot.json").exists()


class TestAugment:
    def test_powerset_counts(self, tmp_path):
        records, _ = make_pair_dataset(3, seed=1)
        save_dataset(records_to_manifest(records), tmp_path / "data.json")
        out = tmp_path / "ex.jsonl"
        assert main(["augment", "--in", str(tmp_path / "data.json"),
                     "--mode", "powerset", "--out", str(out)]) == 0
        rows = [json.loads(line) for line in out.read_text().splitlines()]
        assert len(rows) == 3 * 4  # 1 answered, |Q_all|=2 per image
        assert {"image_id", "target_id", "extra_ids", "answer"} <= set(rows[0])


class TestTrainPredictEval:
    def test_pipeline_and_determinism(self, pair_setup):
        base = pair_setup
        assert main(["train", "--config", str(base / "run.json")]) == 0
        first = (base / "out" / "model.qsmd").read_bytes()
        assert (base / "out" / "vocab.txt").exists()
        assert (base / "out" / "train.snapshot.json").exists()

        assert main(["train", "--config", str(base / "run.json")]) == 0
        second = (base / "out" / "model.qsmd").read_bytes()
        assert first == second

        pred = base / "pred.jsonl"
        assert main(["predict",
                     "--model", str(base / "out" / "model.qsmd"),
                     "--vocab", str(base / "out" / "vocab.txt"),
                     "--features", str(base / "feats.qvft"),
                     "--questions", str(base / "data.json"),
                     "--use-extras",
                     "--out", str(pred)]) == 0
        rows = [json.loads(line) for line in pred.read_text().splitlines()]
        assert len(rows) == 120  # answered + unanswered questions

        assert main(["eval", "--task", "vqa", "--pred", str(pred),
                     "--dataset", str(base / "data.json"),
                     "--out-prefix", str(base / "report")]) == 0
        report = json.loads((base / "report.json").read_text())
        assert 0.0 <= report["overall"] <= 1.0
        assert (base / "report.csv").exists()

        assert main(["bootstrap", "--pred", str(pred),
                     "--dataset", str(base / "data.json"),
                     "--confidence", "0.9", "--resamples", "1000", "--seed", "2",
                     "--out", str(base / "ci.json")]) == 0
        ci = json.loads((base / "ci.json").read_text())
        assert ci["lower"] <= ci["accuracy"] <= ci["upper"]

    def test_eval_rerun_is_reproducible(self, pair_setup, capsys):
        base = pair_setup
        main(["train", "--config", str(base / "run.json")])
        pred = base / "pred.jsonl"
        main(["predict", "--model", str(base / "out" / "model.qsmd"),
              "--vocab", str(base / "out" / "vocab.txt"),
              "--features", str(base / "feats.qvft"),
              "--questions", str(base / "data.json"), "--out", str(pred)])
        main(["eval", "--pred", str(pred), "--dataset", str(base / "data.json"),
              "--out-prefix", str(base / "r1")])
        main(["eval", "--pred", str(pred), "--dataset", str(base / "data.json"),
              "--out-prefix", str(base / "r2")])
        assert (base / "r1.json").read_text() == (base / "r2.json").read_text()


class TestExtractionEval:
    def test_per_class_report(self, tmp_path):
        payload = {
            "images": [
                {"image_id": 1, "gt_labels": ["bus"]},
                {"image_id": 2, "gt_labels": ["person", "truck", "cat"]},
            ],
            "questions": [
                {"id": "q1", "image_id": 1, "text": "What color is the bus?"},
                {"id": "q2", "image_id": 2, "text": "Are people waiting for the food truck?"},
            ],
        }
        data = tmp_path / "data.json"
        data.write_text(json.dumps(payload))
        labels = tmp_path / "labels.jsonl"
        assert main(["extract", "--questions", str(data), "--out", str(labels)]) == 0
        assert main(["eval", "--task", "extraction", "--labels", str(labels),
                     "--dataset", str(data), "--out-prefix", str(tmp_path / "pr")]) == 0
        report = json.loads((tmp_path / "pr.json").read_text())
        assert report["per_class"]["bus"]["recall"] == 1.0
        assert report["per_class"]["cat"]["recall"] == 0.0
        assert report["per_class"]["person"]["precision"] == 1.0


class TestWordTargets:
    def test_full_mode(self, tmp_path):
        write_table2_fixture(tmp_path / "data.json")
        out = tmp_path / "targets.jsonl"
        assert main(["word-targets", "--questions", str(tmp_path / "data.json"),
                     "--mode", "full", "--out", str(out)]) == 0
        rows = [json.loads(line) for line in out.read_text().splitlines()]
        assert len(rows) == 4
        words = (tmp_path / "targets.jsonl.words").read_text().split()
        row1 = rows[0]
        assert {words[i] for i in row1["indices"]} == {"what", "color", "is", "the", "bus"}

    def test_classes80_mode(self, tmp_path):
        write_table2_fixture(tmp_path / "data.json")
        out = tmp_path / "targets.jsonl"
        assert main(["word-targets", "--questions", str(tmp_path / "data.json"),
                     "--mode", "classes80", "--out", str(out)]) == 0
        words = (tmp_path / "targets.jsonl.words").read_text().splitlines()
        assert len(words) == 80
        rows = [json.loads(line) for line in out.read_text().splitlines()]
        assert {words[i] for i in rows[0]["indices"]} == {"bus"}


class TestSimulate:
    def test_keep_mode(self, tmp_path):
        records, _ = make_pair_dataset(5, seed=2)
        save_dataset(records_to_manifest(records), tmp_path / "data.json")
        out = tmp_path / "sim.json"
        assert main(["simulate", "--in", str(tmp_path / "data.json"),
                     "--seed", "4", "--keep", "0", "--out", str(out)]) == 0
        result = json.loads(out.read_text())
        assert all("answer" not in q for q in result["questions"])

    def test_fraction_mode(self, tmp_path):
        records, _ = make_pair_dataset(10, seed=2)
        save_dataset(records_to_manifest(records), tmp_path / "data.json")
        kept = tmp_path / "kept.json"
        rest = tmp_path / "rest.json"
        assert main(["simulate", "--in", str(tmp_path / "data.json"),
                     "--seed", "4", "--fraction", "0.5",
                     "--out", str(kept), "--out-rest", str(rest)]) == 0
        kept_payload = json.loads(kept.read_text())
        rest_payload = json.loads(rest.read_text())
        assert len(kept_payload["images"]) == 5
        assert len(rest_payload["images"]) == 5
        assert all("answer" not in q for q in rest_payload["questions"])
