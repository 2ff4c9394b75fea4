"""End-to-end runs of the command-line surface on a small configuration."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from pointformer.__main__ import run
from pointformer.core.errors import EXIT_DATA, EXIT_OK, EXIT_USER
from pointformer.io.checkpoint import read_checkpoint

SMALL_CONFIG = """\
system:
  profile: tiny
geometry:
  n_points: 64
  n_groups: 8
  k: 8
backbone:
  depth: 2
  width: 16
  heads: 2
  d_hat: 4
  max_tokens: 17
embed:
  hidden: [16]
heads:
  num_classes: 4
  num_parts: 2
  fusion_widths: [16]
  point_widths: [8]
train:
  epochs: 1
  batch_size: 4
fewshot:
  test_per_class: 2
"""

TRIANGLE = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n"


def _jsonl(path: Path) -> list[dict]:
    return [json.loads(line) for line in path.read_text().splitlines()]


@pytest.fixture
def cfg(tmp_path) -> str:
    path = tmp_path / "small.yaml"
    path.write_text(SMALL_CONFIG)
    return str(path)


@pytest.fixture
def data(tmp_path, cfg) -> Path:
    out = tmp_path / "data"
    code = run(
        ["make-dataset", "--config", cfg, "--out", str(out),
         "--train-per-class", "4", "--test-per-class", "1"]
    )  # fmt: skip
    assert code == EXIT_OK
    return out


class TestSynthAndInspect:
    def test_synth_then_inspect(self, tmp_path, cfg):
        out = tmp_path / "w"
        assert run(["synth", "--config", cfg, "--seed", "3", "--out", str(out)]) == EXIT_OK
        assert (out / "backbone.apfw").exists()
        record = json.loads((out / "run.json").read_text())
        assert record["seed"] == 3
        assert record["formats"] == {"APFW": 1, "APFP": 1}
        assert run(["inspect", str(out / "backbone.apfw"), "--config", cfg]) == EXIT_OK

    def test_inspect_against_wrong_profile(self, tmp_path, cfg):
        out = tmp_path / "w"
        assert run(["synth", "--config", cfg, "--out", str(out)]) == EXIT_OK
        assert run(["inspect", str(out / "backbone.apfw"), "--profile", "vitb"]) == EXIT_USER

    def test_inspect_garbage_file(self, tmp_path, cfg):
        path = tmp_path / "junk.apfw"
        path.write_bytes(b"not a checkpoint at all")
        assert run(["inspect", str(path), "--config", cfg]) == EXIT_DATA

    def test_inspect_missing_file(self, tmp_path, cfg):
        assert run(["inspect", str(tmp_path / "missing.apfw"), "--config", cfg]) == EXIT_DATA

    def test_backbone_has_no_trainables(self, tmp_path, cfg):
        out = tmp_path / "w"
        assert run(["synth", "--config", cfg, "--out", str(out)]) == EXIT_OK
        tensors = read_checkpoint(out / "backbone.apfw")
        assert not any(t.requires_grad for t in tensors.values())

    def test_inspect_trained_model(self, tmp_path, cfg, data):
        out = tmp_path / "run"
        assert run(
            ["train", "--config", cfg, "--synth-seed", "0", "--out", str(out),
             "--train", str(data / "train" / "manifest.tsv")]
        ) == EXIT_OK  # fmt: skip
        assert run(["inspect", str(out / "model.apfw"), "--config", cfg]) == EXIT_OK

    def test_inspect_trained_model_against_other_head(self, tmp_path, cfg, data):
        out = tmp_path / "run"
        assert run(
            ["train", "--config", cfg, "--synth-seed", "0", "--out", str(out),
             "--train", str(data / "train" / "manifest.tsv")]
        ) == EXIT_OK  # fmt: skip
        other = tmp_path / "five.yaml"
        other.write_text(SMALL_CONFIG.replace("num_classes: 4", "num_classes: 5"))
        assert run(["inspect", str(out / "model.apfw"), "--config", str(other)]) == EXIT_USER
        code = run(["inspect", str(out / "model.apfw"), "--config", cfg, "--embedding", "rpn"])
        assert code == EXIT_USER


class TestArguments:
    def test_unknown_flag(self):
        with pytest.raises(SystemExit) as info:
            run(["train", "--no-such-flag"])
        assert info.value.code == EXIT_USER

    def test_missing_backbone_source(self, tmp_path, cfg, data):
        code = run(
            ["train", "--config", cfg, "--out", str(tmp_path / "r"),
             "--train", str(data / "train" / "manifest.tsv")]
        )  # fmt: skip
        assert code == EXIT_USER

    def test_missing_config_file(self, tmp_path):
        assert run(["synth", "--config", str(tmp_path / "nope.yaml")]) == EXIT_USER

    def test_missing_train_manifest(self, tmp_path, cfg):
        code = run(
            ["train", "--config", cfg, "--synth-seed", "0", "--out", str(tmp_path / "r"),
             "--train", str(tmp_path / "missing.tsv")]
        )  # fmt: skip
        assert code == EXIT_DATA

    def test_missing_preprocess_manifest(self, tmp_path, cfg):
        code = run(
            ["preprocess", str(tmp_path / "missing.tsv"), "--config", cfg,
             "--out", str(tmp_path / "o")]
        )  # fmt: skip
        assert code == EXIT_DATA

    def test_rpn_conflicts_with_trainable_embed(self, tmp_path, cfg, data):
        path = tmp_path / "conflict.yaml"
        path.write_text(SMALL_CONFIG.replace("embed:\n", "embed:\n  trainable: true\n"))
        code = run(
            ["train", "--config", str(path), "--embedding", "rpn", "--synth-seed", "0",
             "--out", str(tmp_path / "r"), "--train", str(data / "train" / "manifest.tsv")]
        )  # fmt: skip
        assert code == EXIT_USER


class TestMakeDataset:
    def test_classification_layout(self, data):
        train = (data / "train" / "manifest.tsv").read_text().splitlines()
        test = (data / "test" / "manifest.tsv").read_text().splitlines()
        assert (len(train), len(test)) == (16, 4)
        assert {line.split("\t")[1] for line in train} == {"0", "1", "2", "3"}
        assert all((data / "train" / line.split("\t")[0]).exists() for line in train)

    def test_segmentation_layout(self, tmp_path, cfg):
        out = tmp_path / "seg"
        code = run(
            ["make-dataset", "--config", cfg, "--task", "segmentation", "--out", str(out),
             "--train-per-class", "1", "--test-per-class", "1"]
        )  # fmt: skip
        assert code == EXIT_OK
        lines = (out / "train" / "manifest.tsv").read_text().splitlines()
        assert len(lines) == 4
        assert all(line.endswith("\tembedded") for line in lines)


class TestTrainAndEval:
    def test_train_writes_artifacts(self, tmp_path, cfg, data):
        out = tmp_path / "run"
        code = run(
            ["train", "--config", cfg, "--synth-seed", "0", "--seed", "5", "--out", str(out),
             "--train", str(data / "train" / "manifest.tsv"),
             "--test", str(data / "test" / "manifest.tsv")]
        )  # fmt: skip
        assert code == EXIT_OK
        history = _jsonl(out / "history.jsonl")
        assert [h["epoch"] for h in history] == [1]
        metrics = _jsonl(out / "metrics.jsonl")
        assert [m["split"] for m in metrics] == ["train", "test"]
        assert metrics[1]["samples"] == 4
        record = json.loads((out / "run.json").read_text())
        assert (record["seed"], record["synth_seed"], record["ablation"]) == (5, 0, "none")
        assert (out / "model.apfw").exists()

    def test_repeatable_without_deterministic_flag(self, tmp_path, data):
        path = tmp_path / "loose.yaml"
        path.write_text(SMALL_CONFIG.replace("train:\n", "train:\n  deterministic: false\n"))
        for name in ("a", "b"):
            assert run(
                ["train", "--config", str(path), "--synth-seed", "0",
                 "--out", str(tmp_path / name), "--train", str(data / "train" / "manifest.tsv")]
            ) == EXIT_OK  # fmt: skip
        a, b = (tmp_path / "a" / "model.apfw"), (tmp_path / "b" / "model.apfw")
        assert a.read_bytes() == b.read_bytes()
        record = json.loads((tmp_path / "a" / "run.json").read_text())
        assert record["config"]["train"]["deterministic"] is False

    def test_zero_lr_matches_plain_evaluation(self, tmp_path, cfg, data):
        manifest = str(data / "train" / "manifest.tsv")
        code = run(
            ["train", "--config", cfg, "--synth-seed", "0", "--lr-max", "0",
             "--out", str(tmp_path / "t"), "--train", manifest]
        )  # fmt: skip
        assert code == EXIT_OK
        code = run(
            ["eval", "--config", cfg, "--synth-seed", "0", "--out", str(tmp_path / "e"),
             "--data", manifest]
        )  # fmt: skip
        assert code == EXIT_OK
        trained = _jsonl(tmp_path / "t" / "metrics.jsonl")[0]
        plain = _jsonl(tmp_path / "e" / "metrics.jsonl")[0]
        assert trained["accuracy"] == plain["accuracy"]

    def test_eval_with_trained_weights(self, tmp_path, cfg, data):
        manifest = str(data / "test" / "manifest.tsv")
        assert run(
            ["train", "--config", cfg, "--synth-seed", "1", "--out", str(tmp_path / "t"),
             "--train", str(data / "train" / "manifest.tsv"), "--test", manifest]
        ) == EXIT_OK  # fmt: skip
        assert run(
            ["eval", "--config", cfg, "--synth-seed", "1", "--out", str(tmp_path / "e"),
             "--data", manifest, "--weights", str(tmp_path / "t" / "model.apfw")]
        ) == EXIT_OK  # fmt: skip
        trained = _jsonl(tmp_path / "t" / "metrics.jsonl")[1]
        restored = _jsonl(tmp_path / "e" / "metrics.jsonl")[0]
        assert restored["accuracy"] == trained["accuracy"]

    def test_ablation_recorded(self, tmp_path, cfg, data):
        out = tmp_path / "run"
        code = run(
            ["train", "--config", cfg, "--synth-seed", "0", "--ablation", "no-sequencer",
             "--out", str(out), "--train", str(data / "train" / "manifest.tsv")]
        )  # fmt: skip
        assert code == EXIT_OK
        record = json.loads((out / "run.json").read_text())
        assert record["ablation"] == "no-sequencer"
        assert record["sequencer"] is False
        assert record["adapters"] is True

    def test_train_from_checkpoint(self, tmp_path, cfg, data):
        weights = tmp_path / "w"
        assert run(["synth", "--config", cfg, "--out", str(weights)]) == EXIT_OK
        code = run(
            ["train", "--config", cfg, "--checkpoint", str(weights / "backbone.apfw"),
             "--embedding", "rpn", "--out", str(tmp_path / "r"),
             "--train", str(data / "train" / "manifest.tsv")]
        )  # fmt: skip
        assert code == EXIT_OK

    def test_segmentation_run(self, tmp_path, cfg):
        seg = tmp_path / "seg"
        assert run(
            ["make-dataset", "--config", cfg, "--task", "segmentation", "--out", str(seg),
             "--train-per-class", "1", "--test-per-class", "1"]
        ) == EXIT_OK  # fmt: skip
        out = tmp_path / "run"
        code = run(
            ["train", "--config", cfg, "--task", "segmentation", "--synth-seed", "0",
             "--out", str(out), "--train", str(seg / "train" / "manifest.tsv"),
             "--test", str(seg / "test" / "manifest.tsv")]
        )  # fmt: skip
        assert code == EXIT_OK
        test = _jsonl(out / "metrics.jsonl")[1]
        assert 0.0 <= test["miou_instance"] <= 1.0

    def test_classification_on_segmentation_data(self, tmp_path, cfg):
        seg = tmp_path / "seg"
        assert run(
            ["make-dataset", "--config", cfg, "--task", "segmentation", "--out", str(seg),
             "--train-per-class", "1", "--test-per-class", "1"]
        ) == EXIT_OK  # fmt: skip
        code = run(
            ["train", "--config", cfg, "--synth-seed", "0", "--out", str(tmp_path / "r"),
             "--train", str(seg / "train" / "manifest.tsv")]
        )  # fmt: skip
        assert code == EXIT_USER


class TestFewShot:
    def test_episodes(self, tmp_path, cfg, data):
        out = tmp_path / "fs"
        code = run(
            ["fewshot", "--config", cfg, "--synth-seed", "0", "--out", str(out),
             "--data", str(data / "train" / "manifest.tsv"),
             "--n-way", "2", "--k-shot", "2", "--repeats", "2", "--epochs", "1"]
        )  # fmt: skip
        assert code == EXIT_OK
        records = _jsonl(out / "metrics.jsonl")
        assert [r["episode"] for r in records[:2]] == [0, 1]
        assert records[2]["setting"] == "2-way 2-shot"
        assert 0.0 <= records[2]["mean"] <= 1.0

    def test_not_enough_samples(self, tmp_path, cfg, data):
        code = run(
            ["fewshot", "--config", cfg, "--synth-seed", "0", "--out", str(tmp_path / "fs"),
             "--data", str(data / "train" / "manifest.tsv"),
             "--n-way", "2", "--k-shot", "10", "--repeats", "1"]
        )  # fmt: skip
        assert code != EXIT_OK


class TestPreprocess:
    @pytest.fixture
    def raw(self, tmp_path) -> Path:
        raw = tmp_path / "raw"
        raw.mkdir()
        lines = []
        for i in range(10):
            text = TRIANGLE if i != 4 else "OFF\n3 1 0\n0 0 0\n1 0 0\n"
            (raw / f"s{i}.off").write_text(text)
            lines.append(f"s{i}.off\t{i % 4}\n")
        (raw / "manifest.tsv").write_text("".join(lines))
        return raw / "manifest.tsv"

    def test_keep_going(self, tmp_path, cfg, raw):
        out = tmp_path / "clean"
        code = run(["preprocess", str(raw), "--config", cfg, "--out", str(out), "--keep-going"])
        assert code == EXIT_DATA
        report = _jsonl(out / "report.jsonl")
        assert len(report) == 10
        assert [r["path"] for r in report if not r["ok"]] == ["s4.off"]
        assert all(r["n_out"] == 64 for r in report if r["ok"])
        assert len((out / "manifest.tsv").read_text().splitlines()) == 9
        assert len(list(out.glob("*.apfp"))) == 9

    def test_stops_at_first_failure(self, tmp_path, cfg, raw):
        out = tmp_path / "clean"
        code = run(["preprocess", str(raw), "--config", cfg, "--out", str(out)])
        assert code == EXIT_DATA
        report = _jsonl(out / "report.jsonl")
        assert len(report) == 5
        assert report[-1]["ok"] is False

    def test_all_good_is_deterministic(self, tmp_path, cfg, raw):
        raw.write_text("".join(f"s{i}.off\t0\n" for i in range(10) if i != 4))
        for name in ("a", "b"):
            out = str(tmp_path / name)
            assert run(["preprocess", str(raw), "--config", cfg, "--out", out]) == EXIT_OK
        for path in sorted((tmp_path / "a").glob("*.apfp")):
            assert path.read_bytes() == (tmp_path / "b" / path.name).read_bytes()

    def test_output_trains(self, tmp_path, cfg, raw):
        out = tmp_path / "clean"
        run(["preprocess", str(raw), "--config", cfg, "--out", str(out), "--keep-going"])
        code = run(
            ["train", "--config", cfg, "--synth-seed", "0", "--out", str(tmp_path / "r"),
             "--train", str(out / "manifest.tsv")]
        )  # fmt: skip
        assert code == EXIT_OK

    def test_empty_manifest(self, tmp_path, cfg):
        manifest = tmp_path / "empty.tsv"
        manifest.write_text("# nothing here\n")
        code = run(["preprocess", str(manifest), "--config", cfg, "--out", str(tmp_path / "o")])
        assert code == EXIT_USER
