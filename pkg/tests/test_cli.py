"""Command-line checks: exit codes, artifact layout, manifests, embedded
provenance comments, and byte-level determinism of reruns."""

import json
import subprocess
import sys

import pytest

from relexpl.cli import EXIT_INVALID, EXIT_MISSING_INPUT, EXIT_OK, main
from relexpl.corpus import load_corpus
from relexpl.explain import load_scores

GEN_CONFIG = {
    "n_relations": 2,
    "vocab_size": 80,
    "n_fget": 3,
    "n_mention_tokens": 12,
    "n_train_bags": 60,
    "n_test_bags": 16,
    "sentences_per_bag": [2, 3],
    "sentence_len": [5, 7],
    "irrelevant_rate": 0.4,
    "negative_rate": 0.5,
    "test_negative_rate": 0.0,
}

SMALL_ENCODER = ["--d-w", "8", "--d-p", "2", "--pos-clip", "6",
                 "--widths", "2,3", "--channels", "3"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    config = root / "gen.json"
    config.write_text(json.dumps(GEN_CONFIG))
    assert main(["gen-data", "--config", str(config),
                 "--out", str(root / "data"), "--seed", "1"]) == EXIT_OK
    assert main(["train", "--corpus", str(root / "data" / "train.jsonl"),
                 "--out", str(root / "run"), "--epochs", "2", "--lr", "0.01",
                 "--seed", "1", *SMALL_ENCODER]) == EXIT_OK
    return root


class TestGenData:
    def test_writes_valid_splits(self, workspace):
        train = load_corpus(str(workspace / "data" / "train.jsonl"))
        test = load_corpus(str(workspace / "data" / "test.jsonl"))
        assert len(train) == 60 and len(test) == 16

    def test_same_seed_identical_files(self, workspace, tmp_path):
        config = workspace / "gen.json"
        for out in ("a", "b"):
            assert main(["gen-data", "--config", str(config),
                         "--out", str(tmp_path / out), "--seed", "7"]) == EXIT_OK
        for name in ("train.jsonl", "test.jsonl", "manifest.json"):
            a = (tmp_path / "a" / name).read_bytes()
            b = (tmp_path / "b" / name).read_bytes()
            assert a == b, name

    def test_missing_config_exits_2(self, tmp_path):
        code = main(["gen-data", "--config", str(tmp_path / "absent.json"),
                     "--out", str(tmp_path / "out")])
        assert code == EXIT_MISSING_INPUT

    def test_invalid_config_exits_3(self, tmp_path):
        config = tmp_path / "gen.json"
        config.write_text(json.dumps({**GEN_CONFIG, "n_relations": 0}))
        code = main(["gen-data", "--config", str(config),
                     "--out", str(tmp_path / "out")])
        assert code == EXIT_INVALID

    def test_unknown_config_key_exits_3(self, tmp_path):
        config = tmp_path / "gen.json"
        config.write_text(json.dumps({**GEN_CONFIG, "bogus_knob": 1}))
        assert main(["gen-data", "--config", str(config),
                     "--out", str(tmp_path / "out")]) == EXIT_INVALID


class TestManifests:
    def test_manifest_records_run_identity(self, workspace):
        manifest = json.loads((workspace / "run" / "manifest.json").read_text())
        assert manifest["command"] == "train"
        assert manifest["seed"] == 1
        assert manifest["outputs"] == ["checkpoint.json"]
        assert len(manifest["config_hash"]) == 64
        assert manifest["config"]["epochs"] == 2
        assert "version" in manifest
        assert "best_val_auc" in manifest["metrics"]

    def test_every_command_writes_a_manifest(self, workspace, tmp_path):
        ckpt = str(workspace / "run" / "checkpoint.json")
        test_corpus = str(workspace / "data" / "test.jsonl")
        assert main(["eval", "--checkpoint", ckpt, "--corpus", test_corpus,
                     "--out", str(tmp_path / "e")]) == EXIT_OK
        assert main(["explain", "--checkpoint", ckpt, "--corpus", test_corpus,
                     "--out", str(tmp_path / "x")]) == EXIT_OK
        for sub in ("e", "x"):
            assert (tmp_path / sub / "manifest.json").exists()


class TestTrain:
    def test_same_seed_identical_checkpoints(self, workspace, tmp_path):
        corpus = str(workspace / "data" / "train.jsonl")
        for out in ("a", "b"):
            assert main(["train", "--corpus", corpus,
                         "--out", str(tmp_path / out), "--epochs", "1",
                         "--seed", "4", *SMALL_ENCODER]) == EXIT_OK
        a = (tmp_path / "a" / "checkpoint.json").read_bytes()
        b = (tmp_path / "b" / "checkpoint.json").read_bytes()
        assert a == b

    def test_zero_weight_distractor_flag_is_inert(self, workspace, tmp_path):
        corpus = str(workspace / "data" / "train.jsonl")
        assert main(["train", "--corpus", corpus, "--out", str(tmp_path / "plain"),
                     "--epochs", "1", "--seed", "4", *SMALL_ENCODER]) == EXIT_OK
        assert main(["train", "--corpus", corpus, "--out", str(tmp_path / "ld0"),
                     "--epochs", "1", "--seed", "4", "--ld", "--lam", "0.0",
                     *SMALL_ENCODER]) == EXIT_OK
        # checkpoint metadata records the differing flags; the learned
        # parameters and the metrics must not differ at all
        plain = json.loads((tmp_path / "plain" / "checkpoint.json").read_text())
        ld0 = json.loads((tmp_path / "ld0" / "checkpoint.json").read_text())
        assert plain["params"] == ld0["params"]
        m_plain = json.loads((tmp_path / "plain" / "manifest.json").read_text())
        m_ld0 = json.loads((tmp_path / "ld0" / "manifest.json").read_text())
        assert m_plain["metrics"] == m_ld0["metrics"]

    def test_missing_corpus_exits_2(self, tmp_path):
        assert main(["train", "--corpus", str(tmp_path / "absent.jsonl"),
                     "--out", str(tmp_path / "out")]) == EXIT_MISSING_INPUT

    def test_directsup_and_ld_paths_run(self, workspace, tmp_path):
        corpus = str(workspace / "data" / "train.jsonl")
        assert main(["train", "--corpus", corpus, "--out", str(tmp_path / "ds"),
                     "--model", "directsup", "--epochs", "1", "--seed", "0",
                     *SMALL_ENCODER]) == EXIT_OK
        assert main(["train", "--corpus", corpus, "--out", str(tmp_path / "ld"),
                     "--ld", "--epochs", "1", "--seed", "0",
                     *SMALL_ENCODER]) == EXIT_OK

    def test_fusion_flag_trains(self, workspace, tmp_path):
        corpus = str(workspace / "data" / "train.jsonl")
        assert main(["train", "--corpus", corpus, "--out", str(tmp_path / "fu"),
                     "--fusion", "--d-e", "4", "--epochs", "1", "--seed", "0",
                     *SMALL_ENCODER]) == EXIT_OK


class TestEval:
    def test_outputs_and_provenance_comment(self, workspace, tmp_path):
        out = tmp_path / "eval"
        assert main(["eval", "--checkpoint", str(workspace / "run" / "checkpoint.json"),
                     "--corpus", str(workspace / "data" / "test.jsonl"),
                     "--out", str(out), "--seed", "3"]) == EXIT_OK
        lines = (out / "pr_curve.csv").read_text().splitlines()
        assert lines[0].startswith("# seed=3 config_hash=")
        assert lines[1] == "recall,precision"
        metrics = json.loads((out / "metrics.json").read_text())
        assert set(metrics) >= {"auc_04", "shuffled_auc_04", "n_pairs",
                                "n_positive", "seed", "config_hash"}
        assert metrics["n_pairs"] == 16 * 2

    def test_rerun_is_byte_identical(self, workspace, tmp_path):
        argv = ["eval", "--checkpoint", str(workspace / "run" / "checkpoint.json"),
                "--corpus", str(workspace / "data" / "test.jsonl"), "--seed", "3"]
        assert main(argv + ["--out", str(tmp_path / "a")]) == EXIT_OK
        assert main(argv + ["--out", str(tmp_path / "b")]) == EXIT_OK
        for name in ("pr_curve.csv", "metrics.json"):
            assert (tmp_path / "a" / name).read_bytes() == \
                (tmp_path / "b" / name).read_bytes()

    def test_untrained_model_scores_near_baseline(self, workspace, tmp_path):
        corpus = str(workspace / "data" / "train.jsonl")
        assert main(["train", "--corpus", corpus, "--out", str(tmp_path / "zero"),
                     "--epochs", "0", "--seed", "0", *SMALL_ENCODER]) == EXIT_OK
        assert main(["eval", "--checkpoint", str(tmp_path / "zero" / "checkpoint.json"),
                     "--corpus", str(workspace / "data" / "test.jsonl"),
                     "--out", str(tmp_path / "ev")]) == EXIT_OK
        metrics = json.loads((tmp_path / "ev" / "metrics.json").read_text())
        assert 0.4 < metrics["auc_04"] / metrics["shuffled_auc_04"] < 2.5

    def test_missing_checkpoint_exits_2(self, workspace, tmp_path):
        assert main(["eval", "--checkpoint", str(tmp_path / "absent.json"),
                     "--corpus", str(workspace / "data" / "test.jsonl"),
                     "--out", str(tmp_path / "out")]) == EXIT_MISSING_INPUT


class TestExplain:
    def test_scores_cover_requested_methods(self, workspace, tmp_path):
        out = tmp_path / "x"
        assert main(["explain", "--checkpoint", str(workspace / "run" / "checkpoint.json"),
                     "--corpus", str(workspace / "data" / "test.jsonl"),
                     "--out", str(out), "--methods", "gi,loo"]) == EXIT_OK
        scores = load_scores(str(out / "scores.jsonl"))
        assert scores
        assert {s.method for s in scores} == {"gi", "loo"}

    def test_unknown_method_exits_3(self, workspace, tmp_path):
        assert main(["explain", "--checkpoint", str(workspace / "run" / "checkpoint.json"),
                     "--corpus", str(workspace / "data" / "test.jsonl"),
                     "--out", str(tmp_path / "x"),
                     "--methods", "lime"]) == EXIT_INVALID


class TestExplEval:
    def run_explain(self, workspace, out):
        assert main(["explain", "--checkpoint", str(workspace / "run" / "checkpoint.json"),
                     "--corpus", str(workspace / "data" / "test.jsonl"),
                     "--out", str(out)]) == EXIT_OK
        return out / "scores.jsonl"

    def test_kendall_table_layout(self, workspace, tmp_path):
        scores = self.run_explain(workspace, tmp_path / "x")
        out = tmp_path / "k"
        assert main(["expl-eval", "--checkpoint", str(workspace / "run" / "checkpoint.json"),
                     "--corpus", str(workspace / "data" / "test.jsonl"),
                     "--scores", str(scores), "--out", str(out),
                     "--seed", "2"]) == EXIT_OK
        lines = (out / "kendall.csv").read_text().splitlines()
        assert lines[0].startswith("# seed=2 config_hash=")
        assert lines[1] == "method,bucket,tau,n_tuples"
        rows = [line.split(",") for line in lines[2:]]
        assert [r[0] for r in rows] == sorted(
            m for m in ("attention", "saliency", "gi", "loo") for _ in range(3))
        assert {r[1] for r in rows} == {"overall", "high", "low"}
        for r in rows:
            if r[2] != "nan":
                assert -1.0 <= float(r[2]) <= 1.0

    def test_empty_scores_exit_3(self, workspace, tmp_path):
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        assert main(["expl-eval", "--checkpoint", str(workspace / "run" / "checkpoint.json"),
                     "--corpus", str(workspace / "data" / "test.jsonl"),
                     "--scores", str(empty),
                     "--out", str(tmp_path / "k")]) == EXIT_INVALID


class TestAugment:
    def test_augmented_bags_round_trip(self, workspace, tmp_path):
        out = tmp_path / "aug"
        assert main(["augment", "--corpus", str(workspace / "data" / "train.jsonl"),
                     "--out", str(out), "--seed", "5"]) == EXIT_OK
        bags = load_corpus(str(out / "augmented.jsonl"))
        originals = load_corpus(str(workspace / "data" / "train.jsonl"))
        expected = sum(len(b.relations) for b in originals)
        assert len(bags) == expected
        for bag in bags:
            assert "#k" in bag.bag_id
            assert bag.sentences[-1].distractor
            assert not any(s.distractor for s in bag.sentences[:-1])

    def test_deterministic(self, workspace, tmp_path):
        corpus = str(workspace / "data" / "train.jsonl")
        for out in ("a", "b"):
            assert main(["augment", "--corpus", corpus,
                         "--out", str(tmp_path / out), "--seed", "5"]) == EXIT_OK
        assert (tmp_path / "a" / "augmented.jsonl").read_bytes() == \
            (tmp_path / "b" / "augmented.jsonl").read_bytes()


class TestAvg:
    def test_averages_numeric_keys(self, tmp_path):
        for i, auc in enumerate((10.0, 20.0, 30.0)):
            run = tmp_path / f"run{i}"
            run.mkdir()
            (run / "metrics.json").write_text(
                json.dumps({"auc_04": auc, "n_pairs": 40, "note": "x"}))
        out = tmp_path / "avg"
        assert main(["avg", "--runs", *(str(tmp_path / f"run{i}") for i in range(3)),
                     "--out", str(out)]) == EXIT_OK
        got = json.loads((out / "metrics.json").read_text())
        assert got["n_runs"] == 3
        assert got["mean"]["auc_04"] == 20.0
        assert got["mean"]["n_pairs"] == 40.0
        assert "note" not in got["mean"]

    def test_missing_run_exits_2(self, tmp_path):
        assert main(["avg", "--runs", str(tmp_path / "nope"),
                     "--out", str(tmp_path / "avg")]) == EXIT_MISSING_INPUT


class TestEntryPoint:
    def test_module_invocation_usage_error(self):
        proc = subprocess.run(
            [sys.executable, "-m", "relexpl.cli", "gen-data"],
            capture_output=True, text=True)
        assert proc.returncode == 2
        assert "--config" in proc.stderr

    def test_version_flag(self):
        proc = subprocess.run(
            [sys.executable, "-m", "relexpl.cli", "--version"],
            capture_output=True, text=True)
        assert proc.returncode == 0
        assert "relexpl" in proc.stdout
