import json
from pathlib import Path

import numpy as np
import pytest

from _synth import keyed_corpus

from codesearch import cli
from codesearch.corpus import write_corpus


@pytest.fixture
def workspace(tmp_path):
    corpus = keyed_corpus(14, seed=2)
    write_corpus(corpus, tmp_path / "train.jsonl")
    write_corpus(corpus[:6], tmp_path / "dev.jsonl")
    write_corpus(corpus[6:12], tmp_path / "eval.jsonl")
    return tmp_path


def run(argv):
    return cli.main([str(a) for a in argv])


def make_config(ws, **train_overrides):
    train = {
        "batch_size": 4,
        "max_epochs": 3,
        "patience": 10,
        "learning_rate": 0.01,
        "dev_distractors": 4,
    }
    train.update(train_overrides)
    config = {
        "seed": 5,
        "paths": {
            "corpus": str(ws / "train.jsonl"),
            "dev": str(ws / "dev.jsonl"),
            "vocab": str(ws / "vocab.jsonl"),
            "embeddings": str(ws / "emb.cncw"),
            "out_dir": str(ws / "run"),
        },
        "encoder": {
            "family": "cnn",
            "shared_weights": True,
            "num_filters": 8,
            "window_size": 2,
            "embed_dim": 8,
            "margin": 0.05,
            "max_len_question": 10,
            "max_len_code": 12,
        },
        "train": train,
    }
    path = ws / "config.json"
    path.write_text(json.dumps(config))
    return path


def prepare_vocab_and_vectors(ws):
    assert run(["ingest", "--corpus", ws / "train.jsonl", "--out", ws / "vocab.jsonl", "--min-count", 1]) == 0
    assert (
        run(
            [
                "train-w2v",
                "--corpus", ws / "train.jsonl",
                "--vocab", ws / "vocab.jsonl",
                "--out", ws / "emb.cncw",
                "--dim", 8,
                "--epochs", 1,
                "--seed", 5,
            ]
        )
        == 0
    )


class TestPipeline:
    def test_full_pipeline(self, workspace, capsys):
        ws = workspace
        prepare_vocab_and_vectors(ws)
        out = capsys.readouterr().out
        assert "pairs total=14" in out
        assert "train_auto=14" in out

        config = make_config(ws)
        assert run(["train", "--config", config]) == 0
        assert (ws / "run" / "best.cncm").exists()
        assert (ws / "run" / "report.jsonl").exists()
        assert (ws / "run" / "ckpt-epoch1.cncm").exists()
        capsys.readouterr()

        assert (
            run(
                [
                    "eval",
                    "--checkpoint", ws / "run" / "best.cncm",
                    "--vocab", ws / "vocab.jsonl",
                    "--eval", ws / "eval.jsonl",
                    "--pool", ws / "train.jsonl",
                    "--summary-out", ws / "summary.json",
                    "--histogram-out", ws / "hist.csv",
                    "--distractors", 4,
                    "--iterations", 2,
                    "--seed", 5,
                ]
            )
            == 0
        )
        summary = json.loads((ws / "summary.json").read_text())
        assert 0.0 < summary["mrr_mean"] <= 1.0
        hist_lines = (ws / "hist.csv").read_text().splitlines()
        assert hist_lines[0] == "position,count"
        assert sum(int(l.split(",")[1]) for l in hist_lines[1:]) == 2 * 6
        capsys.readouterr()

        assert (
            run(
                [
                    "index",
                    "--checkpoint", ws / "run" / "best.cncm",
                    "--vocab", ws / "vocab.jsonl",
                    "--corpus", ws / "train.jsonl",
                    "--out", ws / "index.cnci",
                ]
            )
            == 0
        )
        capsys.readouterr()

        assert (
            run(
                [
                    "search",
                    "--checkpoint", ws / "run" / "best.cncm",
                    "--vocab", ws / "vocab.jsonl",
                    "--index", ws / "index.cnci",
                    "--query", "how to key3",
                    "--top-k", 3,
                ]
            )
            == 0
        )
        out = capsys.readouterr().out
        assert out.startswith("1. ")
        assert "score=" in out

    def test_compare_emits_csv_rows(self, workspace, capsys):
        ws = workspace
        prepare_vocab_and_vectors(ws)
        config = {
            "seed": 3,
            "paths": {
                "corpus": str(ws / "train.jsonl"),
                "dev": str(ws / "dev.jsonl"),
                "eval": str(ws / "eval.jsonl"),
                "vocab": str(ws / "vocab.jsonl"),
                "embeddings": str(ws / "emb.cncw"),
            },
            "train": {"batch_size": 4, "max_epochs": 2, "dev_distractors": 4},
            "protocol": {"distractors": 4, "iterations": 2},
            "models": [
                {
                    "name": "embedding",
                    "encoder": {"family": "embedding", "embed_dim": 8, "margin": 0.1,
                                "max_len_question": 10, "max_len_code": 12},
                },
                {
                    "name": "shared-cnn",
                    "encoder": {"family": "cnn", "shared_weights": True, "num_filters": 8,
                                "window_size": 2, "embed_dim": 8, "margin": 0.05,
                                "max_len_question": 10, "max_len_code": 12},
                },
            ],
        }
        (ws / "compare.json").write_text(json.dumps(config))
        assert run(["compare", "--config", ws / "compare.json", "--out", ws / "results.csv"]) == 0
        lines = (ws / "results.csv").read_text().splitlines()
        assert lines[0] == "model,mrr_mean,mrr_std,top1_mean,top1_std"
        assert len(lines) == 3
        assert lines[1].startswith("embedding,")
        assert lines[2].startswith("shared-cnn,")


class TestSpecExamples:
    def test_eval_on_random_init_model_near_harmonic_baseline(self, tmp_path, capsys):
        # oracle: H_20/20 for a 20-candidate list ranked by an untrained model
        # over a corpus with no question/code lexical overlap
        from _synth import unrelated_corpus

        from codesearch.corpus import build_vocab
        from codesearch.encoders import CodeSearchModel, EncoderConfig

        corpus = unrelated_corpus(120, seed=11)
        write_corpus(corpus, tmp_path / "pairs.jsonl")
        vocab = build_vocab(corpus, min_count=1)
        vocab.save(tmp_path / "vocab.jsonl")
        config = EncoderConfig(
            family="cnn", shared_weights=True, num_filters=16, window_size=2,
            embed_dim=16, max_len_question=10, max_len_code=12,
        )
        CodeSearchModel(config, vocab, seed=0).save(tmp_path / "random.cncm")
        assert (
            run(
                [
                    "eval",
                    "--checkpoint", tmp_path / "random.cncm",
                    "--vocab", tmp_path / "vocab.jsonl",
                    "--eval", tmp_path / "pairs.jsonl",
                    "--pool", tmp_path / "pairs.jsonl",
                    "--summary-out", tmp_path / "s.json",
                    "--histogram-out", tmp_path / "h.csv",
                    "--distractors", 19,
                    "--iterations", 5,
                    "--seed", 3,
                ]
            )
            == 0
        )
        summary = json.loads((tmp_path / "s.json").read_text())
        harmonic = sum(1.0 / r for r in range(1, 21)) / 20
        assert abs(summary["mrr_mean"] - harmonic) < 0.06

    def test_search_returns_memorized_snippet_first(self, workspace, capsys):
        ws = workspace
        prepare_vocab_and_vectors(ws)
        config = make_config(ws, max_epochs=60, train_loss_floor=0.001, learning_rate=0.01)
        assert run(["train", "--config", config]) == 0
        assert (
            run(
                [
                    "index",
                    "--checkpoint", ws / "run" / "best.cncm",
                    "--vocab", ws / "vocab.jsonl",
                    "--corpus", ws / "train.jsonl",
                    "--out", ws / "index.cnci",
                ]
            )
            == 0
        )
        capsys.readouterr()
        corpus = keyed_corpus(14, seed=2)
        assert (
            run(
                [
                    "search",
                    "--checkpoint", ws / "run" / "best.cncm",
                    "--vocab", ws / "vocab.jsonl",
                    "--index", ws / "index.cnci",
                    "--query", corpus[4].question,
                    "--top-k", 3,
                ]
            )
            == 0
        )
        out = capsys.readouterr().out
        assert out.splitlines()[0].startswith(f"1. {corpus[4].id} ")


class TestExitCodes:
    def test_unknown_flag_is_usage_error(self, workspace):
        assert run(["ingest", "--nope", "x"]) == 1

    def test_missing_corpus_is_data_error(self, tmp_path):
        assert run(["ingest", "--corpus", tmp_path / "missing.jsonl", "--out", tmp_path / "v.jsonl"]) == 2

    def test_empty_corpus_is_data_error(self, tmp_path):
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        assert run(["ingest", "--corpus", empty, "--out", tmp_path / "v.jsonl"]) == 2

    def test_overwrite_without_force(self, workspace, capsys):
        ws = workspace
        args = ["ingest", "--corpus", ws / "train.jsonl", "--out", ws / "vocab.jsonl", "--min-count", 1]
        assert run(args) == 0
        assert run(args) == 1
        assert "--force" in capsys.readouterr().err
        assert run(args + ["--force"]) == 0

    def test_malformed_jsonl_names_line(self, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"id": "a", "question": "q", "code": "c", "origin": "train_auto"}\n{broken\n')
        assert run(["ingest", "--corpus", bad, "--out", tmp_path / "v.jsonl"]) == 2
        assert "line 2" in capsys.readouterr().err

    def test_duplicate_id_names_id(self, tmp_path, capsys):
        line = '{"id": "dup", "question": "q", "code": "c", "origin": "train_auto"}\n'
        bad = tmp_path / "dup.jsonl"
        bad.write_text(line * 2)
        assert run(["ingest", "--corpus", bad, "--out", tmp_path / "v.jsonl"]) == 2
        assert "dup" in capsys.readouterr().err

    def test_unknown_config_key_rejected(self, workspace, capsys):
        ws = workspace
        prepare_vocab_and_vectors(ws)
        config = json.loads(make_config(ws).read_text())
        config["mystery"] = True
        (ws / "config.json").write_text(json.dumps(config))
        assert run(["train", "--config", ws / "config.json"]) == 1
        assert "mystery" in capsys.readouterr().err

    def test_numeric_failure_exit_code(self, workspace, monkeypatch):
        ws = workspace
        prepare_vocab_and_vectors(ws)
        config = make_config(ws)
        assert run(["train", "--config", config]) == 0

        def bad_protocol(*args, **kwargs):
            from codesearch.evaluation import EvalSummary

            return EvalSummary(float("nan"), 0.0, {1: 0.0}, {1: 0.0}, {1: 0}, 1, 2, 1)

        monkeypatch.setattr(cli, "evaluate_protocol", bad_protocol)
        code = run(
            [
                "eval",
                "--checkpoint", ws / "run" / "best.cncm",
                "--vocab", ws / "vocab.jsonl",
                "--eval", ws / "eval.jsonl",
                "--pool", ws / "train.jsonl",
                "--summary-out", ws / "s.json",
                "--histogram-out", ws / "h.csv",
                "--distractors", 4,
                "--iterations", 1,
            ]
        )
        assert code == 3


class TestDeterminism:
    def test_train_w2v_byte_identical_across_runs(self, workspace):
        ws = workspace
        assert run(["ingest", "--corpus", ws / "train.jsonl", "--out", ws / "vocab.jsonl", "--min-count", 1]) == 0
        outputs = []
        for name in ("w2v_a.cncw", "w2v_b.cncw"):
            assert (
                run(
                    [
                        "train-w2v",
                        "--corpus", ws / "train.jsonl",
                        "--vocab", ws / "vocab.jsonl",
                        "--out", ws / name,
                        "--dim", 8,
                        "--epochs", 2,
                        "--seed", 4,
                    ]
                )
                == 0
            )
            outputs.append((ws / name).read_bytes())
        assert outputs[0] == outputs[1]

    def test_train_byte_identical_across_runs(self, workspace):
        ws = workspace
        prepare_vocab_and_vectors(ws)
        outputs = []
        for name in ("run_a", "run_b"):
            config = json.loads(make_config(ws).read_text())
            config["paths"]["out_dir"] = str(ws / name)
            path = ws / f"{name}.json"
            path.write_text(json.dumps(config))
            assert run(["train", "--config", path]) == 0
            outputs.append(
                (
                    (ws / name / "best.cncm").read_bytes(),
                    (ws / name / "report.jsonl").read_bytes(),
                )
            )
        assert outputs[0] == outputs[1]
