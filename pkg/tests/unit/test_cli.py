"""
Unit tests for command-line argument handling and exit codes
"""

import io

import pytest

from crf.cli import (
    EXIT_CONFLICT,
    EXIT_ERROR,
    EXIT_INPUT,
    EXIT_OK,
    bench_dataset,
    main,
)
from crf.conll import read_conll
from crf.models.chain import train_chain_crf
from crf.models.serialization import save_model


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out=out)
    return code, out.getvalue()


@pytest.fixture
def saved_model(tmp_path, toy_corpus, word_templates):
    return save_model(train_chain_crf(toy_corpus, word_templates), tmp_path / "toy.model")


class TestFlagConflicts:
    """Test exit code 4"""

    @pytest.mark.parametrize(
        "flags",
        [
            ["--l1", "1.0", "--sigma2", "2.0"],
            ["--l1", "1.0", "--optimizer", "sgd"],
            ["--l2-refit"],
        ],
    )
    def test_train_conflicts(self, tmp_path, flags):
        code, _ = run(
            "train",
            "--train", str(tmp_path / "absent.conll"),
            "--templates", str(tmp_path / "absent.txt"),
            "--model", str(tmp_path / "out.model"),
            *flags,
        )
        assert code == EXIT_CONFLICT

    def test_nonpositive_benchmark_size(self):
        code, _ = run("bench", "--instances", "0")
        assert code == EXIT_CONFLICT


class TestInputErrors:
    """Test exit code 2 and other failures"""

    def test_missing_training_file(self, tmp_path, template_file):
        code, _ = run(
            "train",
            "--train", str(tmp_path / "absent.conll"),
            "--templates", str(template_file),
            "--model", str(tmp_path / "out.model"),
        )
        assert code == EXIT_INPUT

    def test_malformed_corpus(self, tmp_path, template_file):
        corpus = tmp_path / "bad.conll"
        corpus.write_text("a X\nb\n")
        code, _ = run(
            "train",
            "--train", str(corpus),
            "--templates", str(template_file),
            "--model", str(tmp_path / "out.model"),
        )
        assert code == EXIT_INPUT
        assert not (tmp_path / "out.model").exists()

    def test_misaligned_evaluation(self, tmp_path):
        gold, pred = tmp_path / "gold.conll", tmp_path / "pred.conll"
        gold.write_text("a X\nb Y\n")
        pred.write_text("a X\n")
        code, _ = run("eval", "--gold", str(gold), "--pred", str(pred))
        assert code == EXIT_INPUT

    def test_missing_model(self, tmp_path, train_conll):
        code, _ = run("tag", "--model", str(tmp_path / "absent.model"), "--input", str(train_conll))
        assert code == EXIT_INPUT

    def test_invalid_option_value(self, tmp_path, train_conll, template_file):
        code, _ = run(
            "train",
            "--train", str(train_conll),
            "--templates", str(template_file),
            "--model", str(tmp_path / "out.model"),
            "--l1", "-1",
        )
        assert code == EXIT_ERROR


class TestCommands:
    """Test command output"""

    def test_bench_grid(self):
        code, output = run(
            "bench", "--labels", "2", "3", "--length", "4", "--instances", "2", "--repeat", "1"
        )
        lines = output.splitlines()
        assert code == EXIT_OK
        assert lines[0] == "labels\tlength\tinstances\tseconds"
        assert [line.split("\t")[:3] for line in lines[1:]] == [["2", "4", "2"], ["3", "4", "2"]]

    def test_bench_dataset_is_fully_featurized(self):
        dataset, weights = bench_dataset(3, 5, 2)
        assert len(dataset) == 2
        assert len(weights) == dataset.space.num_features

    def test_inspect(self, saved_model):
        code, output = run("inspect", "--model", str(saved_model), "--top", "3")
        lines = output.splitlines()
        assert code == EXIT_OK
        assert lines[0] == "model_type\tchain"
        assert "meta:regularizer\tl2" in lines

    def test_fixture(self, tmp_path):
        path = tmp_path / "fixtures" / "bias.conll"
        code, output = run(
            "fixture", "--kind", "label-bias", "--output", str(path), "--sequences", "10"
        )
        assert code == EXIT_OK
        assert output == "sequences\t10\n"
        assert len(read_conll(path)) == 10

    def test_tag_marginal_appends_confidences(self, tmp_path, saved_model):
        corpus = tmp_path / "plain.conll"
        corpus.write_text("alpha\nbeta\n\ngamma\n")
        code, output = run(
            "tag", "--model", str(saved_model), "--input", str(corpus), "--mode", "marginal"
        )
        lines = output.split("\n")
        assert code == EXIT_OK
        assert len(lines[0].split()) == 3
        assert lines[2] == ""
        assert len(output.splitlines()) == 4
