"""
Unit tests for sequence labeling metrics
"""

import pytest

from crf.errors import AlignmentError
from utils.evaluation import bio_chunks, evaluate_labels, is_bio_label_set


class TestEvaluateLabels:
    """Test token accuracy and per-label scores"""

    def test_accuracy_and_label_scores(self):
        gold = [["A", "B", "A"], ["B"]]
        predicted = [["A", "A", "A"], ["B"]]
        report = evaluate_labels(gold, predicted)
        assert report.accuracy == pytest.approx(0.75)
        assert report.sequences == 2
        assert report.labels["A"].precision == pytest.approx(2 / 3)
        assert report.labels["A"].recall == 1.0
        assert report.labels["B"].recall == 0.5
        assert report.confusion[("B", "A")] == 1
        assert report.chunk_scores is None

    def test_listing_is_deterministic(self):
        report = evaluate_labels([["A", "B"]], [["A", "B"]], train_seconds=1.5)
        lines = report.to_lines()
        assert lines[0] == "accuracy\t1.0"
        assert all("seconds" not in line for line in lines)
        assert report.to_lines(include_times=True)[-1] == "train_seconds\t1.5"
        assert "accuracy: 1.0000" in report.format_text()

    def test_sequence_count_mismatch(self):
        with pytest.raises(AlignmentError) as excinfo:
            evaluate_labels([["A"], ["B"]], [["A"]])
        assert excinfo.value.sequence == 1

    def test_token_count_mismatch(self):
        with pytest.raises(AlignmentError) as excinfo:
            evaluate_labels([["A"], ["A", "B"]], [["A"], ["A"]])
        assert excinfo.value.sequence == 1
        assert excinfo.value.token == 1

    def test_empty_input(self):
        report = evaluate_labels([], [])
        assert report.accuracy == 0.0


class TestChunks:
    """Test BIO chunk extraction and chunk F1"""

    def test_chunk_spans(self):
        labels = ["B-NP", "I-NP", "O", "I-VP", "B-NP", "B-NP"]
        assert bio_chunks(0, labels) == [
            (0, 0, 2, "NP"),
            (0, 3, 4, "VP"),
            (0, 4, 5, "NP"),
            (0, 5, 6, "NP"),
        ]

    def test_label_set_detection(self):
        assert is_bio_label_set({"B-NP", "I-NP", "O"})
        assert not is_bio_label_set({"O"})
        assert not is_bio_label_set({"NOUN", "VERB"})

    def test_chunk_f1(self):
        gold = [["B-NP", "I-NP", "O", "B-VP"]]
        predicted = [["B-NP", "O", "O", "B-VP"]]
        report = evaluate_labels(gold, predicted)
        assert report.chunk_scores.true_positives == 1
        assert report.chunk_scores.precision == 0.5
        assert report.chunk_scores.recall == 0.5
