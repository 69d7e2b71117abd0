"""
Evaluation metrics for sequence labeling
Token accuracy, per-label precision/recall/F1, confusion counts and BIO chunk F1
"""

from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

from crf.errors import AlignmentError

Chunk = Tuple[int, int, int, str]  # (sequence, start, end exclusive, type)


@dataclass
class LabelScores:
    """Precision, recall and F1 of one label"""

    label: str
    true_positives: int = 0
    predicted: int = 0
    support: int = 0

    @property
    def precision(self) -> float:
        return self.true_positives / self.predicted if self.predicted else 0.0

    @property
    def recall(self) -> float:
        return self.true_positives / self.support if self.support else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0


@dataclass
class EvalReport:
    """Summary of one gold/prediction comparison"""

    total: int = 0
    correct: int = 0
    sequences: int = 0
    labels: Dict[str, LabelScores] = field(default_factory=dict)
    confusion: Dict[Tuple[str, str], int] = field(default_factory=dict)

    # Chunk metrics (only for B-/I-/O label sets)
    chunk_scores: Optional[LabelScores] = None

    # Timings are reported but excluded from the deterministic key/value listing
    train_seconds: Optional[float] = None
    tag_seconds: Optional[float] = None

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.total else 0.0

    def to_lines(self, include_times: bool = False) -> List[str]:
        """Flat key<TAB>value listing in a fixed order"""
        lines = [
            f"accuracy\t{self.accuracy!r}",
            f"tokens\t{self.total}",
            f"correct\t{self.correct}",
            f"sequences\t{self.sequences}",
        ]
        for label in sorted(self.labels):
            scores = self.labels[label]
            lines.extend(
                [
                    f"precision:{label}\t{scores.precision!r}",
                    f"recall:{label}\t{scores.recall!r}",
                    f"f1:{label}\t{scores.f1!r}",
                    f"support:{label}\t{scores.support}",
                ]
            )
        for (gold, predicted), count in sorted(self.confusion.items()):
            lines.append(f"confusion:{gold}:{predicted}\t{count}")
        if self.chunk_scores is not None:
            lines.extend(
                [
                    f"chunk_precision\t{self.chunk_scores.precision!r}",
                    f"chunk_recall\t{self.chunk_scores.recall!r}",
                    f"chunk_f1\t{self.chunk_scores.f1!r}",
                ]
            )
        if include_times:
            if self.train_seconds is not None:
                lines.append(f"train_seconds\t{self.train_seconds!r}")
            if self.tag_seconds is not None:
                lines.append(f"tag_seconds\t{self.tag_seconds!r}")
        return lines

    def format_text(self) -> str:
        """Human-readable table"""
        rows = [
            f"accuracy: {self.accuracy:.4f} ({self.correct}/{self.total} tokens, "
            f"{self.sequences} sequences)",
            f"{'label':<16}{'precision':>10}{'recall':>10}{'f1':>10}{'support':>10}",
        ]
        for label in sorted(self.labels):
            s = self.labels[label]
            rows.append(
                f"{label:<16}{s.precision:>10.4f}{s.recall:>10.4f}{s.f1:>10.4f}{s.support:>10}"
            )
        if self.chunk_scores is not None:
            c = self.chunk_scores
            rows.append(
                f"chunks: precision {c.precision:.4f} recall {c.recall:.4f} f1 {c.f1:.4f}"
            )
        return "\n".join(rows)


def is_bio_label_set(labels: Set[str]) -> bool:
    return bool(labels) and all(
        label == "O" or label.startswith(("B-", "I-")) for label in labels
    ) and any(label != "O" for label in labels)


def bio_chunks(sequence_index: int, labels: Sequence[str]) -> List[Chunk]:
    """
    Spans of a BIO labeling

    A chunk opens at B-X, or at I-X not continuing a chunk of type X, and
    extends over the following I-X labels.
    """
    chunks: List[Chunk] = []
    start, kind = None, None
    for position, label in enumerate(list(labels) + ["O"]):
        prefix, _, label_type = label.partition("-")
        continues = prefix == "I" and kind == label_type
        if start is not None and not continues:
            chunks.append((sequence_index, start, position, kind))
            start, kind = None, None
        if prefix == "B" or (prefix == "I" and not continues):
            start, kind = position, label_type
    return chunks


def evaluate_labels(
    gold: Sequence[Sequence[str]],
    predicted: Sequence[Sequence[str]],
    train_seconds: Optional[float] = None,
    tag_seconds: Optional[float] = None,
) -> EvalReport:
    """
    Compare predicted label sequences with gold ones

    Raises:
        AlignmentError: At the first sequence or token where the shapes differ
    """
    if len(gold) != len(predicted):
        raise AlignmentError(
            f"gold has {len(gold)} sequences, prediction has {len(predicted)}",
            min(len(gold), len(predicted)),
        )
    report = EvalReport(
        sequences=len(gold), train_seconds=train_seconds, tag_seconds=tag_seconds
    )
    confusion: Counter = Counter()
    for index, (gold_labels, predicted_labels) in enumerate(zip(gold, predicted)):
        if len(gold_labels) != len(predicted_labels):
            raise AlignmentError(
                f"gold has {len(gold_labels)} tokens, prediction has {len(predicted_labels)}",
                index,
                min(len(gold_labels), len(predicted_labels)),
            )
        for g, p in zip(gold_labels, predicted_labels):
            confusion[(g, p)] += 1
            report.total += 1
            report.correct += int(g == p)
            report.labels.setdefault(g, LabelScores(g)).support += 1
            report.labels.setdefault(p, LabelScores(p)).predicted += 1
            if g == p:
                report.labels[g].true_positives += 1
    report.confusion = dict(confusion)

    if is_bio_label_set(set(report.labels)):
        gold_chunks = {c for i, labels in enumerate(gold) for c in bio_chunks(i, labels)}
        predicted_chunks = {
            c for i, labels in enumerate(predicted) for c in bio_chunks(i, labels)
        }
        report.chunk_scores = LabelScores(
            "chunk",
            true_positives=len(gold_chunks & predicted_chunks),
            predicted=len(predicted_chunks),
            support=len(gold_chunks),
        )
    return report
