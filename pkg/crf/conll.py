"""
CoNLL-style column files

One token per line, columns separated by whitespace runs, a blank line
between sequences. With labels, the final column is the gold label.
-DOCSTART- lines are skipped; CRLF line endings are accepted.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

from crf.errors import CorpusFormatError
from crf.features import Token
from utils.logging_config import get_logger

logger = get_logger(__name__)

DOCSTART = "-DOCSTART-"

# tokens -> (labels, optional confidences)
Tagger = Callable[[List[Token]], Tuple[List[str], Optional[List[float]]]]


@dataclass
class ConllSequence:
    tokens: List[Token]
    labels: Optional[List[str]]
    first_line: int

    def __len__(self) -> int:
        return len(self.tokens)


def _logical_lines(text: str) -> Iterator[Tuple[int, str]]:
    for number, line in enumerate(text.split("\n"), start=1):
        yield number, line.rstrip("\r")


def _blocks(text: str) -> Iterator[List[Tuple[int, List[str]]]]:
    """Groups of (line number, columns) separated by blank or -DOCSTART- lines"""
    block: List[Tuple[int, List[str]]] = []
    for number, line in _logical_lines(text):
        columns = line.split()
        if not columns or columns[0] == DOCSTART:
            if block:
                yield block
                block = []
            continue
        block.append((number, columns))
    if block:
        yield block


def parse_conll(text: str, labeled: bool = True) -> List[ConllSequence]:
    """
    Parse CoNLL text

    Args:
        text: File content
        labeled: Treat the final column as the gold label

    Raises:
        CorpusFormatError: On a column-count change or a labeled line with a
            single column, reporting the 1-based line number
    """
    sequences: List[ConllSequence] = []
    width: Optional[int] = None
    for block in _blocks(text):
        tokens: List[Token] = []
        labels: List[str] = []
        for number, columns in block:
            if width is None:
                width = len(columns)
                if labeled and width < 2:
                    raise CorpusFormatError(
                        "labeled data needs at least one input column and a label column",
                        number,
                    )
            elif len(columns) != width:
                raise CorpusFormatError(
                    f"expected {width} columns, found {len(columns)}", number
                )
            if labeled:
                tokens.append(tuple(columns[:-1]))
                labels.append(columns[-1])
            else:
                tokens.append(tuple(columns))
        sequences.append(ConllSequence(tokens, labels if labeled else None, block[0][0]))
    logger.debug("conll_parsed", sequences=len(sequences), columns=width, labeled=labeled)
    return sequences


def read_conll(path: Union[str, Path], labeled: bool = True) -> List[ConllSequence]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise CorpusFormatError(f"{path} is not valid UTF-8: {e}") from e
    return parse_conll(text, labeled)


def as_corpus(sequences: Sequence[ConllSequence]) -> List[Tuple[List[Token], Optional[List[str]]]]:
    """(tokens, labels) pairs for training"""
    return [(sequence.tokens, sequence.labels) for sequence in sequences]


def format_conll(
    sequences: Sequence[Tuple[Sequence[Token], Optional[Sequence[str]]]]
) -> str:
    """Write (tokens, labels) pairs; labels (when present) become the final column"""
    blocks = []
    for tokens, labels in sequences:
        rows = []
        for position, token in enumerate(tokens):
            columns = list(token)
            if labels is not None:
                columns.append(labels[position])
            rows.append(" ".join(columns))
        blocks.append("\n".join(rows))
    return "\n\n".join(blocks) + ("\n" if blocks else "")


def write_conll(
    path: Union[str, Path],
    sequences: Sequence[Tuple[Sequence[Token], Optional[Sequence[str]]]],
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_conll(sequences), encoding="utf-8")
    return path


def annotate_conll(text: str, tagger: Tagger, labeled: bool = False) -> str:
    """
    Append predicted labels (and confidences) to every token line

    All other lines (blank, -DOCSTART-) are copied unchanged, so the output
    has exactly as many lines as the input. With `labeled`, the final input
    column is kept in the output but not shown to the tagger.
    """
    sequences = iter(parse_conll(text, labeled))
    lines = [line for _, line in _logical_lines(text)]
    if lines and lines[-1] == "":
        lines.pop()
    output: List[str] = []
    pending: List[str] = []
    tagged = 0

    def flush():
        nonlocal tagged
        if not pending:
            return
        sequence = next(sequences)
        labels, confidences = tagger(sequence.tokens)
        for position, line in enumerate(pending):
            extra = [labels[position]]
            if confidences is not None:
                extra.append(repr(float(confidences[position])))
            output.append(" ".join([line.rstrip()] + extra))
        tagged += len(pending)
        pending.clear()

    for line in lines:
        columns = line.split()
        if not columns or columns[0] == DOCSTART:
            flush()
            output.append(line)
        else:
            pending.append(line)
    flush()
    logger.debug("conll_annotated", lines=len(output), tokens=tagged)
    return "\n".join(output) + ("\n" if output else "")
