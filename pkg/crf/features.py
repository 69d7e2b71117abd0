"""
Feature extraction: templates, alphabets and sparse feature vectors

Observation functions q(x_t) are computed once per position; features are the
conjunction of an observation with a label (node features) or a label pair
(edge features). Feature keys are structured text and never hashed:

    identity@0=dog⊗NN            node feature
    trans⊗NN→VB                  observation-independent transition
    identity@0=dog⊗NN→VB         observation-dependent transition
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import (
    Callable,
    Dict,
    Iterable,
    Iterator,
    List,
    Literal,
    Mapping,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np
from scipy import sparse

from crf.errors import (
    CorpusFormatError,
    ModelCorruptionError,
    ParameterError,
    PreconditionError,
)
from utils.logging_config import get_logger

logger = get_logger(__name__)

BOS = "<BOS>"
EOS = "<EOS>"
LABEL_SEPARATOR = "⊗"
TRANSITION_ARROW = "→"

# Emitted at position 0 and conjoined with y_1: realizes the initial column p(y_1 | y_0)
START_OBSERVATION = f"start@-1={BOS}"
# Observation-independent transition, present at every position t >= 1
TRANSITION_OBSERVATION = "trans"

Token = Tuple[str, ...]
FeatureMode = Literal["supported", "full"]


class Alphabet:
    """
    Bidirectional map between text keys and contiguous integer indices

    Example:
        labels = Alphabet(["O", "B-NP"])
        labels.add("I-NP")      # -> 2
        labels.freeze()
        labels.add("B-VP")      # -> None (absent)
    """

    def __init__(self, keys: Iterable[str] = ()):
        self._index: Dict[str, int] = {}
        self._keys: List[str] = []
        self.frozen = False
        for key in keys:
            self.add(key)

    def add(self, key: str) -> Optional[int]:
        """Intern a key; returns None for unknown keys once frozen"""
        index = self._index.get(key)
        if index is not None:
            return index
        if self.frozen:
            return None
        index = len(self._keys)
        self._index[key] = index
        self._keys.append(key)
        return index

    def index(self, key: str) -> Optional[int]:
        return self._index.get(key)

    def lookup(self, index: int) -> str:
        return self._keys[index]

    def freeze(self) -> None:
        self.frozen = True

    def unfreeze(self) -> None:
        self.frozen = False

    def keys(self) -> List[str]:
        return list(self._keys)

    def __len__(self) -> int:
        return len(self._keys)

    def __contains__(self, key: object) -> bool:
        return key in self._index

    def __iter__(self) -> Iterator[str]:
        return iter(self._keys)


@dataclass(frozen=True)
class ObservationFunction:
    """An input-only function q(x_c) that fired at some position"""

    template_id: str
    key: str
    value: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ParameterError(f"observation {self.key} has non-finite value")


# =============================================================================
# Observation extractors
# =============================================================================

Extractor = Callable[[Token], Union[str, float, None]]


def _word(token: Token) -> str:
    return token[0]


def _shape(token: Token) -> str:
    shape = re.sub(r"[A-Z]", "X", token[0])
    shape = re.sub(r"[a-z]", "x", shape)
    shape = re.sub(r"[0-9]", "d", shape)
    # collapse runs: Xxxxx -> Xx
    return re.sub(r"(.)\1+", r"\1", shape)


_FIXED_EXTRACTORS: Dict[str, Extractor] = {
    "identity": _word,
    "lower": lambda token: token[0].lower(),
    "shape": _shape,
    "cap": lambda token: "1" if token[0][:1].isupper() else None,
    "allcaps": lambda token: "1" if token[0].isupper() else None,
    "digit": lambda token: "1" if any(ch.isdigit() for ch in token[0]) else None,
    "hyphen": lambda token: "1" if "-" in token[0] else None,
    "len": lambda token: float(len(token[0])),
}


def _column(index: int) -> Extractor:
    def extract(token: Token) -> Optional[str]:
        return token[index] if index < len(token) else None

    return extract


def _numeric_column(index: int) -> Extractor:
    def extract(token: Token) -> Optional[float]:
        if index >= len(token):
            return None
        try:
            return float(token[index])
        except ValueError:
            return None

    return extract


def resolve_extractor(name: str) -> Extractor:
    """
    Map a template name to its observation extractor

    Supported names: identity, lower, shape, cap, allcaps, digit, hyphen, len,
    sufN / preN (N-character suffix / prefix), colK (K-th input column),
    numK (K-th column parsed as a real number).
    """
    if name in _FIXED_EXTRACTORS:
        return _FIXED_EXTRACTORS[name]
    match = re.fullmatch(r"(suf|pre|col|num)(\d+)", name)
    if not match:
        raise ParameterError(f"unknown template name: {name}")
    kind, n = match.group(1), int(match.group(2))
    if kind == "suf":
        return lambda token: token[0][-n:]
    if kind == "pre":
        return lambda token: token[0][:n]
    if kind == "col":
        return _column(n)
    return _numeric_column(n)


@dataclass(frozen=True)
class FeatureTemplate:
    """
    A windowed observation template

    Offsets are relative positions; reads outside the sequence see the
    <BOS>/<EOS> sentinels instead of tokens.
    """

    name: str
    offsets: Tuple[int, ...] = (0,)
    kind: Literal["node", "edge"] = "node"
    value_mode: Literal["binary", "real"] = "binary"

    def __post_init__(self):
        if not self.offsets:
            raise ParameterError(f"template {self.name} has no offsets")
        if self.kind not in ("node", "edge"):
            raise ParameterError(f"template kind must be node or edge: {self.kind}")
        if self.value_mode not in ("binary", "real"):
            raise ParameterError(f"value mode must be binary or real: {self.value_mode}")
        if self.value_mode == "real" and len(self.offsets) != 1:
            raise ParameterError("real-valued templates take exactly one offset")
        resolve_extractor(self.name)

    @property
    def template_id(self) -> str:
        return f"{self.name}@{','.join(str(o) for o in self.offsets)}"

    def to_line(self) -> str:
        parts = [self.name, self.kind, *(str(o) for o in self.offsets)]
        if self.value_mode == "real":
            parts.append("real")
        return " ".join(parts)

    def extract(self, tokens: Sequence[Token], position: int) -> Optional[ObservationFunction]:
        extractor = resolve_extractor(self.name)
        values: List[Union[str, float]] = []
        sentinel = False
        for offset in self.offsets:
            p = position + offset
            if p < 0:
                values.append(BOS)
                sentinel = True
            elif p >= len(tokens):
                values.append(EOS)
                sentinel = True
            else:
                value = extractor(tokens[p])
                if value is None:
                    return None
                values.append(value)

        if self.value_mode == "real" and not sentinel:
            value = float(values[0])
            if not math.isfinite(value):
                return None
            return ObservationFunction(self.template_id, self.template_id, value)

        text = "|".join(_format_value(v) for v in values)
        return ObservationFunction(self.template_id, f"{self.template_id}={text}", 1.0)


def _format_value(value: Union[str, float]) -> str:
    if isinstance(value, float):
        return repr(value)
    return value


def parse_templates(text: str) -> List[FeatureTemplate]:
    """
    Parse a template definition file

    Grammar (one template per line, # starts a comment):
        name kind offsets... [real]
    """
    templates: List[FeatureTemplate] = []
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        value_mode = "binary"
        if parts[-1] == "real":
            value_mode = "real"
            parts = parts[:-1]
        if len(parts) < 3:
            raise CorpusFormatError(
                "template needs a name, a kind and at least one offset", line_number
            )
        name, kind, *offset_text = parts
        try:
            offsets = tuple(int(o) for o in offset_text)
            templates.append(FeatureTemplate(name, offsets, kind, value_mode))
        except (ValueError, ParameterError) as e:
            raise CorpusFormatError(str(e), line_number) from e
    return templates


def load_templates(path: Union[str, Path]) -> List[FeatureTemplate]:
    return parse_templates(Path(path).read_text(encoding="utf-8"))


def apply_templates(
    tokens: Sequence[Token], position: int, templates: Sequence[FeatureTemplate]
) -> List[ObservationFunction]:
    """
    Evaluate every template at one position

    Returns:
        Observation functions in template order; boundary offsets yield
        sentinel-keyed observations
    """
    if not 0 <= position < len(tokens):
        raise PreconditionError(
            f"position {position} outside sequence of length {len(tokens)}"
        )
    observations = []
    for template in templates:
        observation = template.extract(tokens, position)
        if observation is not None:
            observations.append(observation)
    return observations


# =============================================================================
# Sparse vectors and the feature space
# =============================================================================


@dataclass(frozen=True)
class SparseFeatureVector:
    """Sorted (index, value) pairs with strictly increasing indices and no zeros"""

    indices: np.ndarray
    values: np.ndarray

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[int, float]]) -> "SparseFeatureVector":
        merged: Dict[int, float] = {}
        for index, value in pairs:
            merged[int(index)] = merged.get(int(index), 0.0) + float(value)
        items = sorted((i, v) for i, v in merged.items() if v != 0.0)
        return cls(
            np.array([i for i, _ in items], dtype=np.int64),
            np.array([v for _, v in items], dtype=np.float64),
        )

    @classmethod
    def empty(cls) -> "SparseFeatureVector":
        return cls(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.float64))

    def dot(self, weights: np.ndarray) -> float:
        if self.indices.size == 0:
            return 0.0
        if self.indices[-1] >= len(weights) or self.indices[0] < 0:
            raise ModelCorruptionError(
                f"feature index {int(self.indices[-1])} outside weight vector "
                f"of length {len(weights)}"
            )
        return float(np.dot(self.values, weights[self.indices]))

    def add_to(self, target: np.ndarray, scale: float = 1.0) -> None:
        target[self.indices] += scale * self.values

    def items(self) -> List[Tuple[int, float]]:
        return list(zip(self.indices.tolist(), self.values.tolist()))

    def __len__(self) -> int:
        return int(self.indices.size)


def node_feature_key(observation: str, label: str) -> str:
    return f"{observation}{LABEL_SEPARATOR}{label}"


def edge_feature_key(observation: str, previous: str, label: str) -> str:
    return f"{observation}{LABEL_SEPARATOR}{previous}{TRANSITION_ARROW}{label}"


def split_feature_key(key: str) -> Tuple[str, str, Optional[str]]:
    """Split a feature key into (observation, label, previous label or None)"""
    observation, sep, labels = key.rpartition(LABEL_SEPARATOR)
    if not sep:
        raise ParameterError(f"feature key without label part: {key}")
    previous, arrow, label = labels.partition(TRANSITION_ARROW)
    if arrow:
        return observation, label, previous
    return observation, labels, None


class FeatureSpace:
    """
    Alphabets for labels, observations and features plus lookup tables

    Node features index (observation id, label); edge features index
    (edge observation id, previous label, label). After freeze() the feature
    indices are ordered node block first, then edge block, so each clique
    template owns one contiguous parameter slice.
    """

    def __init__(self, labels: Optional[Alphabet] = None):
        self.labels = labels if labels is not None else Alphabet()
        self.node_observations = Alphabet()
        self.edge_observations = Alphabet()
        self.features = Alphabet()
        self.standardization: Dict[str, Tuple[float, float]] = {}
        self._node: Dict[Tuple[int, int], int] = {}
        self._edge: Dict[Tuple[int, int, int], int] = {}
        self._tables: Optional[Tuple[np.ndarray, np.ndarray]] = None
        self.num_node_features = 0

    # -- interning -----------------------------------------------------------

    @property
    def frozen(self) -> bool:
        return self.features.frozen

    @property
    def num_labels(self) -> int:
        return len(self.labels)

    @property
    def num_features(self) -> int:
        return len(self.features)

    def intern_node(self, observation: int, label: int) -> Optional[int]:
        existing = self._node.get((observation, label))
        if existing is not None or self.frozen:
            return existing
        key = node_feature_key(
            self.node_observations.lookup(observation), self.labels.lookup(label)
        )
        index = self.features.add(key)
        self._node[(observation, label)] = index
        self._tables = None
        return index

    def intern_edge(self, observation: int, previous: int, label: int) -> Optional[int]:
        existing = self._edge.get((observation, previous, label))
        if existing is not None or self.frozen:
            return existing
        key = edge_feature_key(
            self.edge_observations.lookup(observation),
            self.labels.lookup(previous),
            self.labels.lookup(label),
        )
        index = self.features.add(key)
        self._edge[(observation, previous, label)] = index
        self._tables = None
        return index

    def add_feature_key(self, key: str) -> int:
        """Intern a feature from its text key (used when loading models)"""
        observation, label, previous = split_feature_key(key)
        label_id = self.labels.add(label)
        if label_id is None:
            raise ModelCorruptionError(f"feature {key} names an unknown label")
        if previous is None:
            obs_id = self.node_observations.add(observation)
            return self.intern_node(obs_id, label_id)
        previous_id = self.labels.add(previous)
        if previous_id is None:
            raise ModelCorruptionError(f"feature {key} names an unknown label")
        obs_id = self.edge_observations.add(observation)
        return self.intern_edge(obs_id, previous_id, label_id)

    def freeze(self) -> None:
        """Renumber features (node block, then edge block) and freeze all alphabets"""
        node_items = sorted(self._node.items(), key=lambda item: item[1])
        edge_items = sorted(self._edge.items(), key=lambda item: item[1])
        features = Alphabet()
        self._node = {}
        self._edge = {}
        for slot, old in node_items:
            self._node[slot] = features.add(self.features.lookup(old))
        for slot, old in edge_items:
            self._edge[slot] = features.add(self.features.lookup(old))
        self.features = features
        self.num_node_features = len(node_items)
        for alphabet in (
            self.labels,
            self.node_observations,
            self.edge_observations,
            self.features,
        ):
            alphabet.freeze()
        self._tables = None

    def unfreeze(self) -> None:
        for alphabet in (
            self.labels,
            self.node_observations,
            self.edge_observations,
            self.features,
        ):
            alphabet.unfreeze()

    # -- lookups -------------------------------------------------------------

    def node_feature(self, observation: int, label: int) -> Optional[int]:
        return self._node.get((observation, label))

    def edge_feature(self, observation: int, previous: int, label: int) -> Optional[int]:
        return self._edge.get((observation, previous, label))

    def tables(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        Dense feature-index tables, -1 where a feature does not exist

        Returns:
            node table (num node observations, M) and
            edge table (num edge observations, M, M)
        """
        if self._tables is None:
            m = self.num_labels
            node = np.full((len(self.node_observations), m), -1, dtype=np.int64)
            for (obs, label), index in self._node.items():
                node[obs, label] = index
            edge = np.full((len(self.edge_observations), m, m), -1, dtype=np.int64)
            for (obs, previous, label), index in self._edge.items():
                edge[obs, previous, label] = index
            self._tables = (node, edge)
        return self._tables

    def template_slices(self) -> List[Tuple[int, int]]:
        """Contiguous parameter slices: [node template, edge template]"""
        if not self.frozen:
            raise PreconditionError("template slices are defined after freeze()")
        return [(0, self.num_node_features), (self.num_node_features, self.num_features)]

    def weights_from_mapping(self, weights_by_key: Dict[str, float]) -> np.ndarray:
        """Build a weight vector for this space from a key -> weight map (missing keys get 0)"""
        weights = np.zeros(self.num_features, dtype=np.float64)
        for index, key in enumerate(self.features):
            weights[index] = weights_by_key.get(key, 0.0)
        return weights

    def weight_mapping(self, weights: np.ndarray) -> Dict[str, float]:
        return {key: float(weights[i]) for i, key in enumerate(self.features)}


# =============================================================================
# Featurized instances
# =============================================================================


@dataclass
class ChainInstance:
    """
    A featurized sequence

    Observations are stored once per position (not per label). Node
    observations are kept as a sparse position x observation incidence over
    the instance's local observation ids, edge observations likewise for the
    T-1 transitions (row t-1 covers the transition into position t).
    """

    tokens: List[Token]
    node_ids: np.ndarray
    node_incidence: sparse.csr_matrix
    edge_ids: np.ndarray
    edge_incidence: sparse.csr_matrix
    labels: Optional[np.ndarray] = None
    _node_lists: List[List[Tuple[int, float]]] = field(default_factory=list, repr=False)
    _edge_lists: List[List[Tuple[int, float]]] = field(default_factory=list, repr=False)

    @property
    def length(self) -> int:
        return len(self.tokens)

    def node_observations(self, position: int) -> List[Tuple[int, float]]:
        """(observation id, value) pairs firing at a position"""
        return self._node_lists[position]

    def edge_observations(self, position: int) -> List[Tuple[int, float]]:
        """(edge observation id, value) pairs for the transition into a position >= 1"""
        return self._edge_lists[position - 1]

    def node_features(self, space: FeatureSpace, position: int, label: int) -> SparseFeatureVector:
        pairs = []
        for obs, value in self._node_lists[position]:
            index = space.node_feature(obs, label)
            if index is not None:
                pairs.append((index, value))
        return SparseFeatureVector.from_pairs(pairs)

    def edge_features(
        self, space: FeatureSpace, position: int, previous: int, label: int
    ) -> SparseFeatureVector:
        pairs = []
        for obs, value in self._edge_lists[position - 1]:
            index = space.edge_feature(obs, previous, label)
            if index is not None:
                pairs.append((index, value))
        return SparseFeatureVector.from_pairs(pairs)


def _incidence(
    rows: List[List[Tuple[int, float]]]
) -> Tuple[np.ndarray, sparse.csr_matrix]:
    unique = sorted({obs for row in rows for obs, _ in row})
    local = {obs: i for i, obs in enumerate(unique)}
    data, indices, indptr = [], [], [0]
    for row in rows:
        for obs, value in sorted(row):
            indices.append(local[obs])
            data.append(value)
        indptr.append(len(indices))
    matrix = sparse.csr_matrix(
        (
            np.array(data, dtype=np.float64),
            np.array(indices, dtype=np.int64),
            np.array(indptr, dtype=np.int64),
        ),
        shape=(len(rows), len(unique)),
    )
    return np.array(unique, dtype=np.int64), matrix


def _intern_observations(
    alphabet: Alphabet,
    observations: Iterable[ObservationFunction],
    standardization: Dict[str, Tuple[float, float]],
) -> List[Tuple[int, float]]:
    merged: Dict[int, float] = {}
    for observation in observations:
        obs_id = alphabet.add(observation.key)
        if obs_id is None:
            continue  # frozen alphabet: unseen observation is dropped
        value = observation.value
        if observation.key in standardization:
            mean, sd = standardization[observation.key]
            value = (value - mean) / sd
        merged[obs_id] = merged.get(obs_id, 0.0) + value
    return [(obs, value) for obs, value in merged.items() if value != 0.0]


def featurize_chain(
    tokens: Sequence[Token],
    templates: Sequence[FeatureTemplate],
    space: FeatureSpace,
    labels: Optional[Sequence[str]] = None,
    allowed: Optional[Sequence[Sequence[int]]] = None,
) -> ChainInstance:
    """
    Turn a token sequence into a featurized chain instance

    Each observation function is evaluated once per position. When the space
    is not frozen, new observation keys are interned and, if labels are given,
    the supported features (observations x observed labels) are added; pass
    `allowed` to intern features for a set of labels per position instead of
    the single gold label.

    Args:
        tokens: Token records (input columns only)
        templates: Feature templates
        space: Feature space to intern into / look up from
        labels: Optional gold label strings
        allowed: Optional per-position label ids to intern features for

    Returns:
        ChainInstance with node/edge observations and label ids
    """
    tokens = [tuple(token) for token in tokens]
    node_templates = [t for t in templates if t.kind == "node"]
    edge_templates = [t for t in templates if t.kind == "edge"]

    node_rows: List[List[Tuple[int, float]]] = []
    edge_rows: List[List[Tuple[int, float]]] = []
    for t in range(len(tokens)):
        observations = apply_templates(tokens, t, node_templates)
        if t == 0:
            observations.append(ObservationFunction("start", START_OBSERVATION))
        node_rows.append(
            _intern_observations(
                space.node_observations, observations, space.standardization
            )
        )
        if t > 0:
            observations = apply_templates(tokens, t, edge_templates)
            observations.append(
                ObservationFunction(TRANSITION_OBSERVATION, TRANSITION_OBSERVATION)
            )
            edge_rows.append(
                _intern_observations(
                    space.edge_observations, observations, space.standardization
                )
            )

    label_ids = None
    if labels is not None:
        if len(labels) != len(tokens):
            raise PreconditionError("label sequence length differs from token count")
        ids = []
        for label in labels:
            label_id = space.labels.add(label)
            if label_id is None:
                raise PreconditionError(f"label {label!r} is not in the frozen label set")
            ids.append(label_id)
        label_ids = np.array(ids, dtype=np.int64)
        if allowed is None:
            allowed = [[y] for y in ids]

    if allowed is not None and not space.frozen:
        _intern_supported(space, node_rows, edge_rows, allowed)

    node_ids, node_incidence = _incidence(node_rows)
    edge_ids, edge_incidence = _incidence(edge_rows)
    return ChainInstance(
        tokens=tokens,
        node_ids=node_ids,
        node_incidence=node_incidence,
        edge_ids=edge_ids,
        edge_incidence=edge_incidence,
        labels=label_ids,
        _node_lists=node_rows,
        _edge_lists=edge_rows,
    )


def _intern_supported(
    space: FeatureSpace,
    node_rows: List[List[Tuple[int, float]]],
    edge_rows: List[List[Tuple[int, float]]],
    allowed: Sequence[Sequence[int]],
) -> None:
    for t, row in enumerate(node_rows):
        for obs, _ in row:
            for label in allowed[t]:
                space.intern_node(obs, label)
    for t, row in enumerate(edge_rows, start=1):
        for obs, _ in row:
            for previous in allowed[t - 1]:
                for label in allowed[t]:
                    space.intern_edge(obs, previous, label)


@dataclass
class ChainDataset:
    """A feature space plus the instances featurized against it"""

    space: FeatureSpace
    instances: List[ChainInstance]

    def __len__(self) -> int:
        return len(self.instances)

    def __getitem__(self, index: int) -> ChainInstance:
        return self.instances[index]

    def subset(self, indices: Iterable[int]) -> "ChainDataset":
        return ChainDataset(self.space, [self.instances[i] for i in indices])


Corpus = Sequence[Tuple[Sequence[Token], Optional[Sequence[str]]]]


def fit_standardization(
    corpus: Corpus, templates: Sequence[FeatureTemplate]
) -> Dict[str, Tuple[float, float]]:
    """Mean / standard deviation of every real-valued observation key over a corpus"""
    values: Dict[str, List[float]] = {}
    real_templates = [t for t in templates if t.value_mode == "real"]
    if not real_templates:
        return {}
    for tokens, _ in corpus:
        tokens = [tuple(token) for token in tokens]
        for t in range(len(tokens)):
            for observation in apply_templates(tokens, t, real_templates):
                if observation.key == observation.template_id:
                    values.setdefault(observation.key, []).append(observation.value)
    stats = {}
    for key, observed in values.items():
        arr = np.asarray(observed)
        sd = float(arr.std())
        stats[key] = (float(arr.mean()), sd if sd > 0 else 1.0)
    return stats


def featurize_corpus(
    corpus: Corpus,
    templates: Sequence[FeatureTemplate],
    space: Optional[FeatureSpace] = None,
    mode: FeatureMode = "supported",
    standardize: bool = False,
    freeze: bool = True,
) -> ChainDataset:
    """
    Featurize a labeled corpus, interning alphabets in corpus order

    Args:
        corpus: (tokens, labels) pairs
        templates: Feature templates
        space: Existing space (a fresh one is created when omitted)
        mode: "supported" interns only observed configurations; "full" interns
            every seen observation crossed with every label configuration
        standardize: Standardize real-valued observations (mean 0, sd 1)
        freeze: Freeze the space after featurization
    """
    if mode not in ("supported", "full"):
        raise ParameterError(f"unknown feature mode: {mode}")
    space = space if space is not None else FeatureSpace()
    if standardize and not space.frozen:
        space.standardization = fit_standardization(corpus, templates)

    instances = [
        featurize_chain(tokens, templates, space, labels) for tokens, labels in corpus
    ]

    if mode == "full" and not space.frozen:
        all_labels = list(range(space.num_labels))
        for instance in instances:
            _intern_supported(
                space,
                instance._node_lists,
                instance._edge_lists,
                [all_labels] * instance.length,
            )

    if freeze:
        space.freeze()
    logger.debug(
        "corpus_featurized",
        instances=len(instances),
        labels=space.num_labels,
        features=space.num_features,
        mode=mode,
    )
    return ChainDataset(space, instances)


def clone_space(space: FeatureSpace) -> FeatureSpace:
    """Deep copy of a feature space (alphabets, feature slots, standardization)"""
    copy = FeatureSpace(Alphabet(space.labels))
    copy.node_observations = Alphabet(space.node_observations)
    copy.edge_observations = Alphabet(space.edge_observations)
    copy.features = Alphabet(space.features)
    copy.standardization = dict(space.standardization)
    copy._node = dict(space._node)
    copy._edge = dict(space._edge)
    copy.num_node_features = space.num_node_features
    if space.frozen:
        for alphabet in (
            copy.labels,
            copy.node_observations,
            copy.edge_observations,
            copy.features,
        ):
            alphabet.freeze()
    return copy


# =============================================================================
# Unsupported features
# =============================================================================


def prune_or_expand_unsupported(
    dataset: ChainDataset,
    weights: np.ndarray,
    epsilon: float = 0.1,
    mode: Literal["expand", "supported"] = "expand",
) -> Tuple[FeatureSpace, np.ndarray]:
    """
    Grow or shrink the feature set around the training configurations

    In expand mode every (observation, label) and (observation, label pair)
    whose marginal under the current weights exceeds epsilon is added; in
    supported mode only features firing on observed training configurations
    are kept. Weights follow their feature keys; new features start at 0.

    Args:
        dataset: Featurized labeled training data (its space is updated in place)
        weights: Current weights over dataset.space
        epsilon: Marginal threshold in (0, 1]
        mode: "expand" or "supported"

    Returns:
        (space, weights) with the space frozen again
    """
    from crf import chain_inference
    from crf.graph import chain_potentials

    if not 0.0 < epsilon <= 1.0:
        raise ParameterError(f"epsilon must lie in (0, 1], got {epsilon}")
    if mode not in ("expand", "supported"):
        raise ParameterError(f"unknown unsupported-feature mode: {mode}")
    space = dataset.space
    by_key = space.weight_mapping(weights)

    if mode == "supported":
        space._node = {}
        space._edge = {}
        space.features = Alphabet()
        space.unfreeze()
        for instance in dataset.instances:
            if instance.labels is None:
                raise PreconditionError("supported-only pruning needs labeled instances")
            _intern_supported(
                space,
                instance._node_lists,
                instance._edge_lists,
                [[int(y)] for y in instance.labels],
            )
    else:
        added_before = space.num_features
        candidates = []
        for instance in dataset.instances:
            p = chain_potentials(space, instance, weights)
            lattice = chain_inference.forward_backward(p)
            node = chain_inference.node_marginals(lattice)
            edge = chain_inference.edge_marginals(lattice, p)
            candidates.append((instance, node, edge))
        space.unfreeze()
        for instance, node, edge in candidates:
            for t in range(instance.length):
                likely = np.flatnonzero(node[t] > epsilon)
                for obs, _ in instance._node_lists[t]:
                    for label in likely:
                        space.intern_node(obs, int(label))
            for t in range(1, instance.length):
                pairs = np.argwhere(edge[t - 1] > epsilon)
                for obs, _ in instance._edge_lists[t - 1]:
                    for previous, label in pairs:
                        space.intern_edge(obs, int(previous), int(label))
        logger.info(
            "unsupported_features_expanded",
            epsilon=epsilon,
            added=space.num_features - added_before,
        )

    space.freeze()
    return space, space.weights_from_mapping(by_key)


def featurize_vector(
    features: Mapping[str, float],
    space: FeatureSpace,
    label: Optional[str] = None,
) -> ChainInstance:
    """
    Length-1 instance from a named real-valued feature vector

    Each entry becomes an observation conjoined with the class label; the
    start observation doubles as the per-class bias.
    """
    observations = [
        ObservationFunction("vector", key, float(value)) for key, value in sorted(features.items())
    ]
    observations.append(ObservationFunction("start", START_OBSERVATION))
    node_rows = [
        _intern_observations(space.node_observations, observations, space.standardization)
    ]
    label_ids = None
    if label is not None:
        label_id = space.labels.add(label)
        if label_id is None:
            raise PreconditionError(f"label {label!r} is not in the frozen label set")
        label_ids = np.array([label_id], dtype=np.int64)
        if not space.frozen:
            _intern_supported(space, node_rows, [], [[label_id]])
    node_ids, node_incidence = _incidence(node_rows)
    edge_ids, edge_incidence = _incidence([])
    return ChainInstance(
        tokens=[("<vector>",)],
        node_ids=node_ids,
        node_incidence=node_incidence,
        edge_ids=edge_ids,
        edge_incidence=edge_incidence,
        labels=label_ids,
        _node_lists=node_rows,
        _edge_lists=[],
    )
