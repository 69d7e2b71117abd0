"""
Factor graphs with clique templates

Factor tables are laid out in row-major mixed-radix order over the factor's
scope: for scope (a, b, c) with cardinalities (Ka, Kb, Kc) the assignment
(ya, yb, yc) lives at flat index (ya * Kb + yb) * Kc + yc.

Each factor stores its features sparsely as COO triples
(table entry, feature index, value); the log-potential table is the
weighted bincount of those triples plus an optional fixed offset table
(which is where forbidden -inf entries live).
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Literal, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from crf.chain_inference import ChainPotentials
from crf.errors import AssignmentError, ModelCorruptionError, StructureError
from crf.features import ChainInstance, FeatureSpace, SparseFeatureVector

NODE_TEMPLATE = 0
EDGE_TEMPLATE = 1


@dataclass(frozen=True)
class VariableNode:
    id: int
    cardinality: int
    role: Literal["output", "latent"] = "output"

    def __post_init__(self):
        if self.cardinality < 1:
            raise StructureError(f"variable {self.id} has cardinality {self.cardinality}")
        if self.role not in ("output", "latent"):
            raise StructureError(f"variable {self.id} has unknown role {self.role}")


@dataclass
class FactorNode:
    """
    A factor over an ordered scope of variables

    feature_entries[n] is the flat table entry at which feature
    feature_ids[n] fires with value feature_values[n].
    """

    id: int
    scope: Tuple[int, ...]
    cardinalities: Tuple[int, ...]
    template_id: int = 0
    feature_entries: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    feature_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    feature_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    offset: Optional[np.ndarray] = None

    def __post_init__(self):
        self.scope = tuple(int(v) for v in self.scope)
        self.cardinalities = tuple(int(c) for c in self.cardinalities)
        if not self.scope:
            raise StructureError(f"factor {self.id} has an empty scope")
        if len(set(self.scope)) != len(self.scope):
            raise StructureError(f"factor {self.id} repeats a variable in its scope")
        if len(self.cardinalities) != len(self.scope):
            raise StructureError(f"factor {self.id} scope and cardinalities differ in length")
        self.feature_entries = np.asarray(self.feature_entries, dtype=np.int64)
        self.feature_ids = np.asarray(self.feature_ids, dtype=np.int64)
        self.feature_values = np.asarray(self.feature_values, dtype=np.float64)
        if self.offset is not None:
            self.offset = np.asarray(self.offset, dtype=np.float64).reshape(self.size)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.cardinalities

    @property
    def size(self) -> int:
        return int(np.prod(self.cardinalities))

    @classmethod
    def from_vectors(
        cls,
        id: int,
        scope: Sequence[int],
        cardinalities: Sequence[int],
        vectors: Sequence[SparseFeatureVector],
        template_id: int = 0,
        offset: Optional[np.ndarray] = None,
    ) -> "FactorNode":
        """Build a factor from one feature vector per flat table entry"""
        entries, ids, values = [], [], []
        for entry, vector in enumerate(vectors):
            entries.append(np.full(len(vector), entry, dtype=np.int64))
            ids.append(vector.indices)
            values.append(vector.values)
        return cls(
            id,
            tuple(scope),
            tuple(cardinalities),
            template_id,
            np.concatenate(entries) if entries else np.zeros(0, dtype=np.int64),
            np.concatenate(ids) if ids else np.zeros(0, dtype=np.int64),
            np.concatenate(values) if values else np.zeros(0),
            offset,
        )

    def flat_index(self, assignment: Sequence[int]) -> int:
        if len(assignment) != len(self.scope):
            raise AssignmentError(
                f"factor {self.id} expects {len(self.scope)} values, got {len(assignment)}"
            )
        for variable, value, card in zip(self.scope, assignment, self.cardinalities):
            if not 0 <= value < card:
                raise AssignmentError(
                    f"value {value} out of range for variable {variable} (cardinality {card})"
                )
        return int(np.ravel_multi_index(tuple(int(v) for v in assignment), self.shape))

    def features_at(self, entry: int) -> SparseFeatureVector:
        mask = self.feature_entries == entry
        return SparseFeatureVector.from_pairs(
            zip(self.feature_ids[mask].tolist(), self.feature_values[mask].tolist())
        )

    def log_table(self, weights: np.ndarray) -> np.ndarray:
        """Log-potential table of this factor, shaped by the scope cardinalities"""
        if self.feature_ids.size and (
            self.feature_ids.max() >= len(weights) or self.feature_ids.min() < 0
        ):
            raise ModelCorruptionError(
                f"factor {self.id} references feature {int(self.feature_ids.max())} "
                f"outside weight vector of length {len(weights)}"
            )
        table = np.bincount(
            self.feature_entries,
            weights=self.feature_values * weights[self.feature_ids],
            minlength=self.size,
        ).astype(np.float64)
        if self.offset is not None:
            table = table + self.offset
        return table.reshape(self.shape)


@dataclass(frozen=True)
class CliqueTemplate:
    """A set of factors sharing the parameter slice [start, stop)"""

    id: int
    start: int
    stop: int
    arity: int

    @property
    def size(self) -> int:
        return self.stop - self.start


@dataclass
class GraphPotentials:
    """Per-factor log tables plus the log-potential of fully clamped factors"""

    tables: List[np.ndarray]
    constant: float = 0.0


class FactorGraph:
    """
    Bipartite variable / factor structure

    Factors that lost all their variables to clamping are folded into the
    constant terms (constant_ids / constant_values / constant_offset).
    """

    def __init__(
        self,
        variables: Sequence[VariableNode],
        factors: Sequence[FactorNode],
        num_weights: int,
        templates: Optional[Sequence[CliqueTemplate]] = None,
        constant_ids: Optional[np.ndarray] = None,
        constant_values: Optional[np.ndarray] = None,
        constant_offset: float = 0.0,
    ):
        self.variables = list(variables)
        self.factors = list(factors)
        self.num_weights = int(num_weights)
        self.templates = list(templates or [])
        self.constant_ids = (
            np.zeros(0, dtype=np.int64) if constant_ids is None else np.asarray(constant_ids)
        )
        self.constant_values = (
            np.zeros(0) if constant_values is None else np.asarray(constant_values, dtype=float)
        )
        self.constant_offset = float(constant_offset)

        for index, variable in enumerate(self.variables):
            if variable.id != index:
                raise StructureError("variable ids must be contiguous from 0")
        self.variable_factors: List[List[int]] = [[] for _ in self.variables]
        for index, factor in enumerate(self.factors):
            if factor.id != index:
                raise StructureError("factor ids must be contiguous from 0")
            for variable, card in zip(factor.scope, factor.cardinalities):
                if not 0 <= variable < len(self.variables):
                    raise StructureError(f"factor {factor.id} names unknown variable {variable}")
                if self.variables[variable].cardinality != card:
                    raise StructureError(
                        f"factor {factor.id} disagrees on the cardinality of variable {variable}"
                    )
                self.variable_factors[variable].append(index)

        self.structure = nx.Graph()
        self.structure.add_nodes_from(("v", v.id) for v in self.variables)
        self.structure.add_nodes_from(("f", f.id) for f in self.factors)
        for factor in self.factors:
            for variable in factor.scope:
                self.structure.add_edge(("f", factor.id), ("v", variable))
        self.is_tree = nx.is_forest(self.structure) if self.structure else True
        self._cache: Optional[Tuple[int, GraphPotentials]] = None

    @property
    def cardinalities(self) -> List[int]:
        return [v.cardinality for v in self.variables]

    def degree(self, variable: int) -> int:
        return len(self.variable_factors[variable])

    def components(self) -> List[set]:
        return [set(c) for c in nx.connected_components(self.structure)]

    def potentials(self, weights: np.ndarray, version: Optional[int] = None) -> GraphPotentials:
        """
        Log-potential tables for a weight vector

        When a version counter is given, tables are cached and reused until a
        different version is requested.
        """
        if version is not None and self._cache is not None and self._cache[0] == version:
            return self._cache[1]
        weights = np.asarray(weights, dtype=np.float64)
        if len(weights) != self.num_weights:
            raise ModelCorruptionError(
                f"graph expects {self.num_weights} weights, got {len(weights)}"
            )
        constant = self.constant_offset
        if self.constant_ids.size:
            constant += float(np.dot(self.constant_values, weights[self.constant_ids]))
        result = GraphPotentials([f.log_table(weights) for f in self.factors], constant)
        if version is not None:
            self._cache = (version, result)
        return result


@dataclass
class GraphInstance:
    """A factor graph paired with its observed assignment (-1 for latent entries)"""

    graph: FactorGraph
    assignment: np.ndarray


def factor_log_potential(
    factor: FactorNode, weights: np.ndarray, assignment: Sequence[int]
) -> float:
    """
    log Psi_c(y_c) = sum_k theta_k f_k(x_c, y_c) for one scope assignment

    Raises:
        AssignmentError: If the assignment does not fit the scope
        ModelCorruptionError: If a feature index falls outside the weights
    """
    entry = factor.flat_index(assignment)
    value = factor.features_at(entry).dot(np.asarray(weights, dtype=np.float64))
    if factor.offset is not None:
        value += float(factor.offset[entry])
    return value


def _empty_vectors(count: int) -> List[SparseFeatureVector]:
    return [SparseFeatureVector.empty() for _ in range(count)]


def build_chain_graph(
    length: int,
    num_labels: int,
    node_features: Optional[Sequence[Sequence[SparseFeatureVector]]] = None,
    edge_features: Optional[Sequence[Sequence[Sequence[SparseFeatureVector]]]] = None,
    num_weights: Optional[int] = None,
    node_factors: bool = True,
) -> FactorGraph:
    """
    Linear-chain factor graph

    Args:
        length: Sequence length T >= 1
        num_labels: Label count M >= 1
        node_features: node_features[t][j] fires when y_t = j
        edge_features: edge_features[t][i][j] fires when y_t = i, y_{t+1} = j
        num_weights: Weight-vector length (inferred from the features when omitted)
        node_factors: Emit T unary factors; when False node features are folded
            into the adjacent edge factor (a chain of length 1 keeps its node factor)
    """
    if length < 1 or num_labels < 1:
        raise StructureError("chains need T >= 1 and M >= 1")
    m = num_labels
    node_features = node_features or [_empty_vectors(m) for _ in range(length)]
    edge_features = edge_features or [
        [_empty_vectors(m) for _ in range(m)] for _ in range(length - 1)
    ]
    if num_weights is None:
        highest = [
            int(v.indices[-1])
            for row in node_features
            for v in row
            if len(v)
        ] + [
            int(v.indices[-1])
            for table in edge_features
            for row in table
            for v in row
            if len(v)
        ]
        num_weights = max(highest) + 1 if highest else 0

    variables = [VariableNode(t, m) for t in range(length)]
    factors: List[FactorNode] = []
    fold = not node_factors and length > 1

    if not fold:
        for t in range(length):
            factors.append(
                FactorNode.from_vectors(len(factors), (t,), (m,), node_features[t], NODE_TEMPLATE)
            )
    for t in range(length - 1):
        vectors = []
        for i in range(m):
            for j in range(m):
                vector = edge_features[t][i][j]
                if fold:
                    extra = node_features[t + 1][j].items()
                    if t == 0:
                        extra += node_features[0][i].items()
                    vector = SparseFeatureVector.from_pairs(vector.items() + extra)
                vectors.append(vector)
        factors.append(
            FactorNode.from_vectors(len(factors), (t, t + 1), (m, m), vectors, EDGE_TEMPLATE)
        )

    return FactorGraph(
        variables, factors, num_weights, _chain_templates(node_features, num_weights)
    )


def _chain_templates(
    node_features: Sequence[Sequence[SparseFeatureVector]], num_weights: int
) -> List[CliqueTemplate]:
    """Node block [0, n) and edge block [n, K) when node indices precede edge indices"""
    node_ids = [int(v.indices[-1]) for row in node_features for v in row if len(v)]
    boundary = max(node_ids) + 1 if node_ids else 0
    return [
        CliqueTemplate(NODE_TEMPLATE, 0, boundary, 1),
        CliqueTemplate(EDGE_TEMPLATE, boundary, num_weights, 2),
    ]


PairwiseFeatures = Callable[[int, int], Sequence[Sequence[SparseFeatureVector]]]
UnaryFeatures = Callable[[int], Sequence[SparseFeatureVector]]


def _indicator_pairwise(num_labels: int, offset: int = 0) -> List[List[SparseFeatureVector]]:
    return [
        [
            SparseFeatureVector.from_pairs([(offset + i * num_labels + j, 1.0)])
            for j in range(num_labels)
        ]
        for i in range(num_labels)
    ]


def build_grid_graph(
    rows: int,
    cols: int,
    num_labels: int,
    pairwise_features: Optional[PairwiseFeatures] = None,
    unary_features: Optional[UnaryFeatures] = None,
    num_weights: Optional[int] = None,
) -> FactorGraph:
    """
    4-neighbor grid with one tied pairwise template

    Variable (r, c) has id r * cols + c. Unary factors come first, then
    pairwise factors row by row, right neighbor before down neighbor. Without
    pairwise_features the template is the M*M label-pair indicator block,
    placed after the highest unary index. The node template spans the unary
    indices and the edge template the rest of the weight vector.
    """
    if rows < 1 or cols < 1:
        raise StructureError("grids need at least one row and one column")
    m = num_labels
    variables = [VariableNode(i, m) for i in range(rows * cols)]
    factors: List[FactorNode] = []
    boundary = 0
    if unary_features is not None:
        for v in range(rows * cols):
            vectors = list(unary_features(v))
            boundary = max([boundary] + [int(x.indices[-1]) + 1 for x in vectors if len(x)])
            factors.append(
                FactorNode.from_vectors(len(factors), (v,), (m,), vectors, NODE_TEMPLATE)
            )
    if pairwise_features is None:
        indicator = _indicator_pairwise(m, boundary)
        pairwise_features = lambda a, b: indicator  # noqa: E731
        num_weights = num_weights if num_weights is not None else boundary + m * m

    highest = boundary - 1
    for r in range(rows):
        for c in range(cols):
            here = r * cols + c
            neighbors = []
            if c + 1 < cols:
                neighbors.append(here + 1)
            if r + 1 < rows:
                neighbors.append(here + cols)
            for there in neighbors:
                table = pairwise_features(here, there)
                vectors = [table[i][j] for i in range(m) for j in range(m)]
                if any(len(x) and int(x.indices[0]) < boundary for x in vectors):
                    raise StructureError(
                        f"pairwise features of ({here}, {there}) overlap "
                        f"the unary block [0, {boundary})"
                    )
                highest = max([highest] + [int(x.indices[-1]) for x in vectors if len(x)])
                factors.append(
                    FactorNode.from_vectors(
                        len(factors), (here, there), (m, m), vectors, EDGE_TEMPLATE
                    )
                )
    if num_weights is None:
        num_weights = highest + 1
    templates = [CliqueTemplate(EDGE_TEMPLATE, boundary, num_weights, 2)]
    if unary_features is not None:
        templates.insert(0, CliqueTemplate(NODE_TEMPLATE, 0, boundary, 1))
    return FactorGraph(variables, factors, num_weights, templates)


def clamp(graph: FactorGraph, clamped: Mapping[int, int]) -> FactorGraph:
    """
    Fix a partial assignment and return the reduced graph over the free variables

    Free variables are renumbered in their original order; the result's
    partition function equals Z(y, x) of the original graph. Factors whose
    whole scope is clamped become constant terms.

    Raises:
        AssignmentError: If a clamped value or variable is out of range
    """
    for variable, value in clamped.items():
        if not 0 <= variable < len(graph.variables):
            raise AssignmentError(f"cannot clamp unknown variable {variable}")
        if not 0 <= value < graph.variables[variable].cardinality:
            raise AssignmentError(
                f"value {value} out of range for variable {variable} "
                f"(cardinality {graph.variables[variable].cardinality})"
            )
    if not clamped:
        return graph

    free = [v for v in graph.variables if v.id not in clamped]
    renumber = {v.id: i for i, v in enumerate(free)}
    variables = [VariableNode(i, v.cardinality, v.role) for i, v in enumerate(free)]

    factors: List[FactorNode] = []
    constant_ids = [graph.constant_ids]
    constant_values = [graph.constant_values]
    constant_offset = graph.constant_offset
    for factor in graph.factors:
        selector = tuple(
            clamped[v] if v in clamped else slice(None) for v in factor.scope
        )
        old_entries = np.arange(factor.size).reshape(factor.shape)[selector].ravel()
        old_to_new = np.full(factor.size, -1, dtype=np.int64)
        old_to_new[old_entries] = np.arange(old_entries.size)
        keep = old_to_new[factor.feature_entries] >= 0
        offset = factor.offset[old_entries] if factor.offset is not None else None

        scope = tuple(renumber[v] for v in factor.scope if v not in clamped)
        if not scope:
            constant_ids.append(factor.feature_ids[keep])
            constant_values.append(factor.feature_values[keep])
            if offset is not None:
                constant_offset += float(offset[0])
            continue
        factors.append(
            FactorNode(
                len(factors),
                scope,
                tuple(c for v, c in zip(factor.scope, factor.cardinalities) if v not in clamped),
                factor.template_id,
                old_to_new[factor.feature_entries[keep]],
                factor.feature_ids[keep],
                factor.feature_values[keep],
                offset,
            )
        )
    return FactorGraph(
        variables,
        factors,
        graph.num_weights,
        graph.templates,
        np.concatenate(constant_ids),
        np.concatenate(constant_values),
        constant_offset,
    )


def assignment_log_score(
    graph: FactorGraph, potentials: GraphPotentials, assignment: Sequence[int]
) -> float:
    """Sum of factor log-potentials at a full assignment (plus clamped constants)"""
    score = potentials.constant
    for factor, table in zip(graph.factors, potentials.tables):
        score += float(table[tuple(int(assignment[v]) for v in factor.scope)])
    return score


def assignment_feature_counts(graph: FactorGraph, assignment: Sequence[int]) -> np.ndarray:
    """Feature counts f(x, y) summed over all factors at a full assignment"""
    counts = np.bincount(
        graph.constant_ids, weights=graph.constant_values, minlength=graph.num_weights
    ).astype(np.float64)
    for factor in graph.factors:
        entry = factor.flat_index([int(assignment[v]) for v in factor.scope])
        mask = factor.feature_entries == entry
        counts += np.bincount(
            factor.feature_ids[mask],
            weights=factor.feature_values[mask],
            minlength=graph.num_weights,
        )
    return counts


def expected_feature_counts(
    graph: FactorGraph, factor_weights: Sequence[np.ndarray]
) -> np.ndarray:
    """
    Feature counts weighted per table entry

    With factor beliefs as the weights this is the model expectation of the
    features; constant (fully clamped) features count once.
    """
    counts = np.bincount(
        graph.constant_ids, weights=graph.constant_values, minlength=graph.num_weights
    ).astype(np.float64)
    for factor, weight in zip(graph.factors, factor_weights):
        flat = np.asarray(weight, dtype=np.float64).reshape(factor.size)
        counts += np.bincount(
            factor.feature_ids,
            weights=factor.feature_values * flat[factor.feature_entries],
            minlength=graph.num_weights,
        )
    return counts


# =============================================================================
# Linear-chain instances
# =============================================================================


def _local_weights(table: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return np.where(table >= 0, weights[np.maximum(table, 0)], 0.0)


def chain_scores(
    space: FeatureSpace, instance: ChainInstance, weights: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Node scores (T, M) and transition scores (T-1, M, M) of a featurized chain

    Raises:
        ModelCorruptionError: If the weight vector does not match the space
    """
    if len(weights) != space.num_features:
        raise ModelCorruptionError(
            f"weight vector has length {len(weights)}, feature space has {space.num_features}"
        )
    m = space.num_labels
    node_table, edge_table = space.tables()
    if instance.node_ids.size:
        node_local = _local_weights(node_table[instance.node_ids], weights)
        node = np.asarray(instance.node_incidence @ node_local).reshape(instance.length, m)
    else:
        node = np.zeros((instance.length, m))
    if instance.length > 1 and instance.edge_ids.size:
        edge_local = _local_weights(edge_table[instance.edge_ids], weights).reshape(-1, m * m)
        edge = np.asarray(instance.edge_incidence @ edge_local).reshape(-1, m, m)
    else:
        edge = np.zeros((instance.length - 1, m, m))
    return node, edge


def chain_potentials(
    space: FeatureSpace, instance: ChainInstance, weights: np.ndarray
) -> ChainPotentials:
    node, edge = chain_scores(space, instance, weights)
    return ChainPotentials.from_scores(node, edge)


def accumulate_chain_counts(
    space: FeatureSpace,
    instance: ChainInstance,
    node_weights: np.ndarray,
    edge_weights: np.ndarray,
    out: np.ndarray,
    scale: float = 1.0,
) -> np.ndarray:
    """
    Add feature counts weighted by per-position label weights into `out`

    node_weights (T, M) weights node features at (t, y_t); edge_weights
    (T-1, M, M) weights edge features at (t, y_{t-1}, y_t). One-hot weights
    give empirical counts, marginals give expected counts.
    """
    m = space.num_labels
    node_table, edge_table = space.tables()
    if instance.node_ids.size:
        local = np.asarray(instance.node_incidence.T @ node_weights)
        index = node_table[instance.node_ids]
        mask = index >= 0
        out[index[mask]] += scale * local[mask]
    if instance.length > 1 and instance.edge_ids.size:
        local = np.asarray(
            instance.edge_incidence.T @ np.asarray(edge_weights).reshape(-1, m * m)
        ).reshape(-1, m, m)
        index = edge_table[instance.edge_ids]
        mask = index >= 0
        out[index[mask]] += scale * local[mask]
    return out


def one_hot_labels(labels: np.ndarray, num_labels: int) -> Tuple[np.ndarray, np.ndarray]:
    """One-hot node (T, M) and edge (T-1, M, M) weights of a labeling"""
    length = len(labels)
    node = np.zeros((length, num_labels))
    node[np.arange(length), labels] = 1.0
    edge = np.zeros((max(length - 1, 0), num_labels, num_labels))
    if length > 1:
        edge[np.arange(length - 1), labels[:-1], labels[1:]] = 1.0
    return node, edge


def empirical_chain_counts(space: FeatureSpace, instance: ChainInstance) -> np.ndarray:
    node, edge = one_hot_labels(instance.labels, space.num_labels)
    return accumulate_chain_counts(
        space, instance, node, edge, np.zeros(space.num_features)
    )


def chain_graph_instance(space: FeatureSpace, instance: ChainInstance) -> GraphInstance:
    """Factor-graph form of a featurized chain (node factors plus edge factors)"""
    m = space.num_labels
    node_features = [
        [instance.node_features(space, t, j) for j in range(m)]
        for t in range(instance.length)
    ]
    edge_features = [
        [[instance.edge_features(space, t + 1, i, j) for j in range(m)] for i in range(m)]
        for t in range(instance.length - 1)
    ]
    graph = build_chain_graph(
        instance.length, m, node_features, edge_features, num_weights=space.num_features
    )
    if space.frozen:
        node_slice, edge_slice = space.template_slices()
        graph.templates = [
            CliqueTemplate(NODE_TEMPLATE, node_slice[0], node_slice[1], 1),
            CliqueTemplate(EDGE_TEMPLATE, edge_slice[0], edge_slice[1], 2),
        ]
    labels = (
        np.asarray(instance.labels, dtype=np.int64)
        if instance.labels is not None
        else np.full(instance.length, -1, dtype=np.int64)
    )
    return GraphInstance(graph, labels)


def forbid_transitions(graph: FactorGraph, forbidden: Sequence[Tuple[int, int]]) -> FactorGraph:
    """
    Mark label pairs (i, j) as impossible on every pairwise factor

    Forbidden entries become -inf in the offset table, so message passing and
    enumeration see them as zero potential.
    """
    factors = []
    for factor in graph.factors:
        offset = factor.offset
        if len(factor.scope) == 2:
            offset = np.zeros(factor.size) if offset is None else offset.copy()
            table = offset.reshape(factor.shape)
            for i, j in forbidden:
                table[i, j] = -np.inf
            offset = table.ravel()
        factors.append(
            FactorNode(
                factor.id,
                factor.scope,
                factor.cardinalities,
                factor.template_id,
                factor.feature_entries,
                factor.feature_ids,
                factor.feature_values,
                offset,
            )
        )
    return FactorGraph(
        graph.variables,
        factors,
        graph.num_weights,
        graph.templates,
        graph.constant_ids,
        graph.constant_values,
        graph.constant_offset,
    )
