"""
Unit tests for the training objectives
Analytic gradients are checked against central finite differences
"""

import numpy as np
import pytest
from pydantic import ValidationError

from crf.errors import ParameterError, PreconditionError, StructureError
from crf.features import ChainDataset, featurize_corpus
from crf.graph import GraphInstance, chain_graph_instance
from crf.graph_inference import tree_bp
from crf.models.hcrf import latent_dataset
from crf.objectives import (
    LatentSpec,
    RegularizerSpec,
    bethe_surrogate,
    chain_cll,
    edge_pseudolikelihood,
    em_step,
    finite_difference_gradient,
    general_cll,
    l1_objective,
    latent_marginal_likelihood,
    pseudolikelihood,
    sgd_instance_gradient,
)
from tests.oracles import max_relative_error, random_loopy_graph, random_tree_graph

GRADIENT_TOLERANCE = 1e-4
GRADIENT_TRIALS = 50
CONCAVITY_TRIALS = 200


def _check_gradient(objective, draw, trials=GRADIENT_TRIALS):
    """Compare analytic and central-difference gradients at `trials` drawn weight vectors"""
    for _ in range(trials):
        weights = draw()
        report = objective(weights)
        numeric = finite_difference_gradient(lambda w: objective(w).value, weights)
        assert max_relative_error(report.gradient, numeric) < GRADIENT_TOLERANCE


def _check_concavity(value, draw, trials=CONCAVITY_TRIALS):
    for _ in range(trials):
        a, b = draw(), draw()
        assert value(0.5 * (a + b)) >= 0.5 * (value(a) + value(b)) - 1e-9


def _random_graph_instances(rng, count, roles=None):
    instances = []
    for _ in range(count):
        graph = random_tree_graph(rng, 4, num_weights=8, roles=roles)
        assignment = np.array([rng.integers(0, c) for c in graph.cardinalities])
        instances.append(GraphInstance(graph, assignment))
    return instances


@pytest.fixture
def weights(toy_dataset, rng) -> np.ndarray:
    return rng.normal(0.0, 0.5, size=toy_dataset.space.num_features)


@pytest.fixture
def draw_weights(toy_dataset, rng):
    """Fresh random weight vectors sized for the toy dataset"""
    return lambda: rng.normal(0.0, 0.5, size=toy_dataset.space.num_features)


@pytest.fixture
def draw_graph_weights(rng):
    return lambda: rng.normal(size=8)


@pytest.fixture
def graph_instances(rng):
    return _random_graph_instances(rng, 3)


class TestRegularizerSpec:
    """Test the parameter prior"""

    def test_default_is_l2_with_sigma2_ten(self):
        reg = RegularizerSpec()
        assert reg.kind == "l2"
        assert reg.sigma2 == 10.0

    def test_l2_penalty(self):
        value, gradient = RegularizerSpec.l2(2.0).penalty(np.array([1.0, -2.0]))
        assert value == pytest.approx(-5.0 / 4.0)
        np.testing.assert_allclose(gradient, [-0.5, 1.0])

    def test_share_scales_penalty(self):
        value, _ = RegularizerSpec.l2(1.0).penalty(np.array([2.0]), share=0.25)
        assert value == pytest.approx(-0.5)

    def test_l1_and_none_have_no_smooth_part(self):
        for reg in (RegularizerSpec.l1(3.0), RegularizerSpec.none()):
            value, gradient = reg.penalty(np.array([1.0, 2.0]))
            assert value == 0.0
            assert not gradient.any()

    def test_validation(self):
        with pytest.raises(ValidationError):
            RegularizerSpec(kind="l2", sigma2=0.0)
        with pytest.raises(ValidationError):
            RegularizerSpec(kind="elastic")


class TestLatentSpec:
    """Test the combined label / sub-state layout"""

    def test_combined_labels_are_label_major(self):
        latent = LatentSpec(hidden_states=2, labels=["A", "B"])
        assert latent.combined_labels() == ["A#0", "A#1", "B#0", "B#1"]
        assert latent.num_states == 4
        assert latent.observed_label(3) == 1

    def test_state_mask(self):
        latent = LatentSpec(hidden_states=2, labels=["A", "B"])
        mask = latent.state_mask(np.array([1, 0]))
        np.testing.assert_array_equal(mask, [[False, False, True, True], [True, True, False, False]])

    def test_duplicate_labels(self):
        with pytest.raises(ValidationError):
            LatentSpec(hidden_states=1, labels=["A", "A"])


class TestChainLikelihood:
    """Test the linear-chain conditional log-likelihood"""

    def test_gradient(self, toy_dataset, draw_weights):
        _check_gradient(lambda w: chain_cll(w, toy_dataset), draw_weights)

    def test_unregularized_gradient(self, toy_dataset, draw_weights):
        _check_gradient(
            lambda w: chain_cll(w, toy_dataset, RegularizerSpec.none()), draw_weights, trials=5
        )

    def test_value_is_non_positive_without_prior(self, toy_dataset, weights):
        assert chain_cll(weights, toy_dataset, RegularizerSpec.none()).value <= 0.0

    def test_concave_at_random_midpoints(self, toy_dataset, draw_weights):
        _check_concavity(lambda w: chain_cll(w, toy_dataset).value, draw_weights)

    def test_empty_dataset_is_penalty_only(self, toy_dataset, weights):
        empty = ChainDataset(toy_dataset.space, [])
        report = chain_cll(weights, empty, RegularizerSpec.l2(4.0))
        assert report.value == pytest.approx(-np.dot(weights, weights) / 8.0)

    def test_unlabeled_instance(self, toy_dataset, weights):
        toy_dataset.instances[0].labels = None
        with pytest.raises(PreconditionError):
            chain_cll(weights, toy_dataset)

    def test_l1_objective_details(self, toy_dataset, weights):
        report = l1_objective(weights, toy_dataset, alpha=0.5)
        smooth = chain_cll(weights, toy_dataset, RegularizerSpec.none())
        assert report.value == pytest.approx(smooth.value)
        assert report.details["alpha"] == 0.5
        assert report.details["penalized_value"] == pytest.approx(
            smooth.value - 0.5 * np.abs(weights).sum()
        )
        with pytest.raises(ParameterError):
            l1_objective(weights, toy_dataset, alpha=-1.0)


class TestGeneralLikelihood:
    """Test the conditional likelihood on factor graphs"""

    def test_gradient_on_trees(self, graph_instances, draw_graph_weights):
        _check_gradient(lambda w: general_cll(w, graph_instances), draw_graph_weights)

    def test_concave_on_trees(self, graph_instances, draw_graph_weights):
        _check_concavity(lambda w: general_cll(w, graph_instances).value, draw_graph_weights)

    def test_chain_graphs_match_chain_likelihood(self, toy_dataset, weights):
        instances = [chain_graph_instance(toy_dataset.space, i) for i in toy_dataset.instances]
        graph_report = general_cll(weights, instances)
        chain_report = chain_cll(weights, toy_dataset)
        assert graph_report.value == pytest.approx(chain_report.value, abs=1e-9)
        np.testing.assert_allclose(graph_report.gradient, chain_report.gradient, atol=1e-9)

    def test_loopy_inference_on_trees_is_exact(self, graph_instances, rng):
        weights = rng.normal(size=8)
        warm = {}
        loopy = general_cll(
            weights,
            graph_instances,
            inference="loopy",
            bp_options={"max_iters": 200, "tolerance": 1e-12},
            warm_start=warm,
        )
        exact = general_cll(weights, graph_instances)
        assert loopy.inference == "loopy-bp"
        assert loopy.value == pytest.approx(exact.value, abs=1e-8)
        assert sorted(warm) == [0, 1, 2]

    def test_exact_inference_rejects_loops(self, rng):
        graph = random_loopy_graph(rng, num_weights=8)
        instance = GraphInstance(graph, np.zeros(4, dtype=np.int64))
        with pytest.raises(StructureError):
            general_cll(np.zeros(8), [instance])

    def test_unknown_inference_mode(self, graph_instances):
        with pytest.raises(ParameterError):
            general_cll(np.zeros(8), graph_instances, inference="sampling")


class TestPseudolikelihood:
    """Test node-wise and edge-wise pseudolikelihood"""

    def test_chain_gradient(self, toy_dataset, draw_weights):
        _check_gradient(lambda w: pseudolikelihood(w, toy_dataset), draw_weights)

    def test_graph_gradient(self, graph_instances, draw_graph_weights):
        _check_gradient(
            lambda w: pseudolikelihood(w, graph_instances), draw_graph_weights, trials=5
        )

    def test_chain_and_graph_forms_agree(self, toy_dataset, weights):
        instances = [chain_graph_instance(toy_dataset.space, i) for i in toy_dataset.instances]
        chain_report = pseudolikelihood(weights, toy_dataset)
        graph_report = pseudolikelihood(weights, instances)
        assert chain_report.value == pytest.approx(graph_report.value, abs=1e-9)
        np.testing.assert_allclose(chain_report.gradient, graph_report.gradient, atol=1e-9)

    def test_concave_at_random_midpoints(self, toy_dataset, draw_weights):
        _check_concavity(lambda w: pseudolikelihood(w, toy_dataset).value, draw_weights)

    def test_edge_gradient(self, toy_dataset, draw_weights):
        _check_gradient(lambda w: edge_pseudolikelihood(w, toy_dataset), draw_weights)

    def test_edge_form_concave_at_random_midpoints(self, toy_dataset, draw_weights):
        _check_concavity(lambda w: edge_pseudolikelihood(w, toy_dataset).value, draw_weights)

    def test_edge_form_on_single_positions(self, rng):
        corpus = [([("a",)], ["X"]), ([("b",)], ["Y"]), ([("a",)], ["Y"])]
        dataset = featurize_corpus(corpus, [])
        weights = rng.normal(size=dataset.space.num_features)
        assert edge_pseudolikelihood(weights, dataset).value == pytest.approx(
            pseudolikelihood(weights, dataset).value, abs=1e-12
        )


class TestBetheSurrogate:
    """Test the primal and dual Bethe likelihoods"""

    def test_both_forms_are_exact_on_trees(self, graph_instances, rng):
        weights = rng.normal(size=8)
        for instance in graph_instances:
            graph = instance.graph
            beliefs = tree_bp(graph, graph.potentials(weights))
            exact = general_cll(weights, [instance], reg=RegularizerSpec.none()).value
            primal, dual = bethe_surrogate(weights, instance, beliefs)
            assert primal == pytest.approx(exact, abs=1e-8)
            assert dual == pytest.approx(exact, abs=1e-8)


class TestLatentLikelihood:
    """Test the hidden-state marginal likelihood and EM"""

    @pytest.fixture
    def latent_data(self, toy_corpus, word_templates):
        return latent_dataset(toy_corpus, word_templates, hidden_states=2)

    def test_chain_gradient(self, latent_data, rng):
        dataset, latent = latent_data
        _check_gradient(
            lambda w: latent_marginal_likelihood(w, dataset, latent),
            lambda: rng.normal(0.0, 0.3, size=dataset.space.num_features),
        )

    def test_report_is_flagged_nonconvex(self, latent_data):
        dataset, latent = latent_data
        report = latent_marginal_likelihood(np.zeros(dataset.space.num_features), dataset, latent)
        assert report.nonconvex

    def test_single_sub_state_reduces_to_chain_likelihood(self, toy_corpus, word_templates, rng):
        dataset, latent = latent_dataset(toy_corpus, word_templates, hidden_states=1)
        weights = rng.normal(size=dataset.space.num_features)
        latent_report = latent_marginal_likelihood(weights, dataset, latent)
        chain_report = chain_cll(weights, dataset)
        assert latent_report.value == pytest.approx(chain_report.value, abs=1e-9)
        np.testing.assert_allclose(latent_report.gradient, chain_report.gradient, atol=1e-9)

    def test_graph_gradient_with_latent_variable(self, rng, draw_graph_weights):
        instances = _random_graph_instances(rng, 2, roles={1: "latent", 3: "latent"})
        _check_gradient(
            lambda w: latent_marginal_likelihood(w, instances), draw_graph_weights, trials=5
        )

    def test_state_count_mismatch(self, toy_dataset):
        latent = LatentSpec(hidden_states=3, labels=["S", "L"])
        with pytest.raises(PreconditionError):
            latent_marginal_likelihood(np.zeros(toy_dataset.space.num_features), toy_dataset, latent)

    def test_em_step_never_decreases_the_likelihood(self, latent_data):
        dataset, latent = latent_data
        weights = np.random.default_rng(3).uniform(-0.1, 0.1, size=dataset.space.num_features)
        values = [latent_marginal_likelihood(weights, dataset, latent).value]
        for _ in range(5):
            weights = em_step(weights, dataset, latent, m_step_iters=5)
            values.append(latent_marginal_likelihood(weights, dataset, latent).value)
        assert all(b >= a - 1e-9 for a, b in zip(values, values[1:]))
        assert values[-1] > values[0]

    def test_em_step_needs_an_iteration(self, latent_data):
        dataset, latent = latent_data
        with pytest.raises(ParameterError):
            em_step(np.zeros(dataset.space.num_features), dataset, latent, m_step_iters=0)


class TestStochasticHelpers:
    """Test per-instance gradients and finite differences"""

    def test_instance_gradients_sum_to_batch_gradient(self, toy_dataset, weights):
        reg = RegularizerSpec.l2(3.0)
        total = sum(sgd_instance_gradient(weights, toy_dataset, i, reg) for i in range(len(toy_dataset)))
        np.testing.assert_allclose(total, chain_cll(weights, toy_dataset, reg).gradient, atol=1e-10)

    def test_finite_difference_of_a_quadratic(self):
        gradient = finite_difference_gradient(lambda w: -float(np.dot(w, w)), np.array([1.0, -2.0]))
        np.testing.assert_allclose(gradient, [-2.0, 4.0], atol=1e-8)

    def test_finite_difference_step_must_be_positive(self):
        with pytest.raises(ParameterError):
            finite_difference_gradient(lambda w: 0.0, np.zeros(1), h=0.0)
