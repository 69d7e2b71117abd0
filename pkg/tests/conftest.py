"""
Pytest configuration and shared fixtures
Provides reusable corpora, feature spaces and random generators for all test suites
"""

import os
from pathlib import Path
from typing import List, Tuple

import numpy as np
import pytest
from faker import Faker

from crf.features import ChainDataset, FeatureTemplate, featurize_corpus
from utils.config import get_settings

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "data" / "fixtures"

LabeledSequence = Tuple[List[Tuple[str, ...]], List[str]]


# =============================================================================
# Session-scoped fixtures (run once per test session)
# =============================================================================


@pytest.fixture(scope="session")
def fixture_dir() -> Path:
    """Directory holding the shipped CoNLL and template fixtures"""
    return FIXTURE_DIR


@pytest.fixture(scope="session")
def train_conll(fixture_dir) -> Path:
    return fixture_dir / "train.conll"


@pytest.fixture(scope="session")
def template_file(fixture_dir) -> Path:
    return fixture_dir / "templates.txt"


# =============================================================================
# Function-scoped fixtures (run for each test)
# =============================================================================


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded numpy generator; every test gets the same stream"""
    return np.random.default_rng(20240611)


@pytest.fixture
def fake() -> Faker:
    """
    Seeded Faker instance for token text

    Example:
        def test_words(fake):
            tokens = [(w,) for w in fake.words(5)]
    """
    generator = Faker()
    generator.seed_instance(1234)
    return generator


@pytest.fixture
def word_templates() -> List[FeatureTemplate]:
    """Identity of the current word plus its two-letter suffix"""
    return [FeatureTemplate("identity", (0,), "node"), FeatureTemplate("suf2", (0,), "node")]


@pytest.fixture
def toy_corpus(fake) -> List[LabeledSequence]:
    """
    Small labeled corpus: long words are tagged L, short words S

    Example:
        def test_training(toy_corpus, word_templates):
            model = train_chain_crf(toy_corpus, word_templates)
    """
    vocabulary = sorted(set(fake.words(12)))
    corpus = []
    for length in (3, 4, 2, 5, 3, 4):
        picks = np.random.default_rng(length).integers(0, len(vocabulary), length)
        words = [vocabulary[int(i)] for i in picks]
        corpus.append(([(w,) for w in words], ["L" if len(w) > 4 else "S" for w in words]))
    # guarantee both labels occur even if faker only produced short or long words
    corpus.append(([("a",), ("elephant",)], ["S", "L"]))
    return corpus


@pytest.fixture
def toy_dataset(toy_corpus) -> ChainDataset:
    """Featurized toy corpus with the identity template only"""
    return featurize_corpus(toy_corpus, [FeatureTemplate("identity", (0,), "node")])


@pytest.fixture
def ambiguous_corpus() -> List[LabeledSequence]:
    """
    Identical inputs with every label configuration observed

    The conditional likelihood has a finite unregularized maximum here.
    """
    tokens = [("a",), ("b",)]
    counts = {("X", "Y"): 3, ("Y", "X"): 1, ("X", "X"): 2, ("Y", "Y"): 1}
    corpus = []
    for labels, count in counts.items():
        corpus.extend((list(tokens), list(labels)) for _ in range(count))
    return corpus


# =============================================================================
# Autouse fixtures (automatically used by all tests)
# =============================================================================


@pytest.fixture(autouse=True)
def reset_environment():
    """
    Reset environment variables and cached settings around each test

    This ensures CRF_* overrides in one test don't leak into another
    """
    original_env = os.environ.copy()
    get_settings.cache_clear()

    yield

    os.environ.clear()
    os.environ.update(original_env)
    get_settings.cache_clear()


# =============================================================================
# Test markers
# =============================================================================


def pytest_collection_modifyitems(config, items):
    """
    Add unit / integration markers by directory
    """
    for item in items:
        path = str(item.fspath)
        if f"{os.sep}unit{os.sep}" in path:
            item.add_marker(pytest.mark.unit)
        if f"{os.sep}integration{os.sep}" in path:
            item.add_marker(pytest.mark.integration)
