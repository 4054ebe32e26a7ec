"""
Pytest configuration and shared fixtures for numisnet tests
"""
import os
import sys

import numpy as np
import pytest

# Add the project root to Python path for imports
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from numisnet.core.topology import LayerSpec, NetworkTopology  # noqa: E402
from numisnet.synth import SynthSpec, generate_corpus  # noqa: E402
from numisnet.text import load_lexicon  # noqa: E402


@pytest.fixture
def rng():
    """Seeded generator for test data"""
    return np.random.default_rng(20240607)


@pytest.fixture(scope="session")
def lexicon_tables():
    """The packaged lexicon"""
    return load_lexicon()


@pytest.fixture
def tiny_topology():
    """Small conv net exercising every layer kind on a 12 x 12 x 2 input"""
    return NetworkTopology(
        layers=[
            LayerSpec("conv", kernel_size=3, stride=1, padding=1, depth=3, activation="relu"),
            LayerSpec("maxpool", kernel_size=3, stride=2),
            LayerSpec("conv", kernel_size=3, stride=1, padding=0, depth=4, activation="relu"),
            LayerSpec("flatten"),
            LayerSpec("dropout", dropout_rate=0.5),
            LayerSpec("dense", depth=5, activation="relu"),
            LayerSpec("dropout", dropout_rate=0.5),
            LayerSpec("dense", depth=2),
        ],
        input_shape=(12, 12, 2),
    )


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """Noise-free synthetic corpus of 40 coins, 64 px"""
    out = tmp_path_factory.mktemp("corpus")
    spec = SynthSpec(n_samples=40, positive_rate=0.5, image_side=64, seed=3)
    generate_corpus(spec, out)
    return out


@pytest.fixture
def isolated_env(monkeypatch):
    """Default logging level regardless of the caller's environment"""
    monkeypatch.delenv("NUMIS_LOG", raising=False)
    return monkeypatch


# Add markers for different test categories
def pytest_configure(config):
    """Configure pytest markers"""
    config.addinivalue_line("markers", "unit: Unit tests")
    config.addinivalue_line("markers", "integration: Integration tests")
    config.addinivalue_line("markers", "slow: Slow running tests")


def pytest_collection_modifyitems(config, items):
    """Modify test collection to add markers"""
    for item in items:
        if "test_integration" in item.nodeid or "integration" in item.name:
            item.add_marker(pytest.mark.integration)
        else:
            item.add_marker(pytest.mark.unit)
