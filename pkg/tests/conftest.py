import numpy as np
import pytest

from asaddle.graph import build_graph, path_edges, ring_edges
from asaddle.apps.consensus import ConsensusRegressionConfig, build_consensus_problem


def central_difference(fn, x, h=1e-6):
    """Independent gradient oracle: central finite differences."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (fn(x + e) - fn(x - e)) / (2.0 * h)
    return g


def assert_grad_close(analytic, numeric, rel_tol=1e-5):
    scale = max(1.0, float(np.linalg.norm(numeric)))
    assert np.linalg.norm(np.asarray(analytic) - numeric) <= rel_tol * scale


@pytest.fixture(scope="session")
def path3():
    return build_graph(3, path_edges(3))


@pytest.fixture(scope="session")
def ring5():
    return build_graph(5, ring_edges(5))


@pytest.fixture(scope="session")
def consensus_spec(ring5):
    return build_consensus_problem(ConsensusRegressionConfig(), ring5)


@pytest.fixture(scope="session")
def small_consensus_spec(path3):
    cfg = ConsensusRegressionConfig(p=2, gamma=0.3, noise_std=0.1)
    return build_consensus_problem(cfg, path3)
