import numpy as np
import pytest

from baca.graphs import Graph


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def random_graph(rng, n, p=0.3):
    iu, ju = np.triu_indices(n, k=1)
    mask = rng.random(len(iu)) < p
    edges = tuple((int(a), int(b)) for a, b in zip(iu[mask], ju[mask]))
    return Graph(num_nodes=n, edges=edges)


@pytest.fixture
def make_random_graph():
    return random_graph
