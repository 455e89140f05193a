import os

import numpy as np
import pytest

from gcnjem.graph import SparseAdjacency, add_self_loops, symmetric_normalize

DATASETS_DIR = os.environ.get(
    "GCNJEM_DATASETS",
    os.path.join(os.path.dirname(__file__), "..", "datasets"),
)


def dataset_dir(name: str):
    path = os.path.join(DATASETS_DIR, name)
    return path if os.path.isdir(path) else None


def require_dataset(name: str) -> str:
    path = dataset_dir(name)
    if path is None:
        pytest.skip(f"converted {name} dataset not present under {DATASETS_DIR} "
                    f"(see README: offline conversion step)")
    return path


def random_symmetric_graph(n: int, density: float, rng: np.random.Generator):
    """Random loop-free undirected unit-weight adjacency."""
    dense = (rng.random((n, n)) < density).astype(float)
    dense = np.triu(dense, 1)
    return SparseAdjacency.from_dense(dense + dense.T)


def normalized(adj: SparseAdjacency) -> SparseAdjacency:
    return symmetric_normalize(add_self_loops(adj))


@pytest.fixture
def rng():
    return np.random.default_rng(0)
