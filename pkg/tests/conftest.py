import numpy as np
import pytest

from kgnp.kg import KnowledgeGraph, Triple, add_inverse_edges, build_graph
from kgnp.model import Model, ModelDims


def path_graph(n: int = 4, relation: str = "r") -> KnowledgeGraph:
    """Chain a-b-c-... with a single relation."""
    names = [chr(ord("a") + i) for i in range(n)]
    return build_graph([(names[i], relation, names[i + 1]) for i in range(n - 1)])


def random_graph(rng: np.random.Generator, n_nodes: int, n_edges: int,
                 n_relations: int = 3) -> KnowledgeGraph:
    records = []
    for _ in range(n_edges):
        h, t = rng.integers(n_nodes, size=2)
        r = rng.integers(n_relations)
        records.append((f"n{h}", f"r{r}", f"n{t}"))
    # make sure every node id exists even if untouched by edges
    records += [(f"n{i}", "r0", f"n{i}") for i in range(n_nodes) if
                not any(f"n{i}" in (a, c) for a, _, c in records)]
    return build_graph(records)


def tiny_model(kg: KnowledgeGraph, d_edge: int = 4, d_z: int = 3, n_layers: int = 2,
               seed: int = 0) -> Model:
    return Model(kg.relation_names, ModelDims(d_edge, d_z, n_layers), init_seed=seed)


@pytest.fixture
def chain_kg() -> KnowledgeGraph:
    """The worked two-hop example: bake requires chef, chef works in kitchen."""
    return build_graph([
        ("bake", "requires", "chef"),
        ("chef", "works_in", "kitchen"),
        ("play", "requires", "musician"),
        ("musician", "works_in", "music_room"),
    ])


@pytest.fixture
def indexed_path() -> KnowledgeGraph:
    return path_graph(4)
