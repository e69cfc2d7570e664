"""Edge-centric message passing over an enclosing subgraph.

Edges carry the learnable features (one initial vector per relation id,
inverses included); nodes only ever hold sums of incident edge states plus
two indicator entries flagging the designated head and tail. After L update
layers the subgraph embedding is the element-wise max over final edge
states concatenated with the final head and tail aggregates, so the encoder
never reads entity identity - only structure and flags.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DataError, ShapeError
from .kg import EnclosingSubgraph


class RelationTable:
    """Learnable initial edge features, one row per relation id."""

    def __init__(self, tensor: Tensor):
        self.tensor = tensor

    @property
    def n_relations(self) -> int:
        return self.tensor.shape[0]

    @property
    def dim(self) -> int:
        return self.tensor.shape[1]

    def lookup(self, relation) -> Tensor:
        if not isinstance(relation, int) or not 0 <= relation < self.n_relations:
            raise DataError(f"relation id {relation!r} has no edge feature")
        return ad.row(self.tensor, relation)


@dataclass
class GnnLayer:
    weight: Tensor  # (3*d_edge + 4, d_edge)
    bias: Tensor    # (d_edge,)


@dataclass
class GnnParams:
    layers: list[GnnLayer]
    invocations: int = 0  # encode_subgraph call counter, used by the complexity checks

    @property
    def n_layers(self) -> int:
        return len(self.layers)


@dataclass
class LayerStates:
    """Per-edge state vectors plus the node aggregates of the latest layer."""
    edge_states: list[Tensor]
    node_ids: list[int]
    node_states: dict[int, Tensor]
    head: int
    tail: int

    def flags(self, v: int) -> np.ndarray:
        return np.array([1.0 if v == self.head else 0.0,
                         1.0 if v == self.tail else 0.0])


@dataclass
class SubgraphEmbedding:
    """Encoder output: max-pooled edge component plus head/tail aggregates."""
    vector: Tensor
    head: int
    tail: int
    empty: bool


def init_edge_features(sub: EnclosingSubgraph, table: RelationTable) -> LayerStates:
    """Table lookups for every edge; node aggregates start at zero."""
    edge_states = [table.lookup(tr.relation) for tr in sub.edges]
    node_ids = sorted(sub.nodes)
    zeros = {v: ad.constant(np.zeros(table.dim)) for v in node_ids}
    return LayerStates(edge_states, node_ids, zeros, sub.head, sub.tail)


def _aggregate_nodes(sub: EnclosingSubgraph, states: LayerStates, dim: int) -> dict[int, Tensor]:
    incident: dict[int, list[Tensor]] = {v: [] for v in states.node_ids}
    for tr, e in zip(sub.edges, states.edge_states):
        incident[tr.head].append(e)
        if tr.tail != tr.head:
            incident[tr.tail].append(e)
    zeros = ad.constant(np.zeros(dim))
    return {v: ad.sum_tensors(es) if es else zeros for v, es in incident.items()}


def message_passing_layer(sub: EnclosingSubgraph, states: LayerStates, layer: GnnLayer,
                          mask: list[Tensor] | None = None) -> LayerStates:
    """One update: sum incident edge states into nodes, flag them, transform edges.

    ``mask`` holds one scalar per edge; when given, each freshly transformed
    edge state is scaled by its mask value so every downstream use (node
    aggregation, the next layer's input, the final pooling) sees the masked
    feature.
    """
    dim = layer.bias.shape[0]
    if states.edge_states and states.edge_states[0].shape[0] != dim:
        raise ShapeError(f"edge state dim {states.edge_states[0].shape[0]} "
                         f"!= layer dim {dim}")
    node_aggr = _aggregate_nodes(sub, states, dim)
    flagged = {v: ad.concat([node_aggr[v], ad.constant(states.flags(v))])
               for v in states.node_ids}
    new_edges = []
    for i, (tr, e) in enumerate(zip(sub.edges, states.edge_states)):
        packed = ad.concat([flagged[tr.head], flagged[tr.tail], e])
        out = ad.relu(ad.linear(packed, layer.weight, layer.bias))
        if mask is not None:
            out = mask[i] * out
        new_edges.append(out)
    return LayerStates(new_edges, states.node_ids, node_aggr, states.head, states.tail)


def encode_subgraph(sub: EnclosingSubgraph, table: RelationTable, params: GnnParams,
                    mask: list[Tensor] | None = None) -> SubgraphEmbedding:
    """Run every layer and read out max-pooled edges plus head/tail aggregates.

    An empty subgraph embeds to zeros (zero edge pool, zero aggregates); an
    all-zeros mask reproduces that embedding exactly because masked features
    vanish at every use.
    """
    params.invocations += 1
    if mask is not None and len(mask) != len(sub.edges):
        raise ShapeError(f"mask length {len(mask)} != edge count {len(sub.edges)}")
    states = init_edge_features(sub, table)
    if mask is not None:
        states = LayerStates([m * e for m, e in zip(mask, states.edge_states)],
                             states.node_ids, states.node_states, states.head, states.tail)
    for layer in params.layers:
        states = message_passing_layer(sub, states, layer, mask)
    final_aggr = _aggregate_nodes(sub, states, table.dim)
    if states.edge_states:
        pooled = ad.max_pool(states.edge_states)
    else:
        pooled = ad.constant(np.zeros(table.dim))
    vector = ad.concat([pooled, final_aggr[sub.head], final_aggr[sub.tail]])
    return SubgraphEmbedding(vector, sub.head, sub.tail, sub.empty)


def embedding_dim(d_edge: int) -> int:
    return 3 * d_edge
