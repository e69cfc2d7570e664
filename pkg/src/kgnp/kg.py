"""Knowledge-graph storage, indexing, and enclosing-subgraph extraction.

A graph is immutable after construction: vocabularies are interned in
first-appearance order, and an incidence index (entity -> incident triples)
backs the BFS neighborhood queries. Subgraph extraction intersects the k-hop
neighbor-triple balls of the two endpoints, on the undirected view of the
graph.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from .errors import DataError


class Triple(NamedTuple):
    head: int
    relation: int | str
    tail: int


INVERSE_SUFFIX = "~inv"


class KnowledgeGraph:
    """Directed multigraph of (head, relation, tail) triples.

    Entity and relation ids are dense ints assigned in first-appearance
    order. ``inverse_of`` maps each relation id to its paired synthetic
    inverse (and back) once ``add_inverse_edges`` has run.
    """

    def __init__(self, entity_names: list[str], relation_names: list[str],
                 triples: list[Triple], inverse_of: dict[int, int] | None = None):
        self.entity_names = entity_names
        self.relation_names = relation_names
        self.entity_ids = {name: i for i, name in enumerate(entity_names)}
        self.relation_ids = {name: i for i, name in enumerate(relation_names)}
        self.triples = list(dict.fromkeys(triples))
        self.triple_set = frozenset(self.triples)
        self.inverse_of = dict(inverse_of) if inverse_of else {}
        self.incidence: list[list[Triple]] = [[] for _ in entity_names]
        for tr in self.triples:
            self.incidence[tr.head].append(tr)
            self.incidence[tr.tail].append(tr)

    @property
    def n_entities(self) -> int:
        return len(self.entity_names)

    @property
    def n_relations(self) -> int:
        return len(self.relation_names)

    @property
    def has_inverses(self) -> bool:
        return bool(self.inverse_of)

    def entities(self) -> range:
        return range(self.n_entities)

    def __contains__(self, triple: Triple) -> bool:
        return triple in self.triple_set

    def __repr__(self):
        return (f"KnowledgeGraph(entities={self.n_entities}, "
                f"relations={self.n_relations}, triples={len(self.triples)})")


def _intern(name: str, names: list[str], ids: dict[str, int]) -> int:
    idx = ids.get(name)
    if idx is None:
        idx = len(names)
        names.append(name)
        ids[name] = idx
    return idx


def build_graph(records: Iterable[tuple[str, str, str]]) -> KnowledgeGraph:
    """Construct a graph from (head, relation, tail) name records."""
    entity_names: list[str] = []
    relation_names: list[str] = []
    ent_ids: dict[str, int] = {}
    rel_ids: dict[str, int] = {}
    triples: list[Triple] = []
    for h, r, t in records:
        hid = _intern(h, entity_names, ent_ids)
        rid = _intern(r, relation_names, rel_ids)
        tid = _intern(t, entity_names, ent_ids)
        triples.append(Triple(hid, rid, tid))
    return KnowledgeGraph(entity_names, relation_names, triples)


def load_triples(path) -> KnowledgeGraph:
    """Load a tab-separated triple file (one ``head\\trelation\\ttail`` per line).

    Ids are assigned in first-appearance order; duplicate lines deduplicate.
    Raises DataError with the offending line number on malformed records and
    on empty files.
    """
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not all(p.strip() for p in parts):
                raise DataError(f"{path}:{lineno}: expected 'head<TAB>relation<TAB>tail', got {line!r}")
            records.append(tuple(p.strip() for p in parts))
    if not records:
        raise DataError(f"{path}: no triples found")
    return build_graph(records)


def merge_graphs(bg: KnowledgeGraph, test: KnowledgeGraph) -> KnowledgeGraph:
    """Union of two graphs under name-based identity.

    Entity and relation names shared by both map to a single id in the
    result; ids are re-interned (bg vocabulary first, then unseen test
    names in their own first-appearance order).
    """
    if bg.has_inverses or test.has_inverses:
        raise DataError("merge_graphs expects forward-only graphs; merge before add_inverse_edges")
    records = [(g.entity_names[tr.head], g.relation_names[tr.relation], g.entity_names[tr.tail])
               for g in (bg, test) for tr in g.triples]
    return build_graph(records)


def add_inverse_edges(kg: KnowledgeGraph) -> KnowledgeGraph:
    """Return a new graph with a synthetic inverse triple per forward triple.

    Each forward relation r gains a paired relation id carrying the
    ``~inv`` suffix; (h, r, t) gains (t, r_inv, h). The relation count
    doubles. Calling on a graph that already has inverses is an error.
    """
    if kg.has_inverses:
        raise DataError("graph already contains inverse relations")
    n_fwd = kg.n_relations
    relation_names = kg.relation_names + [name + INVERSE_SUFFIX for name in kg.relation_names]
    inverse_of = {}
    for r in range(n_fwd):
        inverse_of[r] = r + n_fwd
        inverse_of[r + n_fwd] = r
    triples = list(kg.triples)
    triples += [Triple(tr.tail, tr.relation + n_fwd, tr.head) for tr in kg.triples]
    return KnowledgeGraph(list(kg.entity_names), relation_names, triples, inverse_of)


def _check_entity(kg: KnowledgeGraph, v: int):
    if not isinstance(v, int) or not 0 <= v < kg.n_entities:
        raise DataError(f"unknown entity id {v!r}")


def bfs_distances(kg: KnowledgeGraph, v: int, k: int) -> dict[int, int]:
    """Undirected BFS distances from v, truncated at radius k."""
    _check_entity(kg, v)
    dist = {v: 0}
    frontier = deque([v])
    while frontier:
        u = frontier.popleft()
        d = dist[u]
        if d == k:
            continue
        for tr in kg.incidence[u]:
            w = tr.tail if tr.head == u else tr.head
            if w not in dist:
                dist[w] = d + 1
                frontier.append(w)
    return dist


def k_hop_neighbors(kg: KnowledgeGraph, v: int, k: int) -> set[Triple]:
    """All triples whose endpoints both lie within undirected distance k of v."""
    if k < 1:
        raise DataError(f"hop count must be >= 1, got {k}")
    dist = bfs_distances(kg, v, k)
    out = set()
    for u in dist:
        for tr in kg.incidence[u]:
            if tr.head in dist and tr.tail in dist:
                out.add(tr)
    return out


@dataclass(frozen=True)
class EnclosingSubgraph:
    """Intersection of the k-hop neighbor-triple balls around a pair.

    ``edges`` is ordered deterministically (sorted by id triple) at
    extraction time; ``head`` and ``tail`` always belong to ``nodes`` even
    when the intersection is empty, in which case ``empty`` is set.
    """
    nodes: frozenset[int]
    edges: tuple[Triple, ...]
    head: int
    tail: int
    hop_k: int
    empty: bool = field(default=False)

    def __len__(self):
        return len(self.edges)


def enclosing_subgraph(kg: KnowledgeGraph, h: int, t: int, k: int,
                       exclude_relation: int | None = None) -> EnclosingSubgraph:
    """Extract the enclosing subgraph of the pair (h, t) at radius k.

    ``exclude_relation`` drops every edge labeled with that relation or its
    paired inverse; episode pipelines pass the episode's target relation so
    the predicted relation never appears as an edge feature (and in
    particular the target triple itself never leaks into its own subgraph).
    """
    _check_entity(kg, h)
    _check_entity(kg, t)
    common = k_hop_neighbors(kg, h, k) & k_hop_neighbors(kg, t, k)
    if exclude_relation is not None:
        skip = {exclude_relation, kg.inverse_of.get(exclude_relation, exclude_relation)}
        common = {tr for tr in common if tr.relation not in skip}
    edges = tuple(sorted(common))
    nodes = {h, t}
    for tr in edges:
        nodes.add(tr.head)
        nodes.add(tr.tail)
    return EnclosingSubgraph(frozenset(nodes), edges, h, t, k, empty=not edges)
