"""Few-shot episode construction: support/query splits, negatives, candidates.

Every random choice flows through an EpisodeRng, a deterministic stream
derived from a 64-bit seed and a path of child keys, so the full episode
sequence is a pure function of (dataset, seed, K).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .kg import KnowledgeGraph, Triple, bfs_distances


class EpisodeRng:
    """Seeded pseudo-random stream with deterministic child derivation."""

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.path = path
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence((self.seed,) + path)))

    def child(self, *keys: int) -> "EpisodeRng":
        """Independent stream for a sub-task; pure function of (seed, path, keys)."""
        return EpisodeRng(self.seed, self.path + tuple(int(k) for k in keys))

    def shuffle(self, items: list) -> list:
        out = list(items)
        self._gen.shuffle(out)
        return out

    def choice(self, items: list):
        return items[int(self._gen.integers(len(items)))]

    def sample(self, items: list, n: int) -> list:
        idx = self._gen.choice(len(items), size=n, replace=False)
        return [items[int(i)] for i in idx]

    def coin(self) -> bool:
        return bool(self._gen.integers(2))

    def standard_normal(self, size):
        return self._gen.standard_normal(size)

    def standard_gumbel(self, size):
        return self._gen.gumbel(size=size)

    def uniform(self, low, high, size):
        return self._gen.uniform(low, high, size)


@dataclass
class FewShotTask:
    """One episode: a relation, K support triples, queries, and negatives.

    ``relation`` is the interned id when the relation exists in the working
    graph, else the raw name string (unseen relations in the inductive
    setting). ``query_negatives`` is populated for training episodes;
    ``candidates`` (per-query entity-id lists) for evaluation episodes.
    """
    relation: int | str
    support: list[Triple]
    support_negatives: list[Triple]
    queries: list[Triple]
    query_negatives: list[list[Triple]] = field(default_factory=list)
    candidates: list[list[int]] = field(default_factory=list)
    task_id: int = 0

    @property
    def relation_id(self) -> int | None:
        return self.relation if isinstance(self.relation, int) else None

    def positives(self) -> set[Triple]:
        return set(self.support) | set(self.queries)


def local_entity_pool(kg: KnowledgeGraph, triples: list[Triple], radius: int = 2,
                      min_size: int = 10) -> list[int]:
    """Entities within ``radius`` hops of any endpoint of ``triples``.

    Falls back to the full entity set when the local pool is smaller than
    ``min_size``; a too-local pool would starve negative sampling.
    """
    pool: set[int] = set()
    for tr in triples:
        for v in (tr.head, tr.tail):
            pool.update(bfs_distances(kg, v, radius))
    if len(pool) < min_size:
        return list(range(kg.n_entities))
    return sorted(pool)


def corrupt_triple(kg: KnowledgeGraph, triple: Triple, pool: list[int], rng: EpisodeRng,
                   forbidden: set[Triple] | None = None) -> Triple:
    """Corrupt the head or tail (coin flip) into a pool entity.

    The result is guaranteed not to be a known graph triple and not to be in
    ``forbidden`` (the task's positives). If the chosen side cannot produce a
    valid negative the other side is tried; exhausting both raises.
    """
    forbidden = forbidden or set()
    sides = ["head", "tail"] if rng.coin() else ["tail", "head"]
    for side in sides:
        for cand in rng.shuffle(pool):
            if side == "head":
                neg = Triple(cand, triple.relation, triple.tail)
            else:
                neg = Triple(triple.head, triple.relation, cand)
            if neg == triple or neg in forbidden:
                continue
            if isinstance(neg.relation, int) and neg in kg:
                continue
            return neg
    raise DataError(f"negative-sampling pool exhausted for {triple}")


def sample_task(kg: KnowledgeGraph, relation: int | str, relation_triples: list[Triple],
                K: int, rng: EpisodeRng, n_negatives: int = 1,
                max_queries: int = 0) -> FewShotTask:
    """Split a relation's triples into a K-shot support set and queries.

    The first K triples after a seeded shuffle form the support set; the
    remainder (optionally capped at ``max_queries``) form the query set.
    Each support triple receives ``n_negatives`` corruptions and each query
    one, drawn from the local entity pool around the task.
    """
    if len(relation_triples) < K + 1:
        raise DataError(f"need at least {K + 1} triples for a {K}-shot task, "
                        f"got {len(relation_triples)}")
    shuffled = rng.shuffle(relation_triples)
    support = shuffled[:K]
    queries = shuffled[K:]
    if max_queries and len(queries) > max_queries:
        queries = queries[:max_queries]
    positives = set(relation_triples)
    pool = local_entity_pool(kg, support + queries)
    support_negs = [corrupt_triple(kg, tr, pool, rng.child(1, i, j), forbidden=positives)
                    for i, tr in enumerate(support) for j in range(n_negatives)]
    query_negs = [[corrupt_triple(kg, q, pool, rng.child(2, i), forbidden=positives)]
                  for i, q in enumerate(queries)]
    return FewShotTask(relation, support, support_negs, queries, query_negs)


def build_eval_candidates(query: Triple, pool: list[int], n_cand: int, rng: EpisodeRng,
                          exclude: set[int] | None = None) -> list[int]:
    """Draw n_cand distinct candidate tails, never the true tail.

    ``exclude`` carries entities that would form a known true triple with
    (query.head, query.relation); callers build it from the graph plus the
    task positives.
    """
    exclude = set(exclude or ())
    exclude.add(query.tail)
    valid = [e for e in pool if e not in exclude]
    if len(valid) < n_cand:
        raise DataError(f"candidate pool too small: need {n_cand}, have {len(valid)}")
    return rng.sample(valid, n_cand)


# ---------------------------------------------------------------------------
# Task files: one JSON record per task with keys `relation`, `support`,
# `queries`, optional `candidates` (per-query entity-name lists).
# ---------------------------------------------------------------------------

def write_task_file(path, records: list[dict]):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(records, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_task_file(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        records = json.load(fh)
    if not isinstance(records, list):
        raise DataError(f"{path}: expected a JSON list of task records")
    for i, rec in enumerate(records):
        for key in ("relation", "support", "queries"):
            if key not in rec:
                raise DataError(f"{path}: task {i} missing key {key!r}")
    return records


def resolve_task(kg: KnowledgeGraph, record: dict, task_id: int = 0) -> FewShotTask:
    """Bind a task record's entity/relation names to graph ids.

    Entities must exist in the working graph (for evaluation that is the
    merged background + test-time graph); the relation may be unseen, in
    which case it stays a name string and subgraph extraction skips
    relation exclusion.
    """
    rel_name = record["relation"]
    relation = kg.relation_ids.get(rel_name, rel_name)

    def to_triple(rec) -> Triple:
        h, r, t = rec
        if r != rel_name:
            raise DataError(f"task {task_id}: triple relation {r!r} differs from task relation {rel_name!r}")
        if h not in kg.entity_ids or t not in kg.entity_ids:
            raise DataError(f"task {task_id}: unknown entity in {rec!r}")
        return Triple(kg.entity_ids[h], relation, kg.entity_ids[t])

    support = [to_triple(r) for r in record["support"]]
    queries = [to_triple(r) for r in record["queries"]]
    candidates = []
    for row in record.get("candidates", []):
        for name in row:
            if name not in kg.entity_ids:
                raise DataError(f"task {task_id}: unknown candidate entity {name!r}")
        candidates.append([kg.entity_ids[name] for name in row])
    if candidates and len(candidates) != len(queries):
        raise DataError(f"task {task_id}: {len(candidates)} candidate rows for {len(queries)} queries")
    return FewShotTask(relation, support, [], queries, candidates=candidates, task_id=task_id)
