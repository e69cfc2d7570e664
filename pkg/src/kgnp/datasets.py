"""Dataset bundles: directory layout, loading, and the inductive preparation step.

Bundle layout::

    bundle/
      bg.tsv                 training-time background graph
      ind_test.tsv           test-time additions (optional)
      tasks/{train,valid,test}.json

Preparation removes every entity of the held-out test tasks together with
its one-hop neighbors from the source graph to form the background, keeps
the removed neighborhood (minus task-relation triples) as the test-time
additions, and freezes per-query candidate lists into the task files.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import DataError
from .kg import KnowledgeGraph, add_inverse_edges, build_graph, load_triples, merge_graphs
from .tasks import EpisodeRng, FewShotTask, read_task_file, resolve_task, write_task_file


@dataclass
class DatasetBundle:
    root: Path
    bg: KnowledgeGraph
    ind_test: KnowledgeGraph | None
    task_records: dict[str, list[dict]]

    def train_graph(self) -> KnowledgeGraph:
        return add_inverse_edges(self.bg)

    def eval_graph(self) -> KnowledgeGraph:
        if self.ind_test is None:
            return add_inverse_edges(self.bg)
        return add_inverse_edges(merge_graphs(self.bg, self.ind_test))

    def tasks(self, split: str, kg: KnowledgeGraph) -> list[FewShotTask]:
        return [resolve_task(kg, rec, task_id=i)
                for i, rec in enumerate(self.task_records.get(split, []))]

    def train_pools(self, kg: KnowledgeGraph) -> list[tuple[int | str, list]]:
        """Per-relation triple pools for episodic sampling, bound to ``kg``."""
        pools = []
        for i, rec in enumerate(self.task_records.get("train", [])):
            task = resolve_task(kg, rec, task_id=i)
            pools.append((task.relation, task.support + task.queries))
        return pools


def eval_graph_for(bundle: DatasetBundle, relation_names: list[str]) -> tuple[KnowledgeGraph, int]:
    """Test-time graph restricted to a checkpoint's relation vocabulary.

    Edges whose relation the trained model has never seen carry no learned
    feature and are dropped (their count is returned). The resulting
    vocabulary must reproduce the checkpoint's exactly, inverses included;
    anything else means the bundle does not match the checkpoint.
    """
    n_forward = len(relation_names) // 2
    forward = set(relation_names[:n_forward])
    graphs = [bundle.bg] + ([bundle.ind_test] if bundle.ind_test is not None else [])
    records, dropped = [], 0
    for g in graphs:
        for tr in g.triples:
            rel = g.relation_names[tr.relation]
            if rel in forward:
                records.append((g.entity_names[tr.head], rel, g.entity_names[tr.tail]))
            else:
                dropped += 1
    kg = add_inverse_edges(build_graph(records))
    if kg.relation_names != relation_names:
        raise DataError("bundle relations do not match the checkpoint vocabulary; "
                        "evaluate with the bundle the model was trained on")
    return kg, dropped


def load_bundle(root) -> DatasetBundle:
    root = Path(root)
    bg_path = root / "bg.tsv"
    if not bg_path.exists():
        raise DataError(f"{root}: not a dataset bundle (missing bg.tsv)")
    bg = load_triples(bg_path)
    ind_path = root / "ind_test.tsv"
    ind_test = load_triples(ind_path) if ind_path.exists() else None
    records = {}
    for split in ("train", "valid", "test"):
        path = root / "tasks" / f"{split}.json"
        if path.exists():
            records[split] = read_task_file(path)
    return DatasetBundle(root, bg, ind_test, records)


@dataclass
class SplitSpec:
    """Which relations become held-out tasks; everything else stays background."""
    test_relations: list[str]
    valid_relations: list[str]
    train_relations: list[str]

    @classmethod
    def from_dict(cls, payload: dict) -> "SplitSpec":
        return cls(list(payload.get("test_relations", [])),
                   list(payload.get("valid_relations", [])),
                   list(payload.get("train_relations", [])))

    def all_relations(self) -> list[str]:
        return self.train_relations + self.valid_relations + self.test_relations


def _write_tsv(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for h, r, t in records:
            fh.write(f"{h}\t{r}\t{t}\n")


def prepare_bundle(source: KnowledgeGraph, spec: SplitSpec, out_dir, K: int = 3,
                   n_cand: int = 50, seed: int = 0, query_subsample: float = 1.0,
                   log=None) -> Path:
    """Build an inductive bundle from a source graph and a relation split.

    Test-task entities and their one-hop neighbors are removed from the
    source to form ``bg.tsv``; triples incident to a test-task entity
    (task-relation triples excluded) become ``ind_test.tsv``. Task files get
    a seeded support/query split and frozen candidate lists; ``query_subsample``
    keeps only that fraction of each test task's queries.
    """
    for rel in spec.all_relations():
        if rel not in source.relation_ids:
            raise DataError(f"split spec names unknown relation {rel!r}")
    task_rel_ids = {source.relation_ids[r] for r in spec.all_relations()}
    rng = EpisodeRng(seed, (37,))

    by_relation: dict[str, list] = {source.relation_names[r]: [] for r in task_rel_ids}
    for tr in source.triples:
        if tr.relation in task_rel_ids:
            by_relation[source.relation_names[tr.relation]].append(tr)

    test_triples = [tr for rel in spec.test_relations for tr in by_relation[rel]]
    test_entities = {v for tr in test_triples for v in (tr.head, tr.tail)}
    removed = set(test_entities)
    for v in test_entities:
        for tr in source.incidence[v]:
            removed.add(tr.head)
            removed.add(tr.tail)

    bg_records, ind_records = [], []
    for tr in source.triples:
        if tr.relation in task_rel_ids:
            continue
        names = (source.entity_names[tr.head], source.relation_names[tr.relation],
                 source.entity_names[tr.tail])
        if tr.head not in removed and tr.tail not in removed:
            bg_records.append(names)
        if tr.head in test_entities or tr.tail in test_entities:
            ind_records.append(names)

    if not bg_records:
        raise DataError("background graph would be empty; split removes everything")
    out = Path(out_dir)
    (out / "tasks").mkdir(parents=True, exist_ok=True)
    _write_tsv(out / "bg.tsv", bg_records)
    if ind_records:
        _write_tsv(out / "ind_test.tsv", ind_records)

    bg = build_graph(bg_records)
    merged = merge_graphs(bg, build_graph(ind_records)) if ind_records else bg

    def records_for(relations: list[str], graph: KnowledgeGraph, split_tag: int,
                    subsample: float) -> list[dict]:
        records = []
        for ri, rel in enumerate(relations):
            triples = [tr for tr in by_relation[rel]
                       if source.entity_names[tr.head] in graph.entity_ids
                       and source.entity_names[tr.tail] in graph.entity_ids]
            task_rng = rng.child(split_tag, ri)
            triples = task_rng.shuffle(triples)
            if len(triples) < K + 1:
                continue
            queries = triples[K:]
            if subsample < 1.0:
                queries = queries[:max(1, int(len(queries) * subsample))]
                triples = triples[:K] + queries
            same_head_tails = {}
            for tr in by_relation[rel]:
                same_head_tails.setdefault(source.entity_names[tr.head], set()).add(
                    source.entity_names[tr.tail])
            candidates = []
            for qi, q in enumerate(queries):
                head_name = source.entity_names[q.head]
                exclude = {graph.entity_ids[t] for t in same_head_tails.get(head_name, ())
                           if t in graph.entity_ids}
                valid_pool = [e for e in range(graph.n_entities) if e not in exclude]
                if len(valid_pool) < n_cand:
                    raise DataError(f"relation {rel!r}: candidate pool too small")
                row = sorted(graph.entity_names[e]
                             for e in task_rng.child(qi).sample(valid_pool, n_cand))
                candidates.append(row)
            names = [[source.entity_names[tr.head], rel, source.entity_names[tr.tail]]
                     for tr in triples]
            records.append({"relation": rel, "support": names[:K], "queries": names[K:],
                            "candidates": candidates})
        return records

    train_records = records_for(spec.train_relations, bg, 1, 1.0)
    valid_records = records_for(spec.valid_relations, bg, 2, 1.0)
    test_records = records_for(spec.test_relations, merged, 3, query_subsample)
    for split, records in (("train", train_records), ("valid", valid_records),
                           ("test", test_records)):
        write_task_file(out / "tasks" / f"{split}.json", records)

    if log:
        log(f"{'':12s}{'#rels':>8s}{'#entities':>12s}{'#edges':>10s}{'#tasks':>8s}")
        log(f"{'Ind-BG':12s}{bg.n_relations:>8d}{bg.n_entities:>12d}"
            f"{len(bg.triples):>10d}{'-':>8s}")
        if ind_records:
            ind = build_graph(ind_records)
            log(f"{'Ind-Test':12s}{ind.n_relations:>8d}{ind.n_entities:>12d}"
                f"{len(ind.triples):>10d}{len(test_records):>8d}")
    return out
