"""Ranking-protocol evaluation: MRR and Hit@N over candidate-augmented queries.

Each task draws one deterministic hypothesis from its prior (noise stream
seeded by the task id); every query then scores the true tail against its
candidate entities with the noise-free mask, and the rank uses the mid-tie
convention (average rank over the tie group, floored).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .config import TrainConfig
from .errors import DataError
from .hypothesis import HypothesisSample, encode_hypothesis, sample_hypothesis
from .kg import KnowledgeGraph, Triple, enclosing_subgraph
from .model import Model
from .predictor import predict_query
from .tasks import (EpisodeRng, FewShotTask, build_eval_candidates, corrupt_triple,
                    local_entity_pool)
from .encoder import encode_subgraph

HIT_LEVELS = (1, 5, 10)


@dataclass
class RankingResult:
    query: Triple
    rank: int
    scores: list[float]  # true tail first, then candidates
    task_id: int = 0


@dataclass
class MetricsReport:
    mrr: float
    hits: dict[int, float]
    n_queries: int
    per_task: list[dict] = field(default_factory=list)

    def flat_table(self) -> str:
        lines = [f"mrr\t{self.mrr:.6f}"]
        for n in HIT_LEVELS:
            lines.append(f"hit{n}\t{self.hits[n]:.6f}")
        lines.append(f"n_queries\t{self.n_queries}")
        for rec in self.per_task:
            lines.append(f"task\t{rec['task_id']}\t{rec['relation']}\t{rec['mrr']:.6f}\t{rec['n_queries']}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {"mrr": self.mrr, "hit1": self.hits[1], "hit5": self.hits[5],
                "hit10": self.hits[10], "n_queries": self.n_queries,
                "per_task": self.per_task}


def _mid_tie_rank(true_score: float, cand_scores: list[float]) -> int:
    greater = sum(1 for s in cand_scores if s > true_score)
    tied = sum(1 for s in cand_scores if s == true_score)
    return 1 + greater + tied // 2


def rank_query(kg: KnowledgeGraph, model: Model, task: FewShotTask, query: Triple,
               candidates: list[int], zs: list[HypothesisSample],
               config: TrainConfig, rng: EpisodeRng) -> RankingResult:
    """Score the true tail and every candidate, averaged over the z samples."""
    rel = task.relation_id
    tails = [query.tail] + list(candidates)
    scores = []
    for ti, tail in enumerate(tails):
        sub = enclosing_subgraph(kg, query.head, tail, config.k, exclude_relation=rel)
        acc = 0.0
        for zi, z in enumerate(zs):
            s, _ = predict_query(sub, z, model.table, model.gnn, model.fusion, model.head,
                                 config.temperature, rng.child(ti, zi), deterministic=True)
            acc += float(s.data)
        scores.append(acc / len(zs))
    return RankingResult(query, _mid_tie_rank(scores[0], scores[1:]), scores, task.task_id)


def compute_metrics(results: list[RankingResult]) -> MetricsReport:
    """MRR is the mean reciprocal rank; Hit@N the fraction with rank <= N."""
    if not results:
        raise DataError("compute_metrics needs at least one ranking result")
    mrr = sum(1.0 / r.rank for r in results) / len(results)
    hits = {n: sum(1 for r in results if r.rank <= n) / len(results) for n in HIT_LEVELS}
    per_task: dict[int, list[RankingResult]] = {}
    for r in results:
        per_task.setdefault(r.task_id, []).append(r)
    breakdown = [{"task_id": tid, "relation": "",
                  "mrr": sum(1.0 / r.rank for r in rs) / len(rs), "n_queries": len(rs)}
                 for tid, rs in sorted(per_task.items())]
    return MetricsReport(mrr, hits, len(results), breakdown)


def task_prior(kg: KnowledgeGraph, model: Model, task: FewShotTask,
               config: TrainConfig, rng: EpisodeRng):
    """Prior hypothesis distribution from the support set plus sampled negatives."""
    support = task.support
    if config.K > len(support):
        raise DataError(f"task {task.task_id}: asked for K={config.K} shots, "
                        f"file provides {len(support)}")
    support = support[:config.K]
    negatives = task.support_negatives
    if not negatives:
        pool = local_entity_pool(kg, support)
        positives = task.positives()
        negatives = [corrupt_triple(kg, tr, pool, rng.child(7, i, j), forbidden=positives)
                     for i, tr in enumerate(support) for j in range(config.n)]
    rel = task.relation_id
    embed = lambda tr, label: (encode_subgraph(
        enclosing_subgraph(kg, tr.head, tr.tail, config.k, exclude_relation=rel),
        model.table, model.gnn), label)
    labeled = [embed(tr, 1) for tr in support] + [embed(tr, 0) for tr in negatives]
    return encode_hypothesis(labeled, model.hyp, "prior")


def evaluate_split(kg: KnowledgeGraph, model: Model, tasks: list[FewShotTask],
                   config: TrainConfig, seed_tag: int = 9000) -> MetricsReport:
    """Rank every query of every task; deterministic for a fixed config seed."""
    results: list[RankingResult] = []
    relations: dict[int, str] = {}
    for task in tasks:
        rng = EpisodeRng(config.seed, (seed_tag, task.task_id))
        prior = task_prior(kg, model, task, config, rng)
        zs = [sample_hypothesis(prior, rng=rng.child(8, s))
              for s in range(config.eval_z_samples)]
        pool = list(range(kg.n_entities))
        for qi, query in enumerate(task.queries):
            if task.candidates:
                cands = task.candidates[qi]
            else:
                known = {tr.tail for tr in kg.incidence[query.head]
                         if tr.head == query.head and tr.relation == task.relation}
                known |= {tr.tail for tr in task.positives() if tr.head == query.head}
                cands = build_eval_candidates(query, pool, config.n_cand,
                                              rng.child(6, qi), exclude=known)
            results.append(rank_query(kg, model, task, query, cands, zs, config,
                                      rng.child(5, qi)))
        rel_name = task.relation if isinstance(task.relation, str) \
            else kg.relation_names[task.relation]
        relations[task.task_id] = rel_name
    report = compute_metrics(results)
    for rec in report.per_task:
        rec["relation"] = relations.get(rec["task_id"], "")
    return report
