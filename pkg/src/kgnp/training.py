"""Unified episodic objective and the training loop.

Per episode: encode support-side subgraphs once, build the prior (support
plus support-negatives) and the posterior (additionally the labeled query
pairs), then Monte-Carlo over posterior hypothesis samples: fuse, mask, and
score each query against its negative. The optimized total is

    margin ranking term + w_z * KL(posterior || prior) + w_mask * mask KL

with every term a sum (pairs, coordinates, edges) and the Monte-Carlo terms
averaged over the T samples.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, adam_step, backward
from .config import TrainConfig
from .encoder import encode_subgraph
from .errors import DataError, NumericError, UsageError
from .hypothesis import HypothesisDistribution, encode_hypothesis, sample_hypothesis
from .kg import KnowledgeGraph, enclosing_subgraph
from .model import Model, ModelDims, save_checkpoint
from .predictor import predict_query
from .tasks import EpisodeRng, FewShotTask, sample_task

PROB_FLOOR = 1e-12


def gaussian_kl(q: HypothesisDistribution, p: HypothesisDistribution) -> Tensor:
    """Closed-form KL between diagonal Gaussians, summed over coordinates."""
    if q.mu.shape != p.mu.shape:
        raise NumericError(f"KL dimension mismatch: {q.mu.shape} vs {p.mu.shape}")
    if np.any(q.sigma.data <= 0) or np.any(p.sigma.data <= 0):
        raise NumericError("gaussian_kl requires strictly positive sigmas")
    ratio = ad.log(p.sigma / q.sigma)
    diff = q.mu - p.mu
    quad = (q.sigma * q.sigma + diff * diff) / (p.sigma * p.sigma * 2.0)
    return ad.reduce_sum(ratio + quad - 0.5)


def mask_kl(probs: list[Tensor], tau: float) -> Tensor:
    """Sum over edges of KL(Bern(p) || Bern(tau)), with the additive
    constant dropped.

    Probabilities are clamped away from {0, 1} so the loss stays finite
    even when the fusion head saturates or tau sits near the ends of (0, 1).
    """
    if not 0.0 < tau < 1.0:
        raise UsageError(f"tau must lie in (0, 1), got {tau}")
    if not probs:
        return ad.constant(0.0)
    terms = []
    for p in probs:
        safe = ad.clip(p, PROB_FLOOR, 1.0 - PROB_FLOOR)
        one_m = 1.0 - safe
        terms.append(safe * ad.log(safe * (1.0 / tau))
                     + one_m * ad.log(one_m * (1.0 / (1.0 - tau))))
    return ad.sum_tensors(terms)


def margin_ranking_loss(pos_scores: list[Tensor], neg_scores: list[Tensor],
                        gamma: float) -> Tensor:
    """Sum over (positive, negative) pairs of max(0, gamma + s_neg - s_pos)."""
    if not pos_scores or len(pos_scores) != len(neg_scores):
        raise DataError(f"need matched score pairs, got {len(pos_scores)} vs {len(neg_scores)}")
    if gamma <= 0:
        raise UsageError(f"margin must be positive, got {gamma}")
    hinges = [ad.relu(neg + gamma - pos) for pos, neg in zip(pos_scores, neg_scores)]
    return ad.sum_tensors(hinges)


@dataclass
class LossReport:
    total: float
    ranking: float
    kl_z: float
    kl_mask: float
    relation: int | str
    K: int
    n_pairs: int
    edge_counts: list[int] = field(default_factory=list)
    encoder_calls_support: int = 0
    encoder_calls_query: int = 0
    # arguments of the dropped mask-KL constant, kept for completeness
    mask_edges: int = 0
    tau: float = 0.0


def extract_episode_subgraphs(kg: KnowledgeGraph, task: FewShotTask, hop_k: int):
    """Enclosing subgraphs for every triple of the episode.

    The episode's relation (when it exists in the graph) is excluded from
    every extraction so the predicted relation never appears as an edge
    feature.
    """
    rel = task.relation_id
    grab = lambda tr: enclosing_subgraph(kg, tr.head, tr.tail, hop_k, exclude_relation=rel)
    return {
        "support": [grab(tr) for tr in task.support],
        "support_neg": [grab(tr) for tr in task.support_negatives],
        "query": [grab(tr) for tr in task.queries],
        "query_neg": [[grab(tr) for tr in negs] for negs in task.query_negatives],
    }


def episode_loss(kg: KnowledgeGraph, task: FewShotTask, model: Model,
                 config: TrainConfig, rng: EpisodeRng) -> tuple[Tensor, LossReport]:
    if not task.queries or not task.query_negatives:
        raise DataError("episode_loss needs queries with attached negatives")
    subs = extract_episode_subgraphs(kg, task, config.k)
    calls_before = model.gnn.invocations

    embed = lambda sub: encode_subgraph(sub, model.table, model.gnn)
    support_pairs = [(embed(s), 1) for s in subs["support"]]
    support_pairs += [(embed(s), 0) for s in subs["support_neg"]]
    calls_support = model.gnn.invocations - calls_before

    query_pairs = [(embed(s), 1) for s in subs["query"]]
    query_pairs += [(embed(s), 0) for negs in subs["query_neg"] for s in negs]

    prior = encode_hypothesis(support_pairs, model.hyp, "prior")
    posterior = encode_hypothesis(support_pairs + query_pairs, model.hyp, "posterior")
    kl_z = gaussian_kl(posterior, prior)

    rank_terms, mask_terms = [], []
    n_pairs = 0
    edge_counts = [len(s) for s in subs["query"]]
    for t in range(config.T):
        z = sample_hypothesis(posterior, rng=rng.child(3, t))
        pos_scores, neg_scores, probs_all = [], [], []
        for qi, (q_sub, neg_subs) in enumerate(zip(subs["query"], subs["query_neg"])):
            s_pos, mask_pos = predict_query(q_sub, z, model.table, model.gnn, model.fusion,
                                            model.head, config.temperature, rng.child(4, t, qi, 0))
            probs_all.extend(mask_pos.probs)
            for ni, n_sub in enumerate(neg_subs):
                s_neg, mask_neg = predict_query(n_sub, z, model.table, model.gnn, model.fusion,
                                                model.head, config.temperature,
                                                rng.child(4, t, qi, 1 + ni))
                probs_all.extend(mask_neg.probs)
                pos_scores.append(s_pos)
                neg_scores.append(s_neg)
        rank_terms.append(margin_ranking_loss(pos_scores, neg_scores, config.margin))
        mask_terms.append(mask_kl(probs_all, config.tau))
        n_pairs = len(pos_scores)

    inv_t = 1.0 / config.T
    ranking = ad.sum_tensors(rank_terms) * inv_t
    kl_mask = ad.sum_tensors(mask_terms) * inv_t
    total = ranking + kl_z * config.w_z + kl_mask * config.w_mask

    report = LossReport(
        total=float(total.data), ranking=float(ranking.data), kl_z=float(kl_z.data),
        kl_mask=float(kl_mask.data), relation=task.relation, K=len(task.support),
        n_pairs=n_pairs, edge_counts=edge_counts,
        encoder_calls_support=calls_support,
        encoder_calls_query=model.gnn.invocations - calls_before - calls_support,
        mask_edges=sum(len(s) for s in subs["query"]) + sum(len(s) for negs in subs["query_neg"] for s in negs),
        tau=config.tau,
    )
    return total, report


@dataclass
class TrainResult:
    model: Model
    metrics_rows: list[dict]
    best_val_mrr: float | None
    episodes_run: int


def train(kg: KnowledgeGraph, train_pools: list[tuple[int | str, list]],
          config: TrainConfig, valid_tasks: list[FewShotTask] | None = None,
          model: Model | None = None, out_dir=None, log=None) -> TrainResult:
    """Episodic loop: sample relation -> build task -> loss -> backward -> Adam.

    Validation (when tasks are given) runs every ``val_every`` episodes and
    drives model selection plus early stopping by MRR; the best parameters
    are restored before returning. Writes ``checkpoint.json`` and
    ``metrics.jsonl`` under ``out_dir`` when given.
    """
    from .evaluation import evaluate_split  # local import, avoids a cycle

    if not train_pools:
        raise DataError("no training relations available")
    if model is None:
        model = Model(kg.relation_names, ModelDims(config.d_edge, config.d_z, config.L),
                      init_seed=config.seed)
    master = EpisodeRng(config.seed)
    rows: list[dict] = []
    best_mrr = None
    best_state = None
    rounds_since_best = 0
    episodes = 0

    for ep in range(config.max_epochs):
        ep_rng = master.child(1, ep)
        relation, pool = ep_rng.child(0).choice(train_pools)
        task = sample_task(kg, relation, pool, config.K, ep_rng.child(1),
                           n_negatives=config.n, max_queries=config.max_queries)
        total, report = episode_loss(kg, task, model, config, ep_rng.child(2))
        if not np.isfinite(report.total):
            raise NumericError(f"non-finite loss at episode {ep} "
                               f"(relation={report.relation!r}, ranking={report.ranking}, "
                               f"kl_z={report.kl_z}, kl_mask={report.kl_mask})")
        model.store.zero_grad()
        backward(total)
        adam_step(model.store, config.lr)
        episodes = ep + 1

        if valid_tasks and (ep + 1) % config.val_every == 0:
            metrics = evaluate_split(kg, model, valid_tasks, config)
            row = {"episode": ep + 1, "ranking": report.ranking, "kl_z": report.kl_z,
                   "kl_mask": report.kl_mask, "val_mrr": metrics.mrr}
            rows.append(row)
            if log:
                log(json.dumps(row, sort_keys=True))
            if best_mrr is None or metrics.mrr > best_mrr:
                best_mrr = metrics.mrr
                best_state = model.store.state_dict()
                rounds_since_best = 0
            else:
                rounds_since_best += 1
                if rounds_since_best >= config.patience:
                    break

    if best_state is not None:
        model.store.load_state_dict(best_state)

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(model, out_dir / "checkpoint.json")
        with open(out_dir / "metrics.jsonl", "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    return TrainResult(model, rows, best_mrr, episodes)
