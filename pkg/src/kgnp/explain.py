"""Materialize the per-edge keep probabilities into a hard explanatory subgraph.

Explanations use the task's prior hypothesis with the noise zeroed (z is the
prior mean) so the same checkpoint, task, and query always render the same
explanation. Edges partition into kept/dropped by a probability threshold
(or optionally the top-k rule); exports are byte-stable DOT or JSON.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .config import TrainConfig
from .errors import DataError
from .evaluation import task_prior
from .hypothesis import HypothesisSample, sample_hypothesis
from .kg import KnowledgeGraph, Triple, enclosing_subgraph
from .model import Model
from .predictor import fuse_hypothesis
from .encoder import init_edge_features
from .tasks import EpisodeRng, FewShotTask


@dataclass
class Explanation:
    query: Triple
    kept: list[tuple[Triple, float]]
    dropped: list[tuple[Triple, float]]
    threshold: float
    task_id: int
    seed: int
    empty_warning: bool = False

    def all_edges(self) -> list[tuple[Triple, float]]:
        return self.kept + self.dropped


def extract_explanation(kg: KnowledgeGraph, model: Model, task: FewShotTask,
                        query: Triple, config: TrainConfig, threshold: float = 0.5,
                        top_k: int | None = None) -> Explanation:
    """Partition the query subgraph's edges by keep probability.

    ``top_k`` switches from threshold semantics to keeping the k most
    probable edges. An empty subgraph yields empty edge lists with the
    warning flag set.
    """
    if not 0.0 < threshold < 1.0:
        raise DataError(f"threshold must lie in (0, 1), got {threshold}")
    rng = EpisodeRng(config.seed, (9500, task.task_id))
    prior = task_prior(kg, model, task, config, rng)
    z = sample_hypothesis(prior, eps=np.zeros(prior.mu.shape))
    sub = enclosing_subgraph(kg, query.head, query.tail, config.k,
                             exclude_relation=task.relation_id)
    if not sub.edges:
        return Explanation(query, [], [], threshold, task.task_id, config.seed,
                           empty_warning=True)
    probs = fuse_hypothesis(init_edge_features(sub, model.table), z, model.fusion)
    weighted = [(tr, float(p.data)) for tr, p in zip(sub.edges, probs)]
    if top_k is not None:
        order = sorted(range(len(weighted)), key=lambda i: (-weighted[i][1], i))
        keep_idx = set(order[:top_k])
        kept = [weighted[i] for i in sorted(keep_idx)]
        dropped = [weighted[i] for i in range(len(weighted)) if i not in keep_idx]
    else:
        kept = [(tr, p) for tr, p in weighted if p >= threshold]
        dropped = [(tr, p) for tr, p in weighted if p < threshold]
    return Explanation(query, kept, dropped, threshold, task.task_id, config.seed)


def _names(kg: KnowledgeGraph, tr: Triple) -> tuple[str, str, str]:
    rel = tr.relation if isinstance(tr.relation, str) else kg.relation_names[tr.relation]
    return kg.entity_names[tr.head], rel, kg.entity_names[tr.tail]


def explanation_to_dict(kg: KnowledgeGraph, exp: Explanation) -> dict:
    return {
        "query": list(_names(kg, exp.query)),
        "kept": [[*_names(kg, tr), p] for tr, p in exp.kept],
        "dropped": [[*_names(kg, tr), p] for tr, p in exp.dropped],
        "threshold": exp.threshold,
        "task_id": exp.task_id,
        "seed": exp.seed,
        "empty_warning": exp.empty_warning,
    }


def parse_explanation(kg: KnowledgeGraph, payload: dict) -> Explanation:
    """Inverse of the JSON export; relation names resolve back to ids when known."""
    def to_triple(h, r, t):
        rel = kg.relation_ids.get(r, r)
        return Triple(kg.entity_ids[h], rel, kg.entity_ids[t])

    return Explanation(
        query=to_triple(*payload["query"]),
        kept=[(to_triple(h, r, t), p) for h, r, t, p in payload["kept"]],
        dropped=[(to_triple(h, r, t), p) for h, r, t, p in payload["dropped"]],
        threshold=payload["threshold"],
        task_id=payload["task_id"],
        seed=payload["seed"],
        empty_warning=payload.get("empty_warning", False),
    )


def export_explanation(kg: KnowledgeGraph, exp: Explanation, fmt: str, path):
    """Write a DOT graph (kept edges solid with weights, dropped dashed) or JSON."""
    if fmt == "dot":
        text = to_dot(kg, exp)
    elif fmt == "json":
        text = json.dumps(explanation_to_dict(kg, exp), indent=1, sort_keys=True) + "\n"
    else:
        raise DataError(f"unknown explanation format {fmt!r} (expected 'dot' or 'json')")
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise DataError(f"cannot write explanation to {path}: {exc}") from exc


def to_dot(kg: KnowledgeGraph, exp: Explanation) -> str:
    h_name = kg.entity_names[exp.query.head]
    t_name = kg.entity_names[exp.query.tail]
    lines = ["digraph explanation {"]
    lines.append(f'  "{h_name}" [shape=doublecircle];')
    lines.append(f'  "{t_name}" [shape=doublecircle];')
    for tr, p in exp.kept:
        h, r, t = _names(kg, tr)
        lines.append(f'  "{h}" -> "{t}" [label="{r} ({p:.3f})", style=solid];')
    for tr, p in exp.dropped:
        h, r, t = _names(kg, tr)
        lines.append(f'  "{h}" -> "{t}" [label="{r} ({p:.3f})", style=dashed];')
    lines.append("}")
    return "\n".join(lines) + "\n"
