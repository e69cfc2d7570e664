"""Inductive few-shot knowledge-graph completion.

A support set of triples for a new relation is summarized into a Gaussian
over a latent hypothesis; sampled hypotheses drive stochastic edge masking
over each query's enclosing subgraph, and masked-subgraph/hypothesis cosine
similarity scores the query. Training maximizes a single evidence lower
bound combining a margin ranking term with two KL regularizers.
"""

from .config import TrainConfig, load_config
from .kg import (EnclosingSubgraph, KnowledgeGraph, Triple, add_inverse_edges,
                 build_graph, enclosing_subgraph, k_hop_neighbors, load_triples,
                 merge_graphs)
from .model import Model, ModelDims, load_checkpoint, save_checkpoint
from .tasks import EpisodeRng, FewShotTask, build_eval_candidates, corrupt_triple, sample_task
from .training import (LossReport, episode_loss, gaussian_kl, margin_ranking_loss,
                       mask_kl, train)
from .evaluation import MetricsReport, RankingResult, compute_metrics, evaluate_split, rank_query
from .explain import Explanation, export_explanation, extract_explanation

__version__ = "0.1.0"

__all__ = [
    "TrainConfig", "load_config",
    "KnowledgeGraph", "Triple", "EnclosingSubgraph", "load_triples", "build_graph",
    "merge_graphs", "add_inverse_edges", "k_hop_neighbors", "enclosing_subgraph",
    "Model", "ModelDims", "load_checkpoint", "save_checkpoint",
    "EpisodeRng", "FewShotTask", "sample_task", "corrupt_triple", "build_eval_candidates",
    "LossReport", "episode_loss", "gaussian_kl", "mask_kl", "margin_ranking_loss", "train",
    "MetricsReport", "RankingResult", "compute_metrics", "evaluate_split", "rank_query",
    "Explanation", "extract_explanation", "export_explanation",
    "__version__",
]
