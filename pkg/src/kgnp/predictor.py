"""Hypothesis-grounded edge masking and query scoring.

The sampled hypothesis is projected into edge-feature space and added to
each initial edge feature; a small MLP turns the fused vector into a
per-edge keep probability. Sampling those probabilities through the
binary-concrete relaxation yields a differentiable soft mask, and the
masked subgraph is re-encoded and compared to the hypothesis by cosine
similarity.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import GnnParams, LayerStates, RelationTable, encode_subgraph, init_edge_features
from .errors import ShapeError
from .kg import EnclosingSubgraph

LOGIT_CLAMP = 30.0


@dataclass
class FusionParams:
    proj_w: Tensor   # (d_z, d_edge)
    proj_b: Tensor
    mlp_w1: Tensor   # (d_edge, d_edge)
    mlp_b1: Tensor
    mlp_w2: Tensor   # (d_edge, 1)
    mlp_b2: Tensor


@dataclass
class ScoreHead:
    weight: Tensor   # (3*d_edge, d_z)
    bias: Tensor


@dataclass
class EdgeMask:
    """Per-edge keep probabilities and the sampled soft mask, both scalar tensors."""
    probs: list[Tensor]
    soft_mask: list[Tensor]
    temperature: float


@dataclass
class MaskedSubgraph:
    base: EnclosingSubgraph
    mask: EdgeMask


def fuse_hypothesis(edge_states: LayerStates, z, params: FusionParams) -> list[Tensor]:
    """Per-edge keep probability sigmoid(mlp(e_r + project(z)))."""
    z_edge = ad.linear(z.z, params.proj_w, params.proj_b)
    probs = []
    for e in edge_states.edge_states:
        if e.shape != z_edge.shape:
            raise ShapeError(f"edge feature {e.shape} vs projected hypothesis {z_edge.shape}")
        fused = e + z_edge
        hidden = ad.relu(ad.linear(fused, params.mlp_w1, params.mlp_b1))
        logit = ad.reduce_sum(ad.linear(hidden, params.mlp_w2, params.mlp_b2))
        probs.append(ad.sigmoid(logit))
    return probs


def sample_mask(probs: list[Tensor], temperature: float, rng,
                deterministic: bool = False) -> EdgeMask:
    """Relaxed Bernoulli draw per edge on the logit of its keep probability.

    Probabilities at exactly 0 or 1 are clamped so the logit stays within
    +-30. With ``deterministic`` the Gumbel noise is skipped, which at
    temperature 1 returns the probabilities themselves (used at evaluation
    and explanation time).
    """
    soft = []
    for p in probs:
        safe = ad.clip(p, ad._stable_sigmoid(-LOGIT_CLAMP), ad._stable_sigmoid(LOGIT_CLAMP))
        logit = ad.clip(ad.log(safe) - ad.log(1.0 - safe), -LOGIT_CLAMP, LOGIT_CLAMP)
        if deterministic:
            soft.append(ad.sigmoid(logit * (1.0 / temperature)))
        else:
            soft.append(ad.gumbel_sigmoid(logit, temperature, rng))
    return EdgeMask(probs, soft, temperature)


def apply_mask(sub: EnclosingSubgraph, mask: EdgeMask) -> MaskedSubgraph:
    if len(mask.soft_mask) != len(sub.edges):
        raise ShapeError(f"mask length {len(mask.soft_mask)} != edge count {len(sub.edges)}")
    return MaskedSubgraph(sub, mask)


def score(masked: MaskedSubgraph, z, table: RelationTable, gnn: GnnParams,
          head: ScoreHead) -> Tensor:
    """Masked re-encode, project into hypothesis space, cosine against z.

    Zero-norm projections (or a zero-norm hypothesis) score 0 by the
    degenerate-direction convention of the cosine op.
    """
    emb = encode_subgraph(masked.base, table, gnn, mask=masked.mask.soft_mask)
    projected = ad.linear(emb.vector, head.weight, head.bias)
    return ad.cosine(projected, z.z)


def score_unmasked(sub: EnclosingSubgraph, z, table: RelationTable, gnn: GnnParams,
                   head: ScoreHead) -> Tensor:
    """Scoring path without masking; used by the identity-mask checks."""
    emb = encode_subgraph(sub, table, gnn)
    projected = ad.linear(emb.vector, head.weight, head.bias)
    return ad.cosine(projected, z.z)


def predict_query(sub: EnclosingSubgraph, z, table: RelationTable, gnn: GnnParams,
                  fusion: FusionParams, head: ScoreHead, temperature: float, rng,
                  deterministic: bool = False) -> tuple[Tensor, EdgeMask]:
    """Full fuse -> sample -> mask -> score path for one query subgraph."""
    init_states = init_edge_features(sub, table)
    probs = fuse_hypothesis(init_states, z, fusion)
    mask = sample_mask(probs, temperature, rng, deterministic=deterministic)
    s = score(apply_mask(sub, mask), z, table, gnn, head)
    return s, mask
